#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/common.hpp"
#include "gridode/dynamics.hpp"

namespace gridode::sim {

/// One classic fourth-order Runge-Kutta step. The combination is applied
/// left to right; other evaluation orders give different last-bit rounding.
template <typename Rhs>
Eigen::VectorXd rk4_step(const Rhs& f, const Eigen::VectorXd& x, double t,
                         double dt) {
  const Eigen::VectorXd k1 = f(x, t);
  const Eigen::VectorXd k2 = f(x + (dt / 2.0) * k1, t + dt / 2.0);
  const Eigen::VectorXd k3 = f(x + (dt / 2.0) * k2, t + dt / 2.0);
  const Eigen::VectorXd k4 = f(x + dt * k3, t + dt);
  return ((((x + (dt / 6.0) * k1) + (dt / 3.0) * k2) + (dt / 3.0) * k3) +
          (dt / 6.0) * k4);
}

/// Piecewise-constant input signal: u(t) equals the value attached to the
/// largest switch time <= t, or the base value before the first switch.
struct StepSchedule {
  Eigen::VectorXd base;
  std::vector<double> times;            // strictly increasing
  std::vector<Eigen::VectorXd> values;  // one per switch time

  Eigen::VectorXd value(double t) const {
    require(times.size() == values.size(), "schedule times/values mismatch");
    std::size_t lo = 0, hi = times.size();
    while (lo < hi) {  // first index with times[idx] > t
      const std::size_t mid = (lo + hi) / 2;
      if (times[mid] <= t)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo == 0 ? base : values[lo - 1];
  }

  void validate() const {
    require(times.size() == values.size(), "schedule times/values mismatch");
    for (std::size_t k = 1; k < times.size(); ++k)
      require(times[k] > times[k - 1], "schedule times must increase");
    for (const auto& v : values)
      require(v.size() == base.size(), "schedule value size mismatch");
  }
};

/// Random step excitation around a nominal input: at t = k * period for
/// k = 0, 1, ... while k * period < duration, every channel is redrawn
/// uniformly from [nominal - magnitude, nominal + magnitude].
inline StepSchedule generate_step_schedule(const Eigen::VectorXd& nominal,
                                           double duration, double period,
                                           double magnitude, Rng& rng) {
  require(duration > 0.0 && period > 0.0, "duration and period must be positive");
  require(magnitude >= 0.0, "magnitude must be >= 0");
  StepSchedule schedule;
  schedule.base = nominal;
  for (double t = 0.0; t < duration; t += period) {
    Eigen::VectorXd u(nominal.size());
    for (Eigen::Index c = 0; c < nominal.size(); ++c)
      u(c) = nominal(c) + rng.uniform(-magnitude, magnitude);
    schedule.times.push_back(t);
    schedule.values.push_back(std::move(u));
  }
  schedule.validate();
  return schedule;
}

/// Uniformly sampled closed-loop record. Columns are sample instants;
/// y holds the noise-free outputs.
struct Trajectory {
  Eigen::VectorXd t;
  Eigen::MatrixXd u;  // n_u x T
  Eigen::MatrixXd x;  // n_x x T
  Eigen::MatrixXd y;  // n_y x T
};

/// Integrates the network model under a piecewise-constant input, sampling
/// every dt. The input is held at its value from the left sample instant
/// across each step (zero-order hold).
inline Trajectory simulate(const dynamics::SystemModel& model,
                           const Eigen::VectorXd& x0,
                           const StepSchedule& input, double dt,
                           double duration) {
  require(dt > 0.0 && duration > 0.0, "dt and duration must be positive");
  require(x0.size() == model.n_states(), "initial state size mismatch");
  input.validate();
  require(input.base.size() == model.n_inputs(), "input width mismatch");

  const auto steps = static_cast<Eigen::Index>(std::llround(duration / dt));
  const Eigen::Index T = steps + 1;
  Trajectory traj;
  traj.t.resize(T);
  traj.u.resize(model.n_inputs(), T);
  traj.x.resize(model.n_states(), T);
  traj.y.resize(model.n_outputs(), T);

  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Eigen::VectorXd u = input.value(t);
    traj.t(k) = t;
    traj.u.col(k) = u;
    traj.x.col(k) = x;
    traj.y.col(k) = dynamics::output_map(model, x);
    if (k == steps) break;
    const auto rhs = [&](const Eigen::VectorXd& xs, double) {
      return dynamics::system_rhs(model, xs, u);
    };
    x = rk4_step(rhs, x, t, dt);
    if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > 1e6)
      fail("simulation diverged at t = " + format_double(t + dt));
  }
  return traj;
}

/// Adds white noise channel by channel at a fixed signal-to-noise ratio in
/// decibels (power ratio). Noise std is sigma_c * 10^(-snr/20) with sigma_c
/// the population std of that channel. An infinite ratio is a no-op; a
/// constant channel has no signal scale and is left untouched (reported in
/// the returned warning list).
inline std::vector<std::string> add_noise(Eigen::MatrixXd& signal,
                                          double snr_db, Rng& rng) {
  std::vector<std::string> warnings;
  if (std::isinf(snr_db) && snr_db > 0.0) return warnings;
  require(std::isfinite(snr_db), "snr must be finite or +inf");
  const auto T = signal.cols();
  require(T > 0, "empty signal");
  const double gain = std::pow(10.0, -snr_db / 20.0);
  for (Eigen::Index c = 0; c < signal.rows(); ++c) {
    const double mean = signal.row(c).mean();
    const double var =
        (signal.row(c).array() - mean).square().sum() / static_cast<double>(T);
    const double sigma = std::sqrt(var);
    if (sigma == 0.0) {
      warnings.push_back("channel " + std::to_string(c) +
                         " is constant; no noise added");
      continue;
    }
    for (Eigen::Index k = 0; k < T; ++k)
      signal(c, k) += sigma * gain * rng.normal();
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// CSV round trip
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(const Trajectory& traj,
                                 const std::string& path) {
  const auto T = traj.t.size();
  require(traj.u.cols() == T && traj.x.cols() == T && traj.y.cols() == T,
          "trajectory column count mismatch");
  std::string out;
  out.reserve(static_cast<std::size_t>(T) * 16 *
              static_cast<std::size_t>(1 + traj.u.rows() + traj.x.rows() +
                                       traj.y.rows()));
  out += "t";
  for (Eigen::Index r = 0; r < traj.u.rows(); ++r)
    out += ",u_" + std::to_string(r + 1);
  for (Eigen::Index r = 0; r < traj.x.rows(); ++r)
    out += ",x_" + std::to_string(r + 1);
  for (Eigen::Index r = 0; r < traj.y.rows(); ++r)
    out += ",y_" + std::to_string(r + 1);
  out += "\n";
  for (Eigen::Index k = 0; k < T; ++k) {
    out += format_double(traj.t(k));
    for (Eigen::Index r = 0; r < traj.u.rows(); ++r)
      out += "," + format_double(traj.u(r, k));
    for (Eigen::Index r = 0; r < traj.x.rows(); ++r)
      out += "," + format_double(traj.x(r, k));
    for (Eigen::Index r = 0; r < traj.y.rows(); ++r)
      out += "," + format_double(traj.y(r, k));
    out += "\n";
  }
  write_text_file(path, out);
}

inline Trajectory read_trajectory_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), "empty csv " + path);
  Eigen::Index n_u = 0, n_x = 0, n_y = 0;
  {
    std::istringstream hs(header);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        require(col == "t", "csv must start with a t column: " + path);
        first = false;
      } else if (col.rfind("u_", 0) == 0) {
        ++n_u;
      } else if (col.rfind("x_", 0) == 0) {
        ++n_x;
      } else if (col.rfind("y_", 0) == 0) {
        ++n_y;
      } else {
        fail("unknown csv column '" + col + "' in " + path);
      }
    }
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  const Eigen::Index width = 1 + n_u + n_x + n_y;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(width));
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
      row.push_back(std::stod(cell));
    require(static_cast<Eigen::Index>(row.size()) == width,
            "csv row width mismatch in " + path);
    rows.push_back(std::move(row));
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  require(T > 0, "csv has no data rows: " + path);
  Trajectory traj;
  traj.t.resize(T);
  traj.u.resize(n_u, T);
  traj.x.resize(n_x, T);
  traj.y.resize(n_y, T);
  for (Eigen::Index k = 0; k < T; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    Eigen::Index c = 0;
    traj.t(k) = row[static_cast<std::size_t>(c++)];
    for (Eigen::Index r = 0; r < n_u; ++r)
      traj.u(r, k) = row[static_cast<std::size_t>(c++)];
    for (Eigen::Index r = 0; r < n_x; ++r)
      traj.x(r, k) = row[static_cast<std::size_t>(c++)];
    for (Eigen::Index r = 0; r < n_y; ++r)
      traj.y(r, k) = row[static_cast<std::size_t>(c++)];
  }
  return traj;
}

inline nlohmann::json schedule_to_json(const StepSchedule& s) {
  nlohmann::json doc;
  doc["base"] = std::vector<double>(s.base.data(), s.base.data() + s.base.size());
  doc["times"] = s.times;
  auto& vals = doc["values"] = nlohmann::json::array();
  for (const auto& v : s.values)
    vals.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return doc;
}

inline StepSchedule schedule_from_json(const nlohmann::json& doc) {
  StepSchedule s;
  const auto base = doc.at("base").get<std::vector<double>>();
  s.base = Eigen::Map<const Eigen::VectorXd>(base.data(),
                                             static_cast<Eigen::Index>(base.size()));
  s.times = doc.at("times").get<std::vector<double>>();
  for (const auto& item : doc.at("values")) {
    const auto v = item.get<std::vector<double>>();
    s.values.push_back(Eigen::Map<const Eigen::VectorXd>(
        v.data(), static_cast<Eigen::Index>(v.size())));
  }
  s.validate();
  return s;
}

}  // namespace gridode::sim
