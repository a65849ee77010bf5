#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gridode/common.hpp"
#include "gridode/dynamics.hpp"

namespace gridode::report {

/// Prediction-error windows after a step: short (0, 1.5] s, medium
/// (1.5, 3] s and long (3, 5] s. With a 10 ms sample time these are
/// prediction steps 1-150, 151-300 and 301-500.
inline constexpr std::array<std::pair<double, double>, 3> kBracketEdges{
    {{0.0, 1.5}, {1.5, 3.0}, {3.0, 5.0}}};

inline const char* bracket_name(std::size_t b) {
  static const char* names[3] = {"short", "medium", "long"};
  return names[b];
}

/// 0-based prediction-step ranges [begin, end) per bracket; a bracket that
/// the horizon does not fully cover is absent.
inline std::array<std::optional<std::pair<Eigen::Index, Eigen::Index>>, 3>
bracket_ranges(Eigen::Index horizon, double dt) {
  require(dt > 0.0, "dt must be positive");
  std::array<std::optional<std::pair<Eigen::Index, Eigen::Index>>, 3> out;
  for (std::size_t b = 0; b < 3; ++b) {
    // prediction index k (0-based) sits at time (k+1)*dt past the anchor
    const auto begin = static_cast<Eigen::Index>(
        std::ceil(kBracketEdges[b].first / dt - 1.0 + 1e-9));
    const auto end = static_cast<Eigen::Index>(
        std::floor(kBracketEdges[b].second / dt + 1e-9));
    if (end <= horizon && end > begin) out[b] = {begin, end};
  }
  return out;
}

/// Pooled RMSE of one quantity class per bracket: square errors over all
/// channels and bracket steps, mean, root. Units follow the inputs.
inline std::array<std::optional<double>, 3> bracket_rmse(
    const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& truth,
    double dt) {
  require(prediction.rows() == truth.rows() &&
              prediction.cols() == truth.cols(),
          "prediction/truth shape mismatch");
  const auto ranges = bracket_ranges(prediction.cols(), dt);
  std::array<std::optional<double>, 3> out;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!ranges[b]) continue;
    const auto [begin, end] = *ranges[b];
    const auto width = end - begin;
    const double sq = (prediction.middleCols(begin, width) -
                       truth.middleCols(begin, width))
                          .squaredNorm();
    out[b] = std::sqrt(
        sq / static_cast<double>(width * prediction.rows()));
  }
  return out;
}

/// Angular velocities of every node from measured outputs: generator
/// frequency is itself an output; inverter frequency follows from the
/// droop law applied to the filtered power and its setpoint trace.
inline Eigen::MatrixXd reconstruct_frequencies(
    const dynamics::SystemModel& model, const Eigen::MatrixXd& outputs,
    const Eigen::MatrixXd& p_d) {
  const Eigen::Index n = model.n_nodes();
  const Eigen::Index T = outputs.cols();
  require(outputs.rows() == model.n_outputs(), "output channel mismatch");
  require(p_d.rows() == model.n_inputs() && p_d.cols() == T,
          "setpoint trace missing or misaligned");
  Eigen::MatrixXd omega(n, T);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& unit = model.units[static_cast<std::size_t>(i)];
    if (const auto* gfi = std::get_if<dynamics::GfiParams>(&unit)) {
      for (Eigen::Index k = 0; k < T; ++k)
        omega(i, k) = dynamics::gfi_frequency(*gfi, outputs(2 * i, k),
                                              p_d(i, k));
    } else {
      omega.row(i) = outputs.row(2 * i);
    }
  }
  return omega;
}

/// Voltage-channel rows (one per node) of a measurement-ordered output
/// matrix.
inline Eigen::MatrixXd voltage_channels(const Eigen::MatrixXd& outputs) {
  require(outputs.rows() % 2 == 0, "outputs must pair (a_i, v_i) per node");
  Eigen::MatrixXd v(outputs.rows() / 2, outputs.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) = outputs.row(2 * i + 1);
  return v;
}

// ---------------------------------------------------------------------------
// Box statistics
// ---------------------------------------------------------------------------

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  // furthest datum within 1.5*IQR below q1
  double whisker_hi = 0.0;  // furthest datum within 1.5*IQR above q3
  std::vector<double> outliers;
};

inline BoxStats box_stats(const std::vector<double>& values) {
  require(!values.empty(), "box statistics of an empty set");
  BoxStats stats;
  stats.median = linear_percentile(values, 0.5);
  stats.q1 = linear_percentile(values, 0.25);
  stats.q3 = linear_percentile(values, 0.75);
  const double iqr = stats.q3 - stats.q1;
  const double lo_fence = stats.q1 - 1.5 * iqr;
  const double hi_fence = stats.q3 + 1.5 * iqr;
  stats.whisker_lo = stats.q3;
  stats.whisker_hi = stats.q1;
  bool any_inside = false;
  for (const double v : values) {
    if (v < lo_fence || v > hi_fence) {
      stats.outliers.push_back(v);
      continue;
    }
    if (!any_inside) {
      stats.whisker_lo = stats.whisker_hi = v;
      any_inside = true;
    } else {
      stats.whisker_lo = std::min(stats.whisker_lo, v);
      stats.whisker_hi = std::max(stats.whisker_hi, v);
    }
  }
  if (!any_inside) {  // degenerate: everything flagged; clip to the data
    stats.whisker_lo = stats.q1;
    stats.whisker_hi = stats.q3;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

struct SampleBrackets {
  std::array<std::optional<double>, 3> voltage;
  std::array<std::optional<double>, 3> omega;
};

inline std::string brackets_csv(const std::vector<SampleBrackets>& rows) {
  std::string out =
      "sample,voltage_short,voltage_medium,voltage_long,omega_short,"
      "omega_medium,omega_long\n";
  const auto cell = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("");
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += std::to_string(i);
    for (std::size_t b = 0; b < 3; ++b) out += "," + cell(rows[i].voltage[b]);
    for (std::size_t b = 0; b < 3; ++b) out += "," + cell(rows[i].omega[b]);
    out += "\n";
  }
  return out;
}

inline std::string box_summary_csv(
    const std::vector<std::tuple<std::string, std::string, BoxStats>>& rows) {
  std::string out =
      "class,bracket,median,q1,q3,whisker_lo,whisker_hi,outliers\n";
  for (const auto& [cls, bracket, stats] : rows) {
    out += cls + "," + bracket + "," + format_double(stats.median) + "," +
           format_double(stats.q1) + "," + format_double(stats.q3) + "," +
           format_double(stats.whisker_lo) + "," +
           format_double(stats.whisker_hi) + "," +
           std::to_string(stats.outliers.size()) + "\n";
  }
  return out;
}

/// Per-channel true/measured/predicted traces against time, one header
/// triplet per channel (e.g. true_v_1, measured_v_1, predicted_v_1).
inline std::string overlay_csv(const Eigen::VectorXd& t,
                               const std::vector<std::string>& channel_names,
                               const Eigen::MatrixXd& truth,
                               const Eigen::MatrixXd& measured,
                               const Eigen::MatrixXd& predicted) {
  const Eigen::Index C = truth.rows();
  const Eigen::Index T = truth.cols();
  require(static_cast<Eigen::Index>(channel_names.size()) == C,
          "channel name count mismatch");
  require(measured.rows() == C && predicted.rows() == C &&
              measured.cols() == T && predicted.cols() == T && t.size() == T,
          "overlay shape mismatch");
  std::string out = "t";
  for (const auto& name : channel_names)
    out += ",true_" + name + ",measured_" + name + ",predicted_" + name;
  out += "\n";
  for (Eigen::Index k = 0; k < T; ++k) {
    out += format_double(t(k));
    for (Eigen::Index c = 0; c < C; ++c)
      out += "," + format_double(truth(c, k)) + "," +
             format_double(measured(c, k)) + "," +
             format_double(predicted(c, k));
    out += "\n";
  }
  return out;
}

}  // namespace gridode::report
