#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/common.hpp"
#include "gridode/sim.hpp"

namespace gridode::data {

/// Sliding-window geometry over a sampled trajectory. A window anchored at
/// index s sees `history` past outputs, the matching inputs, and predicts
/// `horizon` future outputs; anchors advance by `stride`. `first` moves the
/// first anchor (default: history, the earliest feasible).
struct WindowSpec {
  Eigen::Index history = 64;
  Eigen::Index horizon = 64;
  Eigen::Index stride = 16;
  Eigen::Index first = -1;

  Eigen::Index first_anchor() const { return first < 0 ? history : first; }

  void validate() const {
    require(history >= 1 && horizon >= 1 && stride >= 1,
            "window spec fields must be >= 1");
    require(first_anchor() >= history,
            "first window anchor must leave room for the history");
  }
};

/// Anchor indices s with s + horizon within the trajectory. A trajectory
/// too short for even one window yields an empty list and a warning.
inline std::vector<Eigen::Index> window_indices(
    Eigen::Index T_instants, const WindowSpec& spec,
    std::vector<std::string>* warnings = nullptr) {
  spec.validate();
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = spec.first_anchor(); s + spec.horizon <= T_instants - 1;
       s += spec.stride)
    starts.push_back(s);
  if (starts.empty() && warnings)
    warnings->push_back("trajectory of " + std::to_string(T_instants) +
                        " instants is too short for any window");
  return starts;
}

/// One training example. Inputs cover t_{s-H} .. t_{s+K} (the trailing
/// input is carried for completeness; the last rollout interval does not
/// consume it). The output history covers t_{s-H+1} .. t_s and the targets
/// t_{s+1} .. t_{s+K}.
struct Sample {
  Eigen::MatrixXd u;        // n_u x (H+K+1)
  Eigen::MatrixXd y_hist;   // n_y x H
  Eigen::MatrixXd targets;  // n_y x K
};

/// Slices one sample out of input/output matrices (columns are instants).
inline Sample build_sample(const Eigen::MatrixXd& u,
                           const Eigen::MatrixXd& y_hist_source,
                           const Eigen::MatrixXd& y_target_source,
                           Eigen::Index s, const WindowSpec& spec) {
  spec.validate();
  const Eigen::Index H = spec.history;
  const Eigen::Index K = spec.horizon;
  const Eigen::Index T = u.cols();
  require(y_hist_source.cols() == T && y_target_source.cols() == T,
          "sample source lengths differ");
  require(s >= H && s + K <= T - 1, "window out of range");
  Sample sample;
  sample.u = u.middleCols(s - H, H + K + 1);
  sample.y_hist = y_hist_source.middleCols(s - H + 1, H);
  sample.targets = y_target_source.middleCols(s + 1, K);
  return sample;
}

/// Per-channel affine normalization (z-score) with statistics taken from
/// the training data only. Channels with no spread keep scale 1 so the
/// transform stays invertible.
struct Normalizer {
  Eigen::VectorXd u_mean, u_scale, y_mean, y_scale;

  static Eigen::VectorXd channel_std(const Eigen::MatrixXd& m,
                                     const Eigen::VectorXd& mean) {
    Eigen::VectorXd s(m.rows());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double var = (m.row(r).array() - mean(r)).square().sum() /
                         static_cast<double>(m.cols());
      s(r) = std::sqrt(var);
      if (s(r) < 1e-12) s(r) = 1.0;
    }
    return s;
  }

  void fit(const Eigen::MatrixXd& u, const Eigen::MatrixXd& y) {
    require(u.cols() > 0 && y.cols() > 0, "cannot fit normalizer on nothing");
    u_mean = u.rowwise().mean();
    y_mean = y.rowwise().mean();
    u_scale = channel_std(u, u_mean);
    y_scale = channel_std(y, y_mean);
  }

  Eigen::MatrixXd apply_u(const Eigen::MatrixXd& u) const {
    return (u.colwise() - u_mean).array().colwise() / u_scale.array();
  }
  Eigen::MatrixXd apply_y(const Eigen::MatrixXd& y) const {
    return (y.colwise() - y_mean).array().colwise() / y_scale.array();
  }
  Eigen::MatrixXd invert_u(const Eigen::MatrixXd& u) const {
    return (u.array().colwise() * u_scale.array()).colwise() + u_mean.array();
  }
  Eigen::MatrixXd invert_y(const Eigen::MatrixXd& y) const {
    return (y.array().colwise() * y_scale.array()).colwise() + y_mean.array();
  }

  nlohmann::json to_json() const {
    const auto vec = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    return {{"u_mean", vec(u_mean)},
            {"u_scale", vec(u_scale)},
            {"y_mean", vec(y_mean)},
            {"y_scale", vec(y_scale)}};
  }

  static Normalizer from_json(const nlohmann::json& doc) {
    const auto vec = [](const nlohmann::json& j) {
      const auto v = j.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
          v.data(), static_cast<Eigen::Index>(v.size())));
    };
    Normalizer n;
    n.u_mean = vec(doc.at("u_mean"));
    n.u_scale = vec(doc.at("u_scale"));
    n.y_mean = vec(doc.at("y_mean"));
    n.y_scale = vec(doc.at("y_scale"));
    return n;
  }
};

/// Windowed view over one normalized trajectory. Samples are sliced on
/// demand; the bulk signal matrices are stored once.
struct Dataset {
  WindowSpec spec;
  std::vector<Eigen::Index> starts;
  Eigen::MatrixXd u;      // normalized inputs
  Eigen::MatrixXd y_enc;  // normalized noisy outputs (history source)
  Eigen::MatrixXd y_tgt;  // normalized target source
  Eigen::VectorXd t;      // sample instants of the source trajectory

  Eigen::Index size() const { return static_cast<Eigen::Index>(starts.size()); }

  Sample sample(Eigen::Index i) const {
    require(i >= 0 && i < size(), "sample index out of range");
    return build_sample(u, y_enc, y_tgt, starts[static_cast<std::size_t>(i)],
                        spec);
  }
};

/// Train/validation/test/evaluation split. The first three share one
/// window geometry and noisy targets; evaluation uses sparse long-horizon
/// windows and clean targets.
struct DatasetBundle {
  Dataset train, validation, test, eval;
  Eigen::Index batch_size = 256;
  Normalizer normalizer;
  std::vector<std::string> warnings;
};

struct MakeDatasetsOptions {
  WindowSpec fit_spec{64, 64, 16, -1};        // train/validation/test windows
  WindowSpec eval_spec{64, 500, 1000, 1000};  // anchors on the input steps
  double snr_db = 25.0;
  Eigen::Index batch_size = 256;
  std::uint64_t noise_seed = 2024;
};

inline Dataset make_one_dataset(const sim::Trajectory& traj,
                                const Normalizer& norm, const WindowSpec& spec,
                                const Eigen::MatrixXd& y_noisy,
                                bool clean_targets,
                                std::vector<std::string>& warnings) {
  Dataset ds;
  ds.spec = spec;
  ds.starts = window_indices(traj.t.size(), spec, &warnings);
  ds.u = norm.apply_u(traj.u);
  ds.y_enc = norm.apply_y(y_noisy);
  ds.y_tgt = clean_targets ? norm.apply_y(traj.y) : ds.y_enc;
  ds.t = traj.t;
  return ds;
}

/// Builds the four datasets from their source trajectories. Measurement
/// noise is drawn once per trajectory in a fixed order, so the result is
/// reproducible from the seed. Normalization statistics come from the
/// training trajectory alone.
inline DatasetBundle make_datasets(const sim::Trajectory& train_traj,
                                   const sim::Trajectory& validation_traj,
                                   const sim::Trajectory& test_traj,
                                   const sim::Trajectory& eval_traj,
                                   const MakeDatasetsOptions& options) {
  DatasetBundle bundle;
  bundle.batch_size = options.batch_size;
  Rng rng(options.noise_seed);

  const auto noisy = [&](const sim::Trajectory& traj) {
    Eigen::MatrixXd y = traj.y;
    auto w = sim::add_noise(y, options.snr_db, rng);
    bundle.warnings.insert(bundle.warnings.end(), w.begin(), w.end());
    return y;
  };
  const Eigen::MatrixXd y1 = noisy(train_traj);
  const Eigen::MatrixXd y2 = noisy(validation_traj);
  const Eigen::MatrixXd y3 = noisy(test_traj);
  const Eigen::MatrixXd y4 = noisy(eval_traj);

  bundle.normalizer.fit(train_traj.u, y1);

  bundle.train = make_one_dataset(train_traj, bundle.normalizer,
                                  options.fit_spec, y1, false, bundle.warnings);
  bundle.validation =
      make_one_dataset(validation_traj, bundle.normalizer, options.fit_spec,
                       y2, false, bundle.warnings);
  bundle.test = make_one_dataset(test_traj, bundle.normalizer,
                                 options.fit_spec, y3, false, bundle.warnings);
  bundle.eval = make_one_dataset(eval_traj, bundle.normalizer,
                                 options.eval_spec, y4, true, bundle.warnings);
  return bundle;
}

/// Index batches for one epoch: optional shuffle, then contiguous chunks;
/// the final batch keeps the remainder.
inline std::vector<std::vector<Eigen::Index>> make_batches(
    Eigen::Index n_samples, Eigen::Index batch_size, Rng& rng,
    bool shuffle = true) {
  require(n_samples >= 1 && batch_size >= 1, "empty batch plan");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_samples));
  for (Eigen::Index i = 0; i < n_samples; ++i)
    order[static_cast<std::size_t>(i)] = i;
  if (shuffle) rng.shuffle(order);
  std::vector<std::vector<Eigen::Index>> batches;
  for (Eigen::Index at = 0; at < n_samples; at += batch_size) {
    const auto count = std::min(batch_size, n_samples - at);
    batches.emplace_back(order.begin() + at, order.begin() + at + count);
  }
  return batches;
}

inline nlohmann::json window_spec_to_json(const WindowSpec& s) {
  return {{"history", s.history},
          {"horizon", s.horizon},
          {"stride", s.stride},
          {"first", s.first}};
}

inline WindowSpec window_spec_from_json(const nlohmann::json& doc) {
  WindowSpec s;
  s.history = doc.at("history");
  s.horizon = doc.at("horizon");
  s.stride = doc.at("stride");
  s.first = doc.value("first", -1);
  s.validate();
  return s;
}

}  // namespace gridode::data
