#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/anode.hpp"
#include "gridode/common.hpp"
#include "gridode/data.hpp"
#include "gridode/nn.hpp"

namespace gridode::hpo {

/// Random-search space: categorical choices for the dynamics-net depth and
/// widths plus the activation, log-uniform learning rate.
struct SearchSpace {
  std::vector<int> rhs_depths{1, 2, 4};
  std::vector<Eigen::Index> rhs_widths{32, 64, 128, 256, 512, 1024};
  std::vector<Eigen::Index> enc_widths{32, 64, 128, 256, 512, 1024};
  double lr_min = 1e-4;
  double lr_max = 1e-2;
  std::vector<nn::Activation> activations{
      nn::Activation::Softplus, nn::Activation::Gelu, nn::Activation::Silu};

  void validate() const {
    require(!rhs_depths.empty() && !rhs_widths.empty() && !enc_widths.empty() &&
                !activations.empty(),
            "search space has an empty dimension");
    require(lr_min > 0.0 && lr_max >= lr_min, "bad learning-rate interval");
  }
};

struct TrialConfig {
  int rhs_depth = 1;
  Eigen::Index rhs_hidden = 64;
  Eigen::Index enc_hidden = 64;
  double lr = 1e-3;
  nn::Activation act = nn::Activation::Silu;
};

/// Draw order is fixed (depth, dynamics width, encoder width, activation,
/// then learning rate), so a seeded generator reproduces the trial list.
inline TrialConfig sample_config(const SearchSpace& space, Rng& rng) {
  space.validate();
  TrialConfig c;
  c.rhs_depth = space.rhs_depths[rng.uniform_index(space.rhs_depths.size())];
  c.rhs_hidden = space.rhs_widths[rng.uniform_index(space.rhs_widths.size())];
  c.enc_hidden = space.enc_widths[rng.uniform_index(space.enc_widths.size())];
  c.act = space.activations[rng.uniform_index(space.activations.size())];
  c.lr = std::pow(10.0, rng.uniform(std::log10(space.lr_min),
                                    std::log10(space.lr_max)));
  return c;
}

/// Keep only candidates inside the best quartile once enough evidence
/// exists: with fewer than four completed reference metrics never prune;
/// otherwise prune iff the candidate is strictly worse than the 25th
/// percentile (linear interpolation, lower is better).
inline bool should_prune(double candidate_metric,
                         const std::vector<double>& completed_metrics) {
  if (completed_metrics.size() < 4) return false;
  return candidate_metric > linear_percentile(completed_metrics, 0.25);
}

enum class TrialStatus { Running, Pruned, Complete, Failed };

inline std::string trial_status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::Running: return "running";
    case TrialStatus::Pruned: return "pruned";
    case TrialStatus::Complete: return "complete";
    case TrialStatus::Failed: return "failed";
  }
  fail("bad trial status");
}

struct Trial {
  int index = 0;
  TrialConfig config;
  std::vector<double> checkpoints;  // test metric at each checkpoint
  TrialStatus status = TrialStatus::Running;
  int pruned_at = -1;  // checkpoint ordinal where pruning struck
  double final_metric = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct Study {
  std::vector<Trial> trials;
  int best_index = -1;
  std::uint64_t seed = 0;
};

/// A trial runner trains one configuration. It must call `checkpoint` with
/// the current test metric at every checkpoint; a false return means the
/// engine pruned the trial and the runner should abandon it (return NaN).
/// On completion it returns the final test metric of the selected model.
using TrialRunner = std::function<double(
    int trial_index, const TrialConfig& config,
    const std::function<bool(double)>& checkpoint)>;

/// Runs `n_trials` random-search trials against an injectable objective.
/// Trial configs are all drawn upfront from the seed, so the sampled list
/// never depends on scheduling; with one thread the whole table is
/// deterministic.
inline Study run_study_with_runner(const SearchSpace& space, int n_trials,
                                   std::uint64_t seed,
                                   const TrialRunner& runner,
                                   int threads = 1) {
  require(n_trials >= 1, "need at least one trial");
  require(threads >= 1, "need at least one thread");
  Study study;
  study.seed = seed;
  Rng rng(seed);
  study.trials.resize(static_cast<std::size_t>(n_trials));
  for (int i = 0; i < n_trials; ++i) {
    study.trials[static_cast<std::size_t>(i)].index = i;
    study.trials[static_cast<std::size_t>(i)].config = sample_config(space, rng);
  }

  std::mutex table_mutex;
  int next_trial = 0;

  const auto worker = [&]() {
    for (;;) {
      int i;
      {
        std::lock_guard<std::mutex> lock(table_mutex);
        if (next_trial >= n_trials) return;
        i = next_trial++;
      }
      Trial& trial = study.trials[static_cast<std::size_t>(i)];
      const auto checkpoint = [&](double metric) {
        std::lock_guard<std::mutex> lock(table_mutex);
        trial.checkpoints.push_back(metric);
        const auto ordinal = trial.checkpoints.size() - 1;
        std::vector<double> completed;
        for (const auto& other : study.trials)
          if (other.status == TrialStatus::Complete &&
              other.checkpoints.size() > ordinal)
            completed.push_back(other.checkpoints[ordinal]);
        if (should_prune(metric, completed)) {
          trial.status = TrialStatus::Pruned;
          trial.pruned_at = static_cast<int>(ordinal);
          return false;
        }
        return true;
      };
      try {
        const double final_metric = runner(i, trial.config, checkpoint);
        std::lock_guard<std::mutex> lock(table_mutex);
        if (trial.status != TrialStatus::Pruned) {
          trial.final_metric = final_metric;
          trial.status = TrialStatus::Complete;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(table_mutex);
        trial.status = TrialStatus::Failed;
        trial.error = e.what();
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& trial : study.trials) {
    if (trial.status == TrialStatus::Complete && trial.final_metric < best) {
      best = trial.final_metric;
      study.best_index = trial.index;
    }
  }
  return study;
}

inline std::string trial_table_csv(const Study& study) {
  std::size_t max_ckpts = 0;
  for (const auto& t : study.trials)
    max_ckpts = std::max(max_ckpts, t.checkpoints.size());
  std::string out =
      "trial,status,rhs_depth,rhs_hidden,enc_hidden,activation,lr,pruned_at,"
      "final_metric";
  for (std::size_t c = 0; c < max_ckpts; ++c)
    out += ",ckpt_" + std::to_string(c);
  out += "\n";
  for (const auto& t : study.trials) {
    out += std::to_string(t.index) + "," + trial_status_name(t.status) + "," +
           std::to_string(t.config.rhs_depth) + "," +
           std::to_string(t.config.rhs_hidden) + "," +
           std::to_string(t.config.enc_hidden) + "," +
           nn::activation_name(t.config.act) + "," + format_double(t.config.lr) +
           "," + std::to_string(t.pruned_at) + "," +
           (std::isnan(t.final_metric) ? std::string("")
                                       : format_double(t.final_metric));
    for (std::size_t c = 0; c < max_ckpts; ++c)
      out += "," + (c < t.checkpoints.size()
                        ? format_double(t.checkpoints[c])
                        : std::string(""));
    out += "\n";
  }
  return out;
}

inline nlohmann::json study_manifest(const Study& study,
                                     const SearchSpace& space, int n_trials) {
  nlohmann::json doc;
  doc["seed"] = study.seed;
  doc["n_trials"] = n_trials;
  std::vector<std::string> acts;
  for (const auto a : space.activations) acts.push_back(nn::activation_name(a));
  doc["space"] = {{"rhs_depths", space.rhs_depths},
                  {"rhs_widths", space.rhs_widths},
                  {"enc_widths", space.enc_widths},
                  {"lr_min", space.lr_min},
                  {"lr_max", space.lr_max},
                  {"activations", acts}};
  if (study.best_index >= 0) {
    const auto& b = study.trials[static_cast<std::size_t>(study.best_index)];
    doc["best"] = {{"trial", b.index},
                   {"rhs_depth", b.config.rhs_depth},
                   {"rhs_hidden", b.config.rhs_hidden},
                   {"enc_hidden", b.config.enc_hidden},
                   {"activation", nn::activation_name(b.config.act)},
                   {"lr", b.config.lr},
                   {"final_metric", b.final_metric}};
  }
  return doc;
}

/// Options for a study backed by real training runs.
struct StudyOptions {
  int n_trials = 8;
  std::uint64_t seed = 7;
  int max_epochs = 100;
  int patience = 50;
  int checkpoint_every = 10;  // epochs between pruning checkpoints
  Eigen::Index batch_size = 256;
  Eigen::Index micro_batch = 32;
  int threads = 1;
};

/// Random search over real trainings: each trial instantiates the base
/// architecture with the sampled hyperparameters, trains on the train
/// split with validation-based selection, reports the test metric every
/// `checkpoint_every` epochs for pruning, and scores the selected model on
/// the test split. Fails if no trial completes.
inline Study run_study(const SearchSpace& space,
                       const anode::AnodeConfig& base_config,
                       const data::Dataset& train_set,
                       const data::Dataset& validation_set,
                       const data::Dataset& test_set,
                       const StudyOptions& options) {
  require(options.max_epochs >= 1 && options.checkpoint_every >= 1,
          "bad study options");
  const TrialRunner runner = [&](int trial_index, const TrialConfig& trial,
                                 const std::function<bool(double)>& checkpoint) {
    anode::AnodeConfig config = base_config;
    config.rhs_depth = trial.rhs_depth;
    config.rhs_hidden = trial.rhs_hidden;
    config.enc_hidden = trial.enc_hidden;
    config.rhs_act = trial.act;
    auto model = anode::AnodeModel::create(config);
    model.init(options.seed + 1000 + static_cast<std::uint64_t>(trial_index));

    anode::TrainOptions topt;
    topt.max_epochs = options.max_epochs;
    topt.patience = options.patience;
    topt.lr = trial.lr;
    topt.seed = options.seed + 2000 + static_cast<std::uint64_t>(trial_index);
    topt.batch_size = options.batch_size;
    topt.micro_batch = options.micro_batch;
    bool pruned = false;
    topt.on_epoch = [&](int epoch, double, double) {
      if ((epoch + 1) % options.checkpoint_every != 0) return true;
      const double metric = anode::evaluate(model, test_set).mse;
      if (!checkpoint(metric)) {
        pruned = true;
        return false;
      }
      return true;
    };
    anode::train(model, train_set, validation_set, topt);
    if (pruned) return std::numeric_limits<double>::quiet_NaN();
    return anode::evaluate(model, test_set).mse;
  };

  Study study = run_study_with_runner(space, options.n_trials, options.seed,
                                      runner, options.threads);
  if (study.best_index < 0)
    fail("no hyperparameter trial completed; trial table:\n" +
         trial_table_csv(study));
  return study;
}

}  // namespace gridode::hpo
