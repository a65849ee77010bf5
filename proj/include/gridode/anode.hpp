#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/common.hpp"
#include "gridode/data.hpp"
#include "gridode/nn.hpp"

namespace gridode::anode {

enum class ModelKind { TcnAnode, MlpAnode };

inline std::string model_kind_name(ModelKind k) {
  return k == ModelKind::TcnAnode ? "tcn-anode" : "mlp-anode";
}

inline ModelKind model_kind_from_name(const std::string& name) {
  if (name == "tcn-anode") return ModelKind::TcnAnode;
  if (name == "mlp-anode") return ModelKind::MlpAnode;
  fail("unknown model kind '" + name + "'");
}

/// Architecture of an identification model. The hidden state has
/// n_y + n_lat entries; `measured` lists the state positions visible at
/// the output (in measurement order) and `latent` the hidden positions
/// filled by the encoder. Together they partition the state.
struct AnodeConfig {
  ModelKind kind = ModelKind::TcnAnode;
  Eigen::Index n_u = 0;
  Eigen::Index n_y = 0;
  Eigen::Index n_lat = 0;
  std::vector<Eigen::Index> measured;  // size n_y
  std::vector<Eigen::Index> latent;    // size n_lat
  Eigen::Index history = 64;           // encoder window H
  double dt = 0.01;
  int rhs_depth = 1;                   // hidden layers of the dynamics net
  Eigen::Index rhs_hidden = 64;
  nn::Activation rhs_act = nn::Activation::Silu;
  Eigen::Index enc_hidden = 16;        // TCN channels / encoder MLP width
  int enc_depth = 1;                   // encoder MLP hidden layers
  int tcn_kernel = 2;
  int tcn_blocks = 0;                  // 0: minimal count covering `history`

  Eigen::Index n_x() const { return n_y + n_lat; }

  /// Default layout: measured slots first, latents appended.
  void default_layout() {
    measured.clear();
    latent.clear();
    for (Eigen::Index i = 0; i < n_y; ++i) measured.push_back(i);
    for (Eigen::Index i = 0; i < n_lat; ++i) latent.push_back(n_y + i);
  }

  void validate() const {
    require(n_u >= 1 && n_y >= 1 && n_lat >= 0, "bad model dimensions");
    require(static_cast<Eigen::Index>(measured.size()) == n_y &&
                static_cast<Eigen::Index>(latent.size()) == n_lat,
            "measured/latent lists must partition the state");
    std::vector<bool> hit(static_cast<std::size_t>(n_x()), false);
    for (const auto i : measured) {
      require(i >= 0 && i < n_x() && !hit[static_cast<std::size_t>(i)],
              "measured/latent lists must partition the state");
      hit[static_cast<std::size_t>(i)] = true;
    }
    for (const auto i : latent) {
      require(i >= 0 && i < n_x() && !hit[static_cast<std::size_t>(i)],
              "measured/latent lists must partition the state");
      hit[static_cast<std::size_t>(i)] = true;
    }
    require(history >= 1 && dt > 0.0, "bad history/dt");
  }
};

/// Identification model: an initial-state encoder (TCN over the input and
/// output history, or an MLP over the single current output) plus a fully
/// connected dynamics net integrated with fixed-step RK4. The output map
/// reads the measured state slots and is not learned.
struct AnodeModel {
  AnodeConfig config;
  nn::ParameterStore params;
  nn::Tcn enc_tcn;  // used when kind == TcnAnode and n_lat > 0
  nn::Mlp enc_mlp;  // used when kind == MlpAnode and n_lat > 0
  nn::Mlp rhs;

  static AnodeModel create(AnodeConfig config) {
    config.validate();
    AnodeModel model;
    if (config.n_lat > 0) {
      if (config.kind == ModelKind::TcnAnode) {
        nn::TcnSpec spec;
        spec.in_channels = config.n_u + config.n_y;
        spec.out_channels = config.n_lat;
        spec.hidden_channels = config.enc_hidden;
        spec.kernel_size = config.tcn_kernel;
        spec.blocks = config.tcn_blocks > 0
                          ? config.tcn_blocks
                          : nn::minimal_blocks(config.tcn_kernel, config.history);
        spec.act = nn::Activation::Relu;
        config.tcn_blocks = spec.blocks;
        model.enc_tcn = nn::Tcn::create(model.params, "enc", spec);
      } else {
        nn::MlpSpec spec;
        spec.in = config.n_y;
        spec.out = config.n_lat;
        spec.hidden = config.enc_hidden;
        spec.depth = config.enc_depth;
        spec.act = config.rhs_act;
        model.enc_mlp = nn::Mlp::create(model.params, "enc", spec);
      }
    }
    nn::MlpSpec rhs_spec;
    rhs_spec.in = config.n_x() + config.n_u;
    rhs_spec.out = config.n_x();
    rhs_spec.hidden = config.rhs_hidden;
    rhs_spec.depth = config.rhs_depth;
    rhs_spec.act = config.rhs_act;
    model.rhs = nn::Mlp::create(model.params, "rhs", rhs_spec);
    model.config = std::move(config);
    return model;
  }

  /// Deterministic initialization; the dynamics net's output layer starts
  /// small so early rollouts stay near the identity.
  void init(std::uint64_t seed) {
    Rng rng(seed);
    params.init_uniform(rng);
    params.view(rhs.weights.back()) *= 0.01;
    params.view(rhs.biases.back()) *= 0.01;
  }
};

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

/// Column-batched view of a set of samples.
struct Batch {
  Eigen::Index size = 0;
  Eigen::Index horizon = 0;
  Eigen::MatrixXd x_o;                   // n_y x B, outputs at the anchors
  std::vector<Eigen::MatrixXd> enc_in;   // per sample, (n_u+n_y) x H
  std::vector<Eigen::MatrixXd> u_step;   // K entries, n_u x B
  std::vector<Eigen::MatrixXd> targets;  // K entries, n_y x B
};

inline Batch assemble_batch(const data::Dataset& dataset,
                            const std::vector<Eigen::Index>& indices) {
  require(!indices.empty(), "empty batch");
  const Eigen::Index H = dataset.spec.history;
  const Eigen::Index K = dataset.spec.horizon;
  const Eigen::Index B = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index n_u = dataset.u.rows();
  const Eigen::Index n_y = dataset.y_enc.rows();
  Batch batch;
  batch.size = B;
  batch.horizon = K;
  batch.x_o.resize(n_y, B);
  batch.enc_in.reserve(static_cast<std::size_t>(B));
  batch.u_step.assign(static_cast<std::size_t>(K), Eigen::MatrixXd(n_u, B));
  batch.targets.assign(static_cast<std::size_t>(K), Eigen::MatrixXd(n_y, B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const data::Sample s = dataset.sample(indices[static_cast<std::size_t>(b)]);
    batch.x_o.col(b) = s.y_hist.col(H - 1);
    Eigen::MatrixXd enc(n_u + n_y, H);
    enc.topRows(n_u) = s.u.leftCols(H);
    enc.bottomRows(n_y) = s.y_hist;
    batch.enc_in.push_back(std::move(enc));
    for (Eigen::Index k = 0; k < K; ++k) {
      batch.u_step[static_cast<std::size_t>(k)].col(b) = s.u.col(H + k);
      batch.targets[static_cast<std::size_t>(k)].col(b) = s.targets.col(k);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Differentiable forward graph (shared by training and plain evaluation)
// ---------------------------------------------------------------------------

/// Initial-state assembly: measured slots copy the anchor outputs verbatim;
/// latent slots come from the encoder (or stay zero without one).
inline nn::Tape::NodeId encode_nodes(nn::Tape& tape, const AnodeModel& model,
                                     const Batch& batch) {
  const auto& cfg = model.config;
  const auto x_o = tape.constant(batch.x_o);
  auto x0 = tape.scatter_rows(x_o, cfg.measured, cfg.n_x());
  if (cfg.n_lat == 0) return x0;
  nn::Tape::NodeId latent;
  if (cfg.kind == ModelKind::TcnAnode) {
    std::vector<nn::Tape::NodeId> cols;
    cols.reserve(batch.enc_in.size());
    for (const auto& window : batch.enc_in) {
      require(window.cols() == cfg.history, "encoder window length mismatch");
      const auto seq = model.enc_tcn.forward(tape, tape.constant(window));
      cols.push_back(tape.select_cols(seq, cfg.history - 1, 1));
    }
    latent = tape.hstack(cols);
  } else {
    latent = model.enc_mlp.forward(tape, x_o);
  }
  return tape.add(x0, tape.scatter_rows(latent, cfg.latent, cfg.n_x()));
}

/// One RK4 interval of the learned dynamics with the input held constant.
inline nn::Tape::NodeId rollout_step_nodes(nn::Tape& tape,
                                           const AnodeModel& model,
                                           nn::Tape::NodeId x,
                                           nn::Tape::NodeId u) {
  const double dt = model.config.dt;
  const auto f = [&](nn::Tape::NodeId xs) {
    return model.rhs.forward(tape, tape.vstack(xs, u));
  };
  const auto k1 = f(x);
  const auto k2 = f(tape.add_scaled(x, dt / 2.0, k1));
  const auto k3 = f(tape.add_scaled(x, dt / 2.0, k2));
  const auto k4 = f(tape.add_scaled(x, dt, k3));
  return tape.add_scaled(
      tape.add_scaled(
          tape.add_scaled(tape.add_scaled(x, dt / 6.0, k1), dt / 3.0, k2),
          dt / 3.0, k3),
      dt / 6.0, k4);
}

/// Mean squared prediction error over a batch, Eq-style averaging: the sum
/// of squared channel errors over all samples and steps divided by
/// (batch size x horizon). `denominator_size` overrides the batch size in
/// the divisor so micro-batch losses add up to their full-batch loss.
inline nn::Tape::NodeId loss_nodes(nn::Tape& tape, const AnodeModel& model,
                                   const Batch& batch,
                                   Eigen::Index denominator_size = -1) {
  auto x = encode_nodes(tape, model, batch);
  nn::Tape::NodeId total{};
  bool first = true;
  for (Eigen::Index k = 0; k < batch.horizon; ++k) {
    const auto u = tape.constant(batch.u_step[static_cast<std::size_t>(k)]);
    x = rollout_step_nodes(tape, model, x, u);
    const auto y = tape.gather_rows(x, model.config.measured);
    const auto err = tape.add_scaled(
        y, -1.0, tape.constant(batch.targets[static_cast<std::size_t>(k)]));
    const auto sq = tape.sum_sq(err);
    total = first ? sq : tape.add(total, sq);
    first = false;
  }
  const auto denom = denominator_size > 0 ? denominator_size : batch.size;
  return tape.scale(total, 1.0 / static_cast<double>(denom * batch.horizon));
}

// ---------------------------------------------------------------------------
// Plain (no-gradient) forward passes
// ---------------------------------------------------------------------------

/// Initial states for a batch without gradient recording. Encoder windows
/// run on per-sample throwaway tapes, so memory stays flat for any batch.
inline Eigen::MatrixXd encode_initial_state(const AnodeModel& model,
                                            const Batch& batch) {
  const auto& cfg = model.config;
  auto* store = const_cast<nn::ParameterStore*>(&model.params);
  Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(cfg.n_x(), batch.size);
  for (std::size_t r = 0; r < cfg.measured.size(); ++r)
    x0.row(cfg.measured[r]) = batch.x_o.row(static_cast<Eigen::Index>(r));
  if (cfg.n_lat == 0) return x0;
  Eigen::MatrixXd latent(cfg.n_lat, batch.size);
  if (cfg.kind == ModelKind::TcnAnode) {
    for (Eigen::Index b = 0; b < batch.size; ++b) {
      const auto& window = batch.enc_in[static_cast<std::size_t>(b)];
      require(window.cols() == cfg.history, "encoder window length mismatch");
      nn::Tape tape(store, false);
      const auto seq = model.enc_tcn.forward(tape, tape.constant(window));
      latent.col(b) = tape.value(seq).col(cfg.history - 1);
    }
  } else {
    latent = model.enc_mlp.evaluate(model.params, batch.x_o);
  }
  for (std::size_t r = 0; r < cfg.latent.size(); ++r)
    x0.row(cfg.latent[r]) = latent.row(static_cast<Eigen::Index>(r));
  return x0;
}

/// Single-window convenience: histories as columns over time.
inline Eigen::VectorXd encode_initial_state(const AnodeModel& model,
                                            const Eigen::MatrixXd& u_hist,
                                            const Eigen::MatrixXd& y_hist) {
  const auto& cfg = model.config;
  require(u_hist.cols() == cfg.history && y_hist.cols() == cfg.history,
          "history must supply exactly the encoder window");
  require(u_hist.rows() == cfg.n_u && y_hist.rows() == cfg.n_y,
          "history channel mismatch");
  Batch batch;
  batch.size = 1;
  batch.horizon = 0;
  batch.x_o = y_hist.col(cfg.history - 1);
  Eigen::MatrixXd enc(cfg.n_u + cfg.n_y, cfg.history);
  enc.topRows(cfg.n_u) = u_hist;
  enc.bottomRows(cfg.n_y) = y_hist;
  batch.enc_in.push_back(std::move(enc));
  return encode_initial_state(model, batch).col(0);
}

/// Rolls the learned dynamics forward K intervals from x0 under the given
/// per-interval inputs; returns the measured outputs at every new instant.
/// Each interval runs on a small throwaway tape, so memory stays flat.
inline std::vector<Eigen::MatrixXd> rollout(
    const AnodeModel& model, const Eigen::MatrixXd& x0,
    const std::vector<Eigen::MatrixXd>& u_step) {
  require(!u_step.empty(), "rollout needs at least one interval");
  std::vector<Eigen::MatrixXd> outputs;
  outputs.reserve(u_step.size());
  Eigen::MatrixXd x = x0;
  auto* store = const_cast<nn::ParameterStore*>(&model.params);
  for (std::size_t k = 0; k < u_step.size(); ++k) {
    nn::Tape tape(store, false);
    const auto xn = rollout_step_nodes(tape, model, tape.constant(x),
                                       tape.constant(u_step[k]));
    x = tape.value(xn);
    if (!x.allFinite())
      fail("rollout produced a non-finite state at step " + std::to_string(k + 1));
    Eigen::MatrixXd y(model.config.n_y, x.cols());
    for (std::size_t r = 0; r < model.config.measured.size(); ++r)
      y.row(static_cast<Eigen::Index>(r)) = x.row(model.config.measured[r]);
    outputs.push_back(std::move(y));
  }
  return outputs;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
  std::vector<Eigen::MatrixXd> predictions;  // per sample, n_y x K (normalized)
  double mse = 0.0;
};

/// Pure forward evaluation over a whole dataset with the same averaging as
/// the training loss. Repeated calls give identical results.
inline Evaluation evaluate(const AnodeModel& model,
                           const data::Dataset& dataset) {
  require(dataset.size() > 0, "cannot evaluate an empty dataset");
  Evaluation result;
  result.predictions.resize(static_cast<std::size_t>(dataset.size()));
  const Eigen::Index K = dataset.spec.horizon;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(dataset.size()));
  for (Eigen::Index i = 0; i < dataset.size(); ++i)
    all[static_cast<std::size_t>(i)] = i;
  const Batch batch = assemble_batch(dataset, all);
  const Eigen::MatrixXd x0 = encode_initial_state(model, batch);
  const auto outputs = rollout(model, x0, batch.u_step);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch.size; ++b)
    result.predictions[static_cast<std::size_t>(b)].resize(
        model.config.n_y, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& yk = outputs[static_cast<std::size_t>(k)];
    total += (yk - batch.targets[static_cast<std::size_t>(k)]).squaredNorm();
    for (Eigen::Index b = 0; b < batch.size; ++b)
      result.predictions[static_cast<std::size_t>(b)].col(k) = yk.col(b);
  }
  result.mse = total / static_cast<double>(batch.size * K);
  return result;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int max_epochs = 1000;
  int patience = 50;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  Eigen::Index batch_size = 256;
  Eigen::Index micro_batch = 32;  // gradient-accumulation chunk
  // Optional per-epoch hook (epoch, train loss, validation loss); returning
  // false stops training (used by trial pruning).
  std::function<bool(int, double, double)> on_epoch;
};

struct TrainState {
  nn::AdamState adam;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> theta_best;
  std::vector<double> train_history;  // running loss per epoch
  std::vector<double> val_history;    // validation loss per epoch
  std::string stop_reason;
};

/// Full-gradient training through the unrolled integrator. Batches are
/// reshuffled every epoch from the seed; the model left in `model` is the
/// best-validation snapshot.
inline TrainState train(AnodeModel& model, const data::Dataset& train_set,
                        const data::Dataset& validation_set,
                        const TrainOptions& options) {
  require(train_set.size() > 0 && validation_set.size() > 0,
          "training needs non-empty datasets");
  require(options.max_epochs >= 1 && options.batch_size >= 1 &&
              options.micro_batch >= 1,
          "bad training options");
  TrainState state;
  Rng rng(options.seed);
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    const auto batches =
        data::make_batches(train_set.size(), options.batch_size, rng, true);
    double epoch_sq_sum = 0.0;  // loss weighted by batch size
    for (const auto& batch_indices : batches) {
      const auto B = static_cast<Eigen::Index>(batch_indices.size());
      model.params.zero_grad();
      double batch_loss = 0.0;
      for (Eigen::Index at = 0; at < B; at += options.micro_batch) {
        const auto count = std::min(options.micro_batch, B - at);
        const std::vector<Eigen::Index> micro(
            batch_indices.begin() + at, batch_indices.begin() + at + count);
        const Batch chunk = assemble_batch(train_set, micro);
        nn::Tape tape(&model.params, true);
        const auto loss_node = loss_nodes(tape, model, chunk, B);
        batch_loss += tape.scalar(loss_node);
        tape.backward(loss_node);
      }
      if (!std::isfinite(batch_loss))
        fail("training loss became non-finite at epoch " +
             std::to_string(epoch) + " (diverging dynamics or learning rate)");
      nn::adam_step(model.params, state.adam, options.lr);
      epoch_sq_sum += batch_loss * static_cast<double>(B);
    }
    const double train_loss =
        epoch_sq_sum / static_cast<double>(train_set.size());
    const double val_loss = evaluate(model, validation_set).mse;
    state.train_history.push_back(train_loss);
    state.val_history.push_back(val_loss);
    state.epochs_run = epoch + 1;
    if (val_loss < state.best_val) {
      state.best_val = val_loss;
      state.best_epoch = epoch;
      state.theta_best = model.params.theta();
    }
    if (options.on_epoch &&
        !options.on_epoch(epoch, train_loss, val_loss)) {
      state.stop_reason = "stopped by callback at epoch " + std::to_string(epoch);
      break;
    }
    if (epoch - state.best_epoch >= options.patience) {
      state.stop_reason = "no validation improvement for " +
                          std::to_string(options.patience) + " epochs";
      break;
    }
  }
  if (state.stop_reason.empty()) state.stop_reason = "epoch budget exhausted";
  require(!state.theta_best.empty(), "training never produced a snapshot");
  model.params.theta() = state.theta_best;
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const AnodeConfig& c) {
  return {{"kind", model_kind_name(c.kind)},
          {"n_u", c.n_u},
          {"n_y", c.n_y},
          {"n_lat", c.n_lat},
          {"measured", c.measured},
          {"latent", c.latent},
          {"history", c.history},
          {"dt", c.dt},
          {"rhs_depth", c.rhs_depth},
          {"rhs_hidden", c.rhs_hidden},
          {"rhs_act", nn::activation_name(c.rhs_act)},
          {"enc_hidden", c.enc_hidden},
          {"enc_depth", c.enc_depth},
          {"tcn_kernel", c.tcn_kernel},
          {"tcn_blocks", c.tcn_blocks}};
}

inline AnodeConfig config_from_json(const nlohmann::json& doc) {
  AnodeConfig c;
  c.kind = model_kind_from_name(doc.at("kind"));
  c.n_u = doc.at("n_u");
  c.n_y = doc.at("n_y");
  c.n_lat = doc.at("n_lat");
  c.measured = doc.at("measured").get<std::vector<Eigen::Index>>();
  c.latent = doc.at("latent").get<std::vector<Eigen::Index>>();
  c.history = doc.at("history");
  c.dt = doc.at("dt");
  c.rhs_depth = doc.at("rhs_depth");
  c.rhs_hidden = doc.at("rhs_hidden");
  c.rhs_act = nn::activation_from_name(doc.at("rhs_act"));
  c.enc_hidden = doc.at("enc_hidden");
  c.enc_depth = doc.at("enc_depth");
  c.tcn_kernel = doc.at("tcn_kernel");
  c.tcn_blocks = doc.at("tcn_blocks");
  c.validate();
  return c;
}

/// Writes <base>.json (architecture, slice table, normalizer, metadata) and
/// <base>.bin (the flat parameter vector, little endian).
inline void save_checkpoint(const AnodeModel& model,
                            const data::Normalizer& normalizer,
                            const std::string& base,
                            const nlohmann::json& meta = {}) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint blobs assume a little-endian host");
  nlohmann::json doc;
  doc["kind"] = model_kind_name(model.config.kind);
  doc["config"] = config_to_json(model.config);
  auto& slices = doc["slices"] = nlohmann::json::array();
  for (std::size_t i = 0; i < model.params.slice_count(); ++i) {
    const auto& s = model.params.slice(i);
    slices.push_back({{"name", s.name},
                      {"offset", s.offset},
                      {"rows", s.rows},
                      {"cols", s.cols}});
  }
  doc["normalizer"] = normalizer.to_json();
  doc["meta"] = meta;
  write_text_file(base + ".json", doc.dump(2) + "\n");
  std::ofstream blob(base + ".bin", std::ios::binary);
  require(blob.good(), "cannot write " + base + ".bin");
  const auto& theta = model.params.theta();
  blob.write(reinterpret_cast<const char*>(theta.data()),
             static_cast<std::streamsize>(theta.size() * sizeof(double)));
  require(blob.good(), "short write to " + base + ".bin");
}

struct Checkpoint {
  AnodeModel model;
  data::Normalizer normalizer;
  nlohmann::json meta;
};

inline Checkpoint load_checkpoint(const std::string& base) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint blobs assume a little-endian host");
  const auto doc = nlohmann::json::parse(read_text_file(base + ".json"));
  Checkpoint ckpt;
  ckpt.model = AnodeModel::create(config_from_json(doc.at("config")));
  const auto& slices = doc.at("slices");
  require(slices.size() == ckpt.model.params.slice_count(),
          "checkpoint slice table mismatch");
  for (std::size_t i = 0; i < ckpt.model.params.slice_count(); ++i) {
    const auto& s = ckpt.model.params.slice(i);
    const auto& j = slices.at(i);
    require(j.at("name") == s.name && j.at("offset") == s.offset &&
                j.at("rows") == s.rows && j.at("cols") == s.cols,
            "checkpoint slice table mismatch at '" + s.name + "'");
  }
  ckpt.normalizer = data::Normalizer::from_json(doc.at("normalizer"));
  ckpt.meta = doc.value("meta", nlohmann::json::object());
  std::ifstream blob(base + ".bin", std::ios::binary);
  require(blob.good(), "missing checkpoint blob " + base + ".bin");
  auto& theta = ckpt.model.params.theta();
  blob.read(reinterpret_cast<char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
  require(blob.gcount() ==
              static_cast<std::streamsize>(theta.size() * sizeof(double)),
          "checkpoint blob too short: " + base + ".bin");
  blob.peek();
  require(blob.eof(), "checkpoint blob too long: " + base + ".bin");
  return ckpt;
}

}  // namespace gridode::anode
