#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/anode.hpp"
#include "gridode/cases.hpp"
#include "gridode/common.hpp"
#include "gridode/data.hpp"
#include "gridode/dynamics.hpp"
#include "gridode/grid.hpp"
#include "gridode/hpo.hpp"
#include "gridode/report.hpp"
#include "gridode/sim.hpp"

namespace gridode::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration with full defaulting
// ---------------------------------------------------------------------------

struct CaseConfig {
  std::string builtin = "three-unit";  // ignored when matpower_path set
  std::string matpower_path;
  int reference_node = 1;
  nlohmann::json units;  // unit definitions for matpower cases
};

struct SimConfig {
  double dt = 0.01;
  double train_duration = 250.0;
  double eval_duration = 1010.0;
  double step_period = 5.0;
  double eval_step_period = 10.0;
  double step_magnitude = 0.2;
  double snr_db = 25.0;
  double warmup = 5.0;  // settle time before recording (skipped when the
                        // initial state is an exact equilibrium)
  std::uint64_t seed = 42;
};

struct DataConfig {
  Eigen::Index history = 64;
  Eigen::Index horizon = 64;
  Eigen::Index stride = 16;
  Eigen::Index eval_horizon = 500;
  Eigen::Index batch_size = 256;
};

struct ModelConfig {
  std::string kind = "tcn-anode";
  int rhs_depth = 1;
  Eigen::Index rhs_hidden = 64;
  Eigen::Index enc_hidden = 16;
  std::string activation = "silu";
  int enc_depth = 1;
  int tcn_kernel = 2;
  int tcn_blocks = 0;  // 0: minimal covering the history
  std::uint64_t init_seed = 44;
};

struct TrainConfig {
  int max_epochs = 1000;
  int patience = 50;
  double lr = 1e-3;
  std::uint64_t seed = 45;
  Eigen::Index micro_batch = 32;
};

struct HpoConfig {
  int n_trials = 8;
  std::uint64_t seed = 46;
  int max_epochs = 100;
  int patience = 50;
  int checkpoint_every = 10;
  int threads = 1;
  hpo::SearchSpace space;
};

struct RunConfig {
  CaseConfig system_case;
  SimConfig sim;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  HpoConfig hpo;
  std::string output_dir = "out";
};

inline hpo::SearchSpace search_space_from_json(const nlohmann::json& doc) {
  hpo::SearchSpace space;
  if (doc.contains("rhs_depths"))
    space.rhs_depths = doc.at("rhs_depths").get<std::vector<int>>();
  if (doc.contains("rhs_widths"))
    space.rhs_widths = doc.at("rhs_widths").get<std::vector<Eigen::Index>>();
  if (doc.contains("enc_widths"))
    space.enc_widths = doc.at("enc_widths").get<std::vector<Eigen::Index>>();
  space.lr_min = doc.value("lr_min", space.lr_min);
  space.lr_max = doc.value("lr_max", space.lr_max);
  if (doc.contains("activations")) {
    space.activations.clear();
    for (const auto& a : doc.at("activations"))
      space.activations.push_back(
          nn::activation_from_name(a.get<std::string>()));
  }
  space.validate();
  return space;
}

inline nlohmann::json search_space_to_json(const hpo::SearchSpace& space) {
  std::vector<std::string> acts;
  for (const auto a : space.activations) acts.push_back(nn::activation_name(a));
  return {{"rhs_depths", space.rhs_depths},
          {"rhs_widths", space.rhs_widths},
          {"enc_widths", space.enc_widths},
          {"lr_min", space.lr_min},
          {"lr_max", space.lr_max},
          {"activations", acts}};
}

/// Parses a run configuration; absent fields keep their defaults. Unknown
/// keys are rejected to catch typos early.
inline RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig cfg;
  const auto known = [](const nlohmann::json& obj,
                        std::initializer_list<const char*> keys,
                        const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      require(ok, "unknown config key '" + key + "' in " + where);
    }
  };
  known(doc, {"case", "sim", "data", "model", "train", "hpo", "output_dir"},
        "config root");
  if (doc.contains("case")) {
    const auto& c = doc.at("case");
    known(c, {"builtin", "matpower", "reference_node", "units"}, "case");
    cfg.system_case.builtin = c.value("builtin", cfg.system_case.builtin);
    cfg.system_case.matpower_path = c.value("matpower", std::string());
    cfg.system_case.reference_node =
        c.value("reference_node", cfg.system_case.reference_node);
    if (c.contains("units")) cfg.system_case.units = c.at("units");
  }
  if (doc.contains("sim")) {
    const auto& s = doc.at("sim");
    known(s,
          {"dt", "train_duration", "eval_duration", "step_period",
           "eval_step_period", "step_magnitude", "snr_db", "warmup", "seed"},
          "sim");
    cfg.sim.dt = s.value("dt", cfg.sim.dt);
    cfg.sim.train_duration = s.value("train_duration", cfg.sim.train_duration);
    cfg.sim.eval_duration = s.value("eval_duration", cfg.sim.eval_duration);
    cfg.sim.step_period = s.value("step_period", cfg.sim.step_period);
    cfg.sim.eval_step_period =
        s.value("eval_step_period", cfg.sim.eval_step_period);
    cfg.sim.step_magnitude = s.value("step_magnitude", cfg.sim.step_magnitude);
    if (s.contains("snr_db")) {
      const auto& v = s.at("snr_db");
      cfg.sim.snr_db = v.is_string()
                           ? std::numeric_limits<double>::infinity()
                           : v.get<double>();
      if (v.is_string())
        require(v == "inf", "snr_db must be a number or \"inf\"");
    }
    cfg.sim.warmup = s.value("warmup", cfg.sim.warmup);
    cfg.sim.seed = s.value("seed", cfg.sim.seed);
  }
  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    known(d,
          {"history", "horizon", "stride", "eval_horizon", "batch_size"},
          "data");
    cfg.data.history = d.value("history", cfg.data.history);
    cfg.data.horizon = d.value("horizon", cfg.data.horizon);
    cfg.data.stride = d.value("stride", cfg.data.stride);
    cfg.data.eval_horizon = d.value("eval_horizon", cfg.data.eval_horizon);
    cfg.data.batch_size = d.value("batch_size", cfg.data.batch_size);
  }
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    known(m,
          {"kind", "rhs_depth", "rhs_hidden", "enc_hidden", "activation",
           "enc_depth", "tcn_kernel", "tcn_blocks", "init_seed"},
          "model");
    cfg.model.kind = m.value("kind", cfg.model.kind);
    cfg.model.rhs_depth = m.value("rhs_depth", cfg.model.rhs_depth);
    cfg.model.rhs_hidden = m.value("rhs_hidden", cfg.model.rhs_hidden);
    cfg.model.enc_hidden = m.value("enc_hidden", cfg.model.enc_hidden);
    cfg.model.activation = m.value("activation", cfg.model.activation);
    cfg.model.enc_depth = m.value("enc_depth", cfg.model.enc_depth);
    cfg.model.tcn_kernel = m.value("tcn_kernel", cfg.model.tcn_kernel);
    cfg.model.tcn_blocks = m.value("tcn_blocks", cfg.model.tcn_blocks);
    cfg.model.init_seed = m.value("init_seed", cfg.model.init_seed);
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    known(t, {"max_epochs", "patience", "lr", "seed", "micro_batch"}, "train");
    cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
    cfg.train.patience = t.value("patience", cfg.train.patience);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.micro_batch = t.value("micro_batch", cfg.train.micro_batch);
  }
  if (doc.contains("hpo")) {
    const auto& h = doc.at("hpo");
    known(h,
          {"n_trials", "seed", "max_epochs", "patience", "checkpoint_every",
           "threads", "space"},
          "hpo");
    cfg.hpo.n_trials = h.value("n_trials", cfg.hpo.n_trials);
    cfg.hpo.seed = h.value("seed", cfg.hpo.seed);
    cfg.hpo.max_epochs = h.value("max_epochs", cfg.hpo.max_epochs);
    cfg.hpo.patience = h.value("patience", cfg.hpo.patience);
    cfg.hpo.checkpoint_every =
        h.value("checkpoint_every", cfg.hpo.checkpoint_every);
    cfg.hpo.threads = h.value("threads", cfg.hpo.threads);
    if (h.contains("space"))
      cfg.hpo.space = search_space_from_json(h.at("space"));
  }
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);
  return cfg;
}

/// Fully resolved configuration (every default expanded) for manifests.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json doc;
  doc["case"] = {{"builtin", cfg.system_case.builtin},
                 {"matpower", cfg.system_case.matpower_path},
                 {"reference_node", cfg.system_case.reference_node}};
  if (!cfg.system_case.units.is_null())
    doc["case"]["units"] = cfg.system_case.units;
  doc["sim"] = {{"dt", cfg.sim.dt},
                {"train_duration", cfg.sim.train_duration},
                {"eval_duration", cfg.sim.eval_duration},
                {"step_period", cfg.sim.step_period},
                {"eval_step_period", cfg.sim.eval_step_period},
                {"step_magnitude", cfg.sim.step_magnitude},
                {"warmup", cfg.sim.warmup},
                {"seed", cfg.sim.seed}};
  if (std::isinf(cfg.sim.snr_db))
    doc["sim"]["snr_db"] = "inf";
  else
    doc["sim"]["snr_db"] = cfg.sim.snr_db;
  doc["data"] = {{"history", cfg.data.history},
                 {"horizon", cfg.data.horizon},
                 {"stride", cfg.data.stride},
                 {"eval_horizon", cfg.data.eval_horizon},
                 {"batch_size", cfg.data.batch_size}};
  doc["model"] = {{"kind", cfg.model.kind},
                  {"rhs_depth", cfg.model.rhs_depth},
                  {"rhs_hidden", cfg.model.rhs_hidden},
                  {"enc_hidden", cfg.model.enc_hidden},
                  {"activation", cfg.model.activation},
                  {"enc_depth", cfg.model.enc_depth},
                  {"tcn_kernel", cfg.model.tcn_kernel},
                  {"tcn_blocks", cfg.model.tcn_blocks},
                  {"init_seed", cfg.model.init_seed}};
  doc["train"] = {{"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"lr", cfg.train.lr},
                  {"seed", cfg.train.seed},
                  {"micro_batch", cfg.train.micro_batch}};
  doc["hpo"] = {{"n_trials", cfg.hpo.n_trials},
                {"seed", cfg.hpo.seed},
                {"max_epochs", cfg.hpo.max_epochs},
                {"patience", cfg.hpo.patience},
                {"checkpoint_every", cfg.hpo.checkpoint_every},
                {"threads", cfg.hpo.threads},
                {"space", search_space_to_json(cfg.hpo.space)}};
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

/// Output root: the config's output_dir, rooted under $GRIDODE_OUT when
/// that is set and the path is relative.
inline fs::path output_root(const RunConfig& cfg) {
  fs::path dir = cfg.output_dir;
  if (dir.is_relative()) {
    if (const char* root = std::getenv("GRIDODE_OUT")) dir = fs::path(root) / dir;
  }
  return dir;
}

inline std::string config_hash(const RunConfig& cfg) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a(config_to_json(cfg).dump())));
  return buf;
}

inline void write_manifest(const fs::path& dir, const std::string& command,
                           const RunConfig& cfg,
                           nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json doc;
  doc["command"] = command;
  doc["config"] = config_to_json(cfg);
  doc["config_hash"] = config_hash(cfg);
  for (auto& [k, v] : extra.items()) doc[k] = v;
  write_text_file((dir / "manifest.json").string(), doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Case construction
// ---------------------------------------------------------------------------

struct CaseSetup {
  dynamics::SystemModel model;
  Eigen::VectorXd x0;  // flat start; simulate runs a warm-up settle first
};

inline CaseSetup build_case(const RunConfig& cfg) {
  CaseSetup setup;
  if (cfg.system_case.matpower_path.empty()) {
    auto builtin = cases::builtin_case(cfg.system_case.builtin);
    setup.model = std::move(builtin.model);
    // the built-in setpoints make the flat profile an exact fixed point,
    // so this equals the flat start and the warm-up holds it bit-exactly
    setup.x0 = std::move(builtin.x_eq);
    return setup;
  }
  const auto mp =
      grid::parse_matpower_case(read_text_file(cfg.system_case.matpower_path));
  require(!cfg.system_case.units.is_null(),
          "matpower cases need a case.units list in the config");
  nlohmann::json model_doc;
  model_doc["graph"] = grid::graph_to_json(mp.graph);
  model_doc["reference_node"] = cfg.system_case.reference_node;
  model_doc["p_d_nom"] = std::vector<double>(
      mp.p_d_nom.data(), mp.p_d_nom.data() + mp.p_d_nom.size());
  model_doc["units"] = cfg.system_case.units;
  setup.model = dynamics::model_from_json(model_doc);
  // flat start: delta = 0, v = v_d, p_m = p_d (GFI) or omega = omega_d (SG)
  setup.x0.resize(setup.model.n_states());
  for (Eigen::Index i = 0; i < setup.model.n_nodes(); ++i) {
    const auto& unit = setup.model.units[static_cast<std::size_t>(i)];
    setup.x0(dynamics::SystemModel::delta_index(i)) = 0.0;
    setup.x0(dynamics::SystemModel::voltage_index(i)) =
        std::visit([](const auto& p) { return p.v_d; }, unit);
    setup.x0(dynamics::SystemModel::aux_index(i)) =
        setup.model.is_gfi(i)
            ? setup.model.p_d_nom(i)
            : std::visit([](const auto& p) { return p.omega_d; }, unit);
  }
  return setup;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct TrajectoryRole {
  std::string name;     // train1 | train2 | train3 | eval
  double duration;
  double step_period;
  std::uint64_t schedule_seed;
  std::uint64_t noise_seed;
};

inline std::vector<TrajectoryRole> trajectory_roles(const RunConfig& cfg) {
  return {{"train1", cfg.sim.train_duration, cfg.sim.step_period,
           cfg.sim.seed + 1, cfg.sim.seed + 101},
          {"train2", cfg.sim.train_duration, cfg.sim.step_period,
           cfg.sim.seed + 2, cfg.sim.seed + 102},
          {"train3", cfg.sim.train_duration, cfg.sim.step_period,
           cfg.sim.seed + 3, cfg.sim.seed + 103},
          {"eval", cfg.sim.eval_duration, cfg.sim.eval_step_period,
           cfg.sim.seed + 4, cfg.sim.seed + 104}};
}

/// Writes, per role, <role>_clean.csv and <role>_noisy.csv (identical except
/// for measurement noise on the outputs), plus the model and a manifest.
inline fs::path cmd_simulate(const RunConfig& cfg) {
  const auto setup = build_case(cfg);
  const fs::path dir = output_root(cfg) / "sim";
  fs::create_directories(dir);

  Eigen::VectorXd x0 = setup.x0;
  if (cfg.sim.warmup > 0.0) {
    sim::StepSchedule hold;
    hold.base = setup.model.p_d_nom;
    const auto settle = sim::simulate(setup.model, x0, hold, cfg.sim.dt,
                                      cfg.sim.warmup);
    x0 = settle.x.col(settle.x.cols() - 1);
  }

  nlohmann::json schedules;
  std::vector<std::string> warnings;
  for (const auto& role : trajectory_roles(cfg)) {
    Rng schedule_rng(role.schedule_seed);
    const auto schedule = sim::generate_step_schedule(
        setup.model.p_d_nom, role.duration, role.step_period,
        cfg.sim.step_magnitude, schedule_rng);
    const auto traj =
        sim::simulate(setup.model, x0, schedule, cfg.sim.dt, role.duration);
    sim::write_trajectory_csv(traj, (dir / (role.name + "_clean.csv")).string());
    sim::Trajectory noisy = traj;
    Rng noise_rng(role.noise_seed);
    auto w = sim::add_noise(noisy.y, cfg.sim.snr_db, noise_rng);
    for (auto& msg : w) warnings.push_back(role.name + ": " + msg);
    sim::write_trajectory_csv(noisy,
                              (dir / (role.name + "_noisy.csv")).string());
    schedules[role.name] = sim::schedule_to_json(schedule);
  }
  write_text_file((dir / "model.json").string(),
                  dynamics::model_to_json(setup.model).dump(2) + "\n");
  write_text_file((dir / "schedules.json").string(), schedules.dump(2) + "\n");
  write_manifest(dir, "simulate", cfg, {{"warnings", warnings}});
  return dir;
}

// ---------------------------------------------------------------------------
// make-data
// ---------------------------------------------------------------------------

inline sim::Trajectory read_role_csv(const fs::path& sim_dir,
                                     const std::string& role,
                                     const std::string& variant) {
  const fs::path path = sim_dir / (role + "_" + variant + ".csv");
  if (!fs::exists(path))
    fail("missing trajectory " + path.string() +
         "; run the simulate command first");
  return sim::read_trajectory_csv(path.string());
}

/// Window geometry for the four datasets per the run config. Evaluation
/// anchors sit on the input-step instants of the evaluation trajectory.
inline data::MakeDatasetsOptions dataset_options(const RunConfig& cfg) {
  data::MakeDatasetsOptions opt;
  opt.fit_spec = {cfg.data.history, cfg.data.horizon, cfg.data.stride, -1};
  const auto eval_stride = static_cast<Eigen::Index>(
      std::llround(cfg.sim.eval_step_period / cfg.sim.dt));
  opt.eval_spec = {cfg.data.history, cfg.data.eval_horizon, eval_stride,
                   eval_stride};
  opt.snr_db = cfg.sim.snr_db;
  opt.batch_size = cfg.data.batch_size;
  return opt;
}

/// Rebuilds the dataset bundle from the simulate artifacts. Noise is taken
/// from the stored noisy trajectories, so the bundle is bit-identical on
/// every rebuild.
inline data::DatasetBundle load_bundle(const RunConfig& cfg) {
  const fs::path sim_dir = output_root(cfg) / "sim";
  const auto opt = dataset_options(cfg);
  data::DatasetBundle bundle;
  bundle.batch_size = opt.batch_size;

  const auto load = [&](const std::string& role) {
    return std::pair<sim::Trajectory, sim::Trajectory>(
        read_role_csv(sim_dir, role, "clean"),
        read_role_csv(sim_dir, role, "noisy"));
  };
  const auto [t1c, t1n] = load("train1");
  const auto [t2c, t2n] = load("train2");
  const auto [t3c, t3n] = load("train3");
  const auto [t4c, t4n] = load("eval");

  bundle.normalizer.fit(t1c.u, t1n.y);
  bundle.train = data::make_one_dataset(t1c, bundle.normalizer, opt.fit_spec,
                                        t1n.y, false, bundle.warnings);
  bundle.validation = data::make_one_dataset(t2c, bundle.normalizer,
                                             opt.fit_spec, t2n.y, false,
                                             bundle.warnings);
  bundle.test = data::make_one_dataset(t3c, bundle.normalizer, opt.fit_spec,
                                       t3n.y, false, bundle.warnings);
  bundle.eval = data::make_one_dataset(t4c, bundle.normalizer, opt.eval_spec,
                                       t4n.y, true, bundle.warnings);
  return bundle;
}

inline fs::path cmd_make_data(const RunConfig& cfg) {
  const auto bundle = load_bundle(cfg);
  const fs::path dir = output_root(cfg) / "data";
  fs::create_directories(dir);
  const auto opt = dataset_options(cfg);
  nlohmann::json doc;
  doc["normalizer"] = bundle.normalizer.to_json();
  doc["fit_spec"] = data::window_spec_to_json(opt.fit_spec);
  doc["eval_spec"] = data::window_spec_to_json(opt.eval_spec);
  doc["sizes"] = {{"train", bundle.train.size()},
                  {"validation", bundle.validation.size()},
                  {"test", bundle.test.size()},
                  {"eval", bundle.eval.size()}};
  doc["batch_size"] = bundle.batch_size;
  doc["sources"] = {"train1", "train2", "train3", "eval"};
  write_text_file((dir / "datasets.json").string(), doc.dump(2) + "\n");
  write_manifest(dir, "make-data", cfg, {{"warnings", bundle.warnings}});
  return dir;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline anode::AnodeConfig anode_config_for(const RunConfig& cfg,
                                           const dynamics::SystemModel& model) {
  anode::AnodeConfig ac;
  ac.kind = anode::model_kind_from_name(cfg.model.kind);
  ac.n_u = model.n_inputs();
  ac.n_y = model.n_outputs();
  ac.n_lat = model.n_states() - model.n_outputs();
  ac.measured = model.measured_indices();
  for (Eigen::Index i = 0; i < model.n_nodes(); ++i)
    ac.latent.push_back(dynamics::SystemModel::delta_index(i));
  ac.history = cfg.data.history;
  ac.dt = cfg.sim.dt;
  ac.rhs_depth = cfg.model.rhs_depth;
  ac.rhs_hidden = cfg.model.rhs_hidden;
  ac.rhs_act = nn::activation_from_name(cfg.model.activation);
  ac.enc_hidden = cfg.model.enc_hidden;
  ac.enc_depth = cfg.model.enc_depth;
  ac.tcn_kernel = cfg.model.tcn_kernel;
  ac.tcn_blocks = cfg.model.tcn_blocks;
  return ac;
}

inline dynamics::SystemModel load_system_model(const RunConfig& cfg) {
  const fs::path path = output_root(cfg) / "sim" / "model.json";
  if (!fs::exists(path))
    fail("missing system model " + path.string() +
         "; run the simulate command first");
  return dynamics::model_from_json(
      nlohmann::json::parse(read_text_file(path.string())));
}

inline std::string loss_history_csv(const anode::TrainState& state) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < state.train_history.size(); ++e)
    out += std::to_string(e) + "," + format_double(state.train_history[e]) +
           "," + format_double(state.val_history[e]) + "\n";
  return out;
}

inline fs::path cmd_train(const RunConfig& cfg) {
  const auto system = load_system_model(cfg);
  const auto bundle = load_bundle(cfg);
  auto model = anode::AnodeModel::create(anode_config_for(cfg, system));
  model.init(cfg.model.init_seed);

  anode::TrainOptions opt;
  opt.max_epochs = cfg.train.max_epochs;
  opt.patience = cfg.train.patience;
  opt.lr = cfg.train.lr;
  opt.seed = cfg.train.seed;
  opt.batch_size = bundle.batch_size;
  opt.micro_batch = cfg.train.micro_batch;
  const auto state = anode::train(model, bundle.train, bundle.validation, opt);

  const fs::path dir = output_root(cfg) / "train" / cfg.model.kind;
  fs::create_directories(dir);
  anode::save_checkpoint(model, bundle.normalizer,
                         (dir / "checkpoint").string(),
                         {{"best_epoch", state.best_epoch},
                          {"best_validation_loss", state.best_val},
                          {"epochs_run", state.epochs_run},
                          {"stop_reason", state.stop_reason},
                          {"init_seed", cfg.model.init_seed},
                          {"train_seed", cfg.train.seed}});
  write_text_file((dir / "loss_history.csv").string(),
                  loss_history_csv(state));
  write_manifest(dir, "train", cfg,
                 {{"best_epoch", state.best_epoch},
                  {"best_validation_loss", state.best_val},
                  {"stop_reason", state.stop_reason}});
  return dir;
}

// ---------------------------------------------------------------------------
// hpo
// ---------------------------------------------------------------------------

inline fs::path cmd_hpo(const RunConfig& cfg) {
  const auto system = load_system_model(cfg);
  const auto bundle = load_bundle(cfg);
  const auto base = anode_config_for(cfg, system);

  hpo::StudyOptions opt;
  opt.n_trials = cfg.hpo.n_trials;
  opt.seed = cfg.hpo.seed;
  opt.max_epochs = cfg.hpo.max_epochs;
  opt.patience = cfg.hpo.patience;
  opt.checkpoint_every = cfg.hpo.checkpoint_every;
  opt.batch_size = bundle.batch_size;
  opt.micro_batch = cfg.train.micro_batch;
  opt.threads = cfg.hpo.threads;

  const auto study = hpo::run_study(cfg.hpo.space, base, bundle.train,
                                    bundle.validation, bundle.test, opt);
  const fs::path dir = output_root(cfg) / "hpo";
  fs::create_directories(dir);
  write_text_file((dir / "trials.csv").string(), hpo::trial_table_csv(study));
  write_text_file((dir / "study.json").string(),
                  hpo::study_manifest(study, cfg.hpo.space, cfg.hpo.n_trials)
                          .dump(2) +
                      "\n");
  write_manifest(dir, "hpo", cfg, {{"best_trial", study.best_index}});
  return dir;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline fs::path cmd_evaluate(const RunConfig& cfg) {
  const auto system = load_system_model(cfg);
  const auto bundle = load_bundle(cfg);
  const fs::path ckpt_base =
      output_root(cfg) / "train" / cfg.model.kind / "checkpoint";
  if (!fs::exists(ckpt_base.string() + ".json"))
    fail("missing checkpoint " + ckpt_base.string() +
         ".json; run the train command first");
  const auto ckpt = anode::load_checkpoint(ckpt_base.string());
  const auto& dataset = bundle.eval;
  require(dataset.size() > 0, "evaluation dataset is empty");
  const auto evaluation = anode::evaluate(ckpt.model, dataset);

  const auto& norm = bundle.normalizer;
  const Eigen::Index H = dataset.spec.history;
  const Eigen::Index K = dataset.spec.horizon;
  const Eigen::Index n_nodes = system.n_nodes();

  std::vector<report::SampleBrackets> rows;
  std::array<std::vector<double>, 3> v_pool, w_pool;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const data::Sample s = dataset.sample(i);
    const Eigen::MatrixXd truth = norm.invert_y(s.targets);
    const Eigen::MatrixXd pred =
        norm.invert_y(evaluation.predictions[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd p_d = norm.invert_u(s.u.middleCols(H + 1, K));
    report::SampleBrackets sb;
    sb.voltage = report::bracket_rmse(report::voltage_channels(pred),
                                      report::voltage_channels(truth),
                                      cfg.sim.dt);
    sb.omega = report::bracket_rmse(
        report::reconstruct_frequencies(system, pred, p_d),
        report::reconstruct_frequencies(system, truth, p_d), cfg.sim.dt);
    for (std::size_t b = 0; b < 3; ++b) {
      if (sb.voltage[b]) v_pool[b].push_back(*sb.voltage[b]);
      if (sb.omega[b]) w_pool[b].push_back(*sb.omega[b]);
    }
    rows.push_back(std::move(sb));
  }

  const fs::path dir = output_root(cfg) / "eval" / cfg.model.kind;
  fs::create_directories(dir);
  write_text_file((dir / "rmse_brackets.csv").string(),
                  report::brackets_csv(rows));

  std::vector<std::tuple<std::string, std::string, report::BoxStats>> summary;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!v_pool[b].empty())
      summary.emplace_back("voltage", report::bracket_name(b),
                           report::box_stats(v_pool[b]));
    if (!w_pool[b].empty())
      summary.emplace_back("omega", report::bracket_name(b),
                           report::box_stats(w_pool[b]));
  }
  write_text_file((dir / "box_summary.csv").string(),
                  report::box_summary_csv(summary));

  // overlay of the first evaluation window: reconstructed frequencies and
  // voltages for true / measured / predicted signals
  {
    const data::Sample s = dataset.sample(0);
    const Eigen::Index anchor = dataset.starts[0];
    const Eigen::MatrixXd truth = norm.invert_y(s.targets);
    const Eigen::MatrixXd measured = norm.invert_y(
        dataset.y_enc.middleCols(anchor + 1, K));
    const Eigen::MatrixXd pred = norm.invert_y(evaluation.predictions[0]);
    const Eigen::MatrixXd p_d = norm.invert_u(s.u.middleCols(H + 1, K));
    Eigen::MatrixXd truth_all(2 * n_nodes, K), meas_all(2 * n_nodes, K),
        pred_all(2 * n_nodes, K);
    truth_all.topRows(n_nodes) =
        report::reconstruct_frequencies(system, truth, p_d);
    meas_all.topRows(n_nodes) =
        report::reconstruct_frequencies(system, measured, p_d);
    pred_all.topRows(n_nodes) =
        report::reconstruct_frequencies(system, pred, p_d);
    truth_all.bottomRows(n_nodes) = report::voltage_channels(truth);
    meas_all.bottomRows(n_nodes) = report::voltage_channels(measured);
    pred_all.bottomRows(n_nodes) = report::voltage_channels(pred);
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < n_nodes; ++i)
      names.push_back(
          "omega_" +
          std::to_string(system.graph.nodes()[static_cast<std::size_t>(i)]));
    for (Eigen::Index i = 0; i < n_nodes; ++i)
      names.push_back(
          "v_" +
          std::to_string(system.graph.nodes()[static_cast<std::size_t>(i)]));
    write_text_file(
        (dir / "overlay_sample_0.csv").string(),
        report::overlay_csv(dataset.t.segment(anchor + 1, K), names,
                            truth_all, meas_all, pred_all));
  }

  write_manifest(dir, "evaluate", cfg,
                 {{"eval_mse_normalized", evaluation.mse},
                  {"samples", dataset.size()}});
  return dir;
}

}  // namespace gridode::pipeline
