#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "gridode/pipeline.hpp"

using namespace gridode;
using namespace gridode::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "gridode_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Small but structurally complete run: 20 s training records, 30 s
/// evaluation record, short windows, two-epoch training.
RunConfig small_config(const fs::path& out) {
  RunConfig cfg;
  cfg.output_dir = out.string();
  cfg.sim.train_duration = 20.0;
  cfg.sim.eval_duration = 30.0;
  cfg.sim.step_period = 2.0;
  cfg.sim.eval_step_period = 1.0;
  cfg.sim.warmup = 1.0;
  cfg.data.history = 8;
  cfg.data.horizon = 8;
  cfg.data.stride = 8;
  cfg.data.eval_horizon = 150;  // covers exactly the short error bracket
  cfg.data.batch_size = 64;
  cfg.model.rhs_hidden = 8;
  cfg.model.enc_hidden = 4;
  cfg.train.max_epochs = 2;
  cfg.train.patience = 10;
  cfg.train.micro_batch = 64;
  return cfg;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("run configs parse with defaults and reject unknown keys") {
  const RunConfig def = config_from_json(nlohmann::json::object());
  REQUIRE(def.sim.dt == 0.01);
  REQUIRE(def.sim.train_duration == 250.0);
  REQUIRE(def.data.history == 64);
  REQUIRE(def.model.kind == "tcn-anode");
  REQUIRE(def.hpo.n_trials == 8);
  REQUIRE(def.output_dir == "out");

  REQUIRE_THROWS_WITH(config_from_json({{"bogus", 1}}),
                      Catch::Matchers::ContainsSubstring(
                          "unknown config key 'bogus' in config root"));
  REQUIRE_THROWS_WITH(
      config_from_json({{"sim", {{"sigma", 1.0}}}}),
      Catch::Matchers::ContainsSubstring("unknown config key 'sigma' in sim"));

  const RunConfig quiet =
      config_from_json({{"sim", {{"snr_db", "inf"}}}});
  REQUIRE(std::isinf(quiet.sim.snr_db));
  REQUIRE_THROWS_WITH(config_from_json({{"sim", {{"snr_db", "loud"}}}}),
                      Catch::Matchers::ContainsSubstring("snr_db"));

  RunConfig cfg;
  cfg.sim.dt = 0.02;
  cfg.model.kind = "mlp-anode";
  cfg.hpo.n_trials = 3;
  cfg.hpo.space.lr_min = 1e-5;
  const RunConfig back = config_from_json(config_to_json(cfg));
  REQUIRE(back.sim.dt == 0.02);
  REQUIRE(back.model.kind == "mlp-anode");
  REQUIRE(back.hpo.n_trials == 3);
  REQUIRE(back.hpo.space.lr_min == 1e-5);

  REQUIRE(config_hash(cfg).size() == 16);
  REQUIRE(config_hash(cfg) == config_hash(back));
  RunConfig other = cfg;
  other.sim.seed += 1;
  REQUIRE(config_hash(other) != config_hash(cfg));
}

TEST_CASE("relative output dirs root under GRIDODE_OUT; absolute ones do not") {
  const fs::path root = fresh_dir("envroot");
  setenv("GRIDODE_OUT", root.string().c_str(), 1);
  RunConfig rel;
  rel.output_dir = "runs";
  REQUIRE(output_root(rel) == root / "runs");
  RunConfig abs;
  abs.output_dir = (root / "elsewhere").string();
  REQUIRE(output_root(abs) == root / "elsewhere");
  unsetenv("GRIDODE_OUT");
  REQUIRE(output_root(rel) == fs::path("runs"));
}

TEST_CASE("the pipeline runs end to end and writes every artifact") {
  const fs::path out = fresh_dir("pipeline");
  const RunConfig cfg = small_config(out);

  // --- simulate -----------------------------------------------------------
  const fs::path sim_dir = cmd_simulate(cfg);
  REQUIRE(sim_dir == out / "sim");
  for (const std::string role : {"train1", "train2", "train3", "eval"}) {
    REQUIRE(fs::exists(sim_dir / (role + "_clean.csv")));
    REQUIRE(fs::exists(sim_dir / (role + "_noisy.csv")));
  }
  REQUIRE(fs::exists(sim_dir / "model.json"));
  REQUIRE(fs::exists(sim_dir / "schedules.json"));
  REQUIRE(fs::exists(sim_dir / "manifest.json"));

  // reruns reproduce the records byte for byte
  const auto bytes = [&](const fs::path& p) {
    return read_text_file(p.string());
  };
  const std::string noisy_a = bytes(sim_dir / "train1_noisy.csv");
  const fs::path out2 = fresh_dir("pipeline_rerun");
  RunConfig cfg2 = cfg;
  cfg2.output_dir = out2.string();
  cmd_simulate(cfg2);
  REQUIRE(bytes(out2 / "sim" / "train1_noisy.csv") == noisy_a);
  REQUIRE(bytes(out2 / "sim" / "eval_clean.csv") ==
          bytes(sim_dir / "eval_clean.csv"));

  // different seeds give different excitation
  RunConfig cfg_seed = cfg2;
  cfg_seed.sim.seed = 43;
  cmd_simulate(cfg_seed);
  REQUIRE(bytes(out2 / "sim" / "train1_clean.csv") != noisy_a);

  // restore the canonical artifacts in out2 for later error-path checks
  cmd_simulate(cfg2);

  // --- make-data ----------------------------------------------------------
  const fs::path data_dir = cmd_make_data(cfg);
  const auto datasets =
      nlohmann::json::parse(bytes(data_dir / "datasets.json"));
  // 2001 instants, history 8, horizon 8, stride 8 -> anchors 8..1992
  REQUIRE(datasets.at("sizes").at("train") == 249);
  REQUIRE(datasets.at("sizes").at("validation") == 249);
  REQUIRE(datasets.at("sizes").at("test") == 249);
  // 3001 instants, anchors at the 1 s input steps, horizon 150
  REQUIRE(datasets.at("sizes").at("eval") == 28);
  REQUIRE(datasets.at("batch_size") == 64);

  // the bundle rebuild is bit-identical (no fresh noise draws)
  const auto bundle_a = load_bundle(cfg);
  const auto bundle_b = load_bundle(cfg);
  REQUIRE(bundle_a.normalizer.u_mean == bundle_b.normalizer.u_mean);
  REQUIRE(bundle_a.train.y_enc == bundle_b.train.y_enc);
  REQUIRE(bundle_a.eval.u == bundle_b.eval.u);

  // --- train (both model kinds) -------------------------------------------
  const fs::path train_dir = cmd_train(cfg);
  REQUIRE(train_dir == out / "train" / "tcn-anode");
  REQUIRE(fs::exists(train_dir / "checkpoint.json"));
  REQUIRE(fs::exists(train_dir / "checkpoint.bin"));
  const std::string history = bytes(train_dir / "loss_history.csv");
  const auto history_lines = split_lines(history);
  REQUIRE(history_lines.size() == 3);  // header + two epochs
  REQUIRE(history_lines[0] == "epoch,train_loss,validation_loss");
  REQUIRE_THAT(history_lines[1], Catch::Matchers::StartsWith("0,"));

  RunConfig mlp_cfg = cfg;
  mlp_cfg.model.kind = "mlp-anode";
  REQUIRE(cmd_train(mlp_cfg) == out / "train" / "mlp-anode");

  // --- evaluate ------------------------------------------------------------
  const fs::path eval_dir = cmd_evaluate(cfg);
  REQUIRE(eval_dir == out / "eval" / "tcn-anode");

  const auto bracket_lines = split_lines(bytes(eval_dir / "rmse_brackets.csv"));
  REQUIRE(bracket_lines.size() == 29);  // header + 28 samples
  REQUIRE(bracket_lines[0] ==
          "sample,voltage_short,voltage_medium,voltage_long,omega_short,"
          "omega_medium,omega_long");
  const auto row = split_fields(bracket_lines[1]);
  REQUIRE(row.size() == 7);
  REQUIRE(row[0] == "0");
  REQUIRE_FALSE(row[1].empty());  // short bracket fits the 150-step horizon
  REQUIRE(row[2].empty());        // medium/long do not
  REQUIRE(row[3].empty());
  REQUIRE_FALSE(row[4].empty());

  const auto summary_lines = split_lines(bytes(eval_dir / "box_summary.csv"));
  REQUIRE(summary_lines.size() == 3);  // header + voltage/omega short rows
  REQUIRE_THAT(summary_lines[1], Catch::Matchers::StartsWith("voltage,short,"));
  REQUIRE_THAT(summary_lines[2], Catch::Matchers::StartsWith("omega,short,"));

  const auto overlay_lines =
      split_lines(bytes(eval_dir / "overlay_sample_0.csv"));
  REQUIRE(overlay_lines.size() == 151);  // header + one row per step
  REQUIRE_THAT(overlay_lines[0],
               Catch::Matchers::StartsWith(
                   "t,true_omega_1,measured_omega_1,predicted_omega_1"));
  REQUIRE_THAT(overlay_lines[0],
               Catch::Matchers::ContainsSubstring(",true_v_3,"));

  const auto manifest =
      nlohmann::json::parse(bytes(eval_dir / "manifest.json"));
  REQUIRE(manifest.at("command") == "evaluate");
  REQUIRE(manifest.at("samples") == 28);
  REQUIRE(manifest.at("eval_mse_normalized").get<double>() >= 0.0);
  REQUIRE(manifest.contains("config_hash"));

  REQUIRE(cmd_evaluate(mlp_cfg) == out / "eval" / "mlp-anode");

  // --- missing-artifact error paths ----------------------------------------
  const fs::path empty = fresh_dir("pipeline_empty");
  RunConfig missing = cfg;
  missing.output_dir = empty.string();
  REQUIRE_THROWS_WITH(cmd_make_data(missing),
                      Catch::Matchers::ContainsSubstring(
                          "run the simulate command first"));
  REQUIRE_THROWS_WITH(cmd_train(missing),
                      Catch::Matchers::ContainsSubstring(
                          "run the simulate command first"));
  // out2 has records but no checkpoint
  REQUIRE_THROWS_WITH(cmd_evaluate(cfg2),
                      Catch::Matchers::ContainsSubstring(
                          "run the train command first"));
}

TEST_CASE("an infinite SNR leaves the noisy records identical to the clean") {
  const fs::path out = fresh_dir("pipeline_quiet");
  RunConfig cfg = small_config(out);
  cfg.sim.train_duration = 5.0;
  cfg.sim.eval_duration = 5.0;
  cfg.sim.snr_db = std::numeric_limits<double>::infinity();
  cmd_simulate(cfg);
  REQUIRE(read_text_file((out / "sim" / "train1_clean.csv").string()) ==
          read_text_file((out / "sim" / "train1_noisy.csv").string()));
}

#ifdef GRIDODE_CLI_PATH

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GRIDODE_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("the command line front end reports outcomes through exit codes") {
  const fs::path dir = fresh_dir("cli");
  const fs::path log = dir / "log.txt";

  REQUIRE(run_cli("--help", log) == 0);
  REQUIRE_THAT(read_text_file(log.string()),
               Catch::Matchers::ContainsSubstring("simulate"));

  REQUIRE(run_cli("--definitely-not-a-flag simulate", log) == 2);
  REQUIRE(run_cli("frobnicate", log) == 2);
  REQUIRE(run_cli("", log) == 2);  // a subcommand is required

  // runtime failures (missing upstream artifacts) exit 1 with a message
  REQUIRE(run_cli("-o " + (dir / "empty").string() + " evaluate", log) == 1);
  REQUIRE_THAT(read_text_file(log.string()),
               Catch::Matchers::ContainsSubstring("error:"));
  REQUIRE_THAT(read_text_file(log.string()),
               Catch::Matchers::ContainsSubstring("simulate"));

  // a real (tiny) simulate run succeeds and names the artifact directory
  nlohmann::json tiny;
  tiny["sim"] = {{"train_duration", 2.0},
                 {"eval_duration", 2.0},
                 {"warmup", 0.5}};
  tiny["output_dir"] = (dir / "run").string();
  const fs::path cfg_path = dir / "tiny.json";
  write_text_file(cfg_path.string(), tiny.dump(2) + "\n");
  REQUIRE(run_cli("-c " + cfg_path.string() + " simulate", log) == 0);
  REQUIRE_THAT(read_text_file(log.string()),
               Catch::Matchers::ContainsSubstring("wrote"));
  REQUIRE(fs::exists(dir / "run" / "sim" / "train1_noisy.csv"));
}

#endif  // GRIDODE_CLI_PATH
