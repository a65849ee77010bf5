// Command-line front end: simulate a droop-controlled network, window the
// records into datasets, train/search identification models and score them.
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gridode/pipeline.hpp"

namespace {

struct Overrides {
  std::optional<std::string> output_dir;
  std::optional<std::string> snr_db;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<int> max_epochs;
  std::optional<int> trials;
  int threads = 1;
};

gridode::pipeline::RunConfig resolve_config(const std::string& config_path,
                                            const Overrides& ov) {
  namespace pl = gridode::pipeline;
  pl::RunConfig cfg;
  if (!config_path.empty())
    cfg = pl::config_from_json(
        nlohmann::json::parse(gridode::read_text_file(config_path)));
  if (ov.output_dir) cfg.output_dir = *ov.output_dir;
  if (ov.snr_db) {
    if (*ov.snr_db == "inf")
      cfg.sim.snr_db = std::numeric_limits<double>::infinity();
    else
      cfg.sim.snr_db = std::stod(*ov.snr_db);
  }
  if (ov.seed) cfg.sim.seed = *ov.seed;
  if (ov.model) cfg.model.kind = *ov.model;
  if (ov.max_epochs) {
    cfg.train.max_epochs = *ov.max_epochs;
    cfg.hpo.max_epochs = *ov.max_epochs;
  }
  if (ov.trials) cfg.hpo.n_trials = *ov.trials;
  cfg.hpo.threads = ov.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gridode: droop-controlled grid simulation and dynamics identification"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  app.add_option("-c,--config", config_path,
                 "run configuration JSON (defaults apply when omitted)");
  app.add_option("-o,--output-dir", [&](const CLI::results_t& r) {
       ov.output_dir = r.at(0);
       return true;
     },
     "artifact root (also honors $GRIDODE_OUT)");
  app.add_option("--threads", ov.threads,
                 "worker threads for the hyperparameter search")
      ->default_val(1);

  auto* sim = app.add_subcommand(
      "simulate", "integrate the network and write trajectory records");
  sim->add_option("--snr-db", [&](const CLI::results_t& r) {
       ov.snr_db = r.at(0);
       return true;
     },
     "measurement noise level in dB, or 'inf' for none");
  sim->add_option("--seed", [&](const CLI::results_t& r) {
       ov.seed = std::stoull(r.at(0));
       return true;
     },
     "base seed for excitation and noise draws");

  auto* mkdata = app.add_subcommand(
      "make-data", "window the trajectory records into datasets");

  const auto add_model_flag = [&](CLI::App* cmd) {
    cmd->add_option("--model", [&](const CLI::results_t& r) {
         ov.model = r.at(0);
         return true;
       },
       "model kind: tcn-anode or mlp-anode");
  };
  auto* train = app.add_subcommand("train", "fit one identification model");
  add_model_flag(train);
  train->add_option("--max-epochs", [&](const CLI::results_t& r) {
        ov.max_epochs = std::stoi(r.at(0));
        return true;
      },
      "training epoch budget");

  auto* hpo = app.add_subcommand(
      "hpo", "random hyperparameter search with early pruning");
  hpo->add_option("--trials", [&](const CLI::results_t& r) {
       ov.trials = std::stoi(r.at(0));
       return true;
     },
     "number of search trials");
  hpo->add_option("--max-epochs", [&](const CLI::results_t& r) {
       ov.max_epochs = std::stoi(r.at(0));
       return true;
     },
     "per-trial epoch budget");

  auto* eval = app.add_subcommand(
      "evaluate", "score a trained model on the held-out record");
  add_model_flag(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto cfg = resolve_config(config_path, ov);
    std::filesystem::path out;
    if (sim->parsed()) out = gridode::pipeline::cmd_simulate(cfg);
    if (mkdata->parsed()) out = gridode::pipeline::cmd_make_data(cfg);
    if (train->parsed()) out = gridode::pipeline::cmd_train(cfg);
    if (hpo->parsed()) out = gridode::pipeline::cmd_hpo(cfg);
    if (eval->parsed()) out = gridode::pipeline::cmd_evaluate(cfg);
    std::cout << "wrote " << out.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
