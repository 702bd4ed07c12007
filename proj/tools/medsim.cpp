#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "medsim/commands.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
  bool renormalize = false;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "experiment config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "override the master seed");
  cmd->add_option("-o,--out", opts.out, "override the output directory");
  cmd->add_option("-j,--threads", opts.threads, "worker threads (0 = all cores)");
  cmd->add_flag("--renormalize-rows", opts.renormalize,
                "renormalize W and U rows to unit sum before validation");
}

medsim::ExperimentConfig load(const CommonOpts& opts) {
  medsim::ExperimentConfig cfg = medsim::load_config(opts.config_path, opts.renormalize);
  if (opts.seed) cfg.seed.master_seed = *opts.seed;
  if (opts.threads != 0) cfg.ensemble.threads = opts.threads;
  std::optional<std::filesystem::path> cli_out;
  if (opts.out) cli_out = *opts.out;
  cfg.output.dir = medsim::resolve_output_dir(cli_out, cfg.output.dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification toolkit for bounded-diffusion messages (BBM) and "
               "message-driven opinion dynamics (MED)"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* sim_msg = app.add_subcommand(
      "simulate-message", "sample a message ensemble and write empirical statistics");
  auto* msg_stats = app.add_subcommand(
      "message-stats", "evaluate the analytic message law on checkpoint times");
  auto* sim_op = app.add_subcommand(
      "simulate-opinions", "sample an opinion ensemble and write per-agent statistics");
  auto* op_stats = app.add_subcommand(
      "opinion-stats", "evaluate analytic opinion moments and limits");
  auto* validate = app.add_subcommand(
      "validate", "simulate the configured ensemble and test it against the analytic law");
  for (CLI::App* cmd : {sim_msg, msg_stats, sim_op, op_stats, validate})
    add_common_options(cmd, opts);

  std::string repro_out;
  int repro_threads = 0;
  auto* repro = app.add_subcommand(
      "reproduce-paper", "regenerate the bundled reference datasets with the fixed seed");
  repro->add_option("-o,--out", repro_out, "output directory");
  repro->add_option("-j,--threads", repro_threads, "worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_msg->parsed()) cmd_simulate_message(load(opts));
    if (msg_stats->parsed()) cmd_message_stats(load(opts));
    if (sim_op->parsed()) cmd_simulate_opinions(load(opts));
    if (op_stats->parsed()) cmd_opinion_stats(load(opts));
    if (validate->parsed()) {
      medsim::ValidationReport report = medsim::cmd_validate(load(opts));
      std::cout << report.summary();
      return report.pass ? 0 : 1;
    }
    if (repro->parsed()) {
      std::optional<std::filesystem::path> cli_out;
      if (!repro_out.empty()) cli_out = repro_out;
      medsim::cmd_reproduce_reference(medsim::resolve_output_dir(cli_out, std::nullopt),
                                      repro_threads);
    }
  } catch (const medsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
