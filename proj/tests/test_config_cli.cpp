#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "medsim/config.hpp"
#include "medsim/errors.hpp"

using namespace medsim;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = MEDSIM_TEST_DATA_DIR;

nlohmann::json parse(const char* text) { return nlohmann::json::parse(text); }

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// exit code of one CLI invocation, stdout/stderr discarded
int run_cli(const std::string& args) {
  const char* bin = std::getenv("MEDSIM_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "MEDSIM_BIN must point at the CLI binary");
  std::string cmd = std::string("\"") + bin + "\" " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "medsim-cli-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("a full config file resolves into typed fields") {
  ExperimentConfig cfg = load_config(kDataDir / "message_small.json");
  CHECK(cfg.message.c == 1.0);
  CHECK(cfg.message.xi_low == 0.2);
  CHECK(cfg.message.xi_high == 0.8);
  REQUIRE(cfg.message.fixed_s0.has_value());
  CHECK(*cfg.message.fixed_s0 == 0.3);
  CHECK(cfg.grid.dt == 0.001);
  CHECK(cfg.grid.n_steps == 50);
  CHECK(cfg.n_runs == 64);
  CHECK(cfg.seed.master_seed == 7);
  CHECK(cfg.ensemble.n_bins == 20);
  CHECK(cfg.ensemble.bridge_correction);
  REQUIRE(cfg.ensemble.histogram_times.size() == 1);
  CHECK(cfg.ensemble.histogram_times[0] == 0.02);
  CHECK(cfg.output.stride == 5);
  CHECK_FALSE(cfg.output.dir.has_value());
  CHECK_FALSE(cfg.network.has_value());

  ExperimentConfig opinion = load_config(kDataDir / "opinion_small.json");
  REQUIRE(opinion.network.has_value());
  CHECK(opinion.network->n_agents == 3);
  CHECK(opinion.network->n_sources == 2);
  CHECK(opinion.renormalized_rows);
  CHECK(opinion.network->W(0, 1) == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(opinion.network->U(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  REQUIRE(opinion.o0.has_value());
  CHECK(opinion.o0->size() == 3);
  CHECK((*opinion.o0)[2] == 0.8);
}

TEST_CASE("config errors name the offending key path") {
  auto message_of = [](auto fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  std::string missing = message_of([&] {
    config_from_json(parse(R"({"message": {"c": 1.0, "xi_high": 0.8},
                               "grid": {"dt": 0.1, "n_steps": 1},
                               "ensemble": {"n_runs": 2, "seed": 0}})"));
  });
  CHECK(missing.find("message.xi_low") != std::string::npos);

  std::string bad_type = message_of([&] {
    config_from_json(parse(R"({"message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8},
                               "grid": {"dt": "fast", "n_steps": 1},
                               "ensemble": {"n_runs": 2, "seed": 0}})"));
  });
  CHECK(bad_type.find("grid.dt") != std::string::npos);
  CHECK(bad_type.find("number") != std::string::npos);

  std::string unknown = message_of([&] {
    config_from_json(parse(R"({"message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8,
                                           "sigma": 2.0},
                               "grid": {"dt": 0.1, "n_steps": 1},
                               "ensemble": {"n_runs": 2, "seed": 0}})"));
  });
  CHECK(unknown.find("unknown config key message.sigma") != std::string::npos);

  std::string domain = message_of([&] {
    config_from_json(parse(R"({"message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8,
                                           "fixed_s0": 1.5},
                               "grid": {"dt": 0.1, "n_steps": 1},
                               "ensemble": {"n_runs": 2, "seed": 0}})"));
  });
  CHECK(domain.find("message") != std::string::npos);
  CHECK(domain.find("fixed_s0") != std::string::npos);

  CHECK_THROWS_AS(config_from_json(parse(
                      R"({"message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8},
                          "grid": {"dt": 0.1, "n_steps": 1},
                          "ensemble": {"n_runs": 1, "seed": 0}})")),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(parse(
                      R"({"message": {"c": 1.0, "xi_low": 0.2, "xi_high": 0.8},
                          "grid": {"dt": 0.1, "n_steps": 1},
                          "ensemble": {"n_runs": 2, "seed": 0},
                          "output": {"stride": 0}})")),
                  ConfigError);
}

TEST_CASE("parse failures report the file and line") {
  try {
    load_config(kDataDir / "bad_parse.json");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("bad_parse.json") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config(kDataDir / "does_not_exist.json"), ConfigError);
}

TEST_CASE("raw network rows need explicit renormalization") {
  CHECK_THROWS_AS(load_config(kDataDir / "opinion_raw_rows.json"), RowSumError);
  ExperimentConfig fixed = load_config(kDataDir / "opinion_raw_rows.json", true);
  CHECK(fixed.renormalized_rows);
  CHECK(fixed.network->W.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("output directory resolution order") {
  unsetenv("MEDSIM_OUT");
  CHECK(resolve_output_dir(std::nullopt, std::nullopt) == fs::path("medsim-out"));
  setenv("MEDSIM_OUT", "/tmp/medsim-envout", 1);
  CHECK(resolve_output_dir(std::nullopt, std::nullopt) == fs::path("/tmp/medsim-envout"));
  CHECK(resolve_output_dir(std::nullopt, fs::path("cfg-dir")) == fs::path("cfg-dir"));
  CHECK(resolve_output_dir(fs::path("cli-dir"), fs::path("cfg-dir")) == fs::path("cli-dir"));
  unsetenv("MEDSIM_OUT");
}

TEST_CASE("cli: help and argument errors") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("simulate-message --help") == 0);
  CHECK(run_cli("") == 2);                                  // a subcommand is required
  CHECK(run_cli("simulate-message") == 2);                  // --config is required
  CHECK(run_cli("simulate-message --nope") == 2);           // unknown flag
  CHECK(run_cli("simulate-message -c /no/such/file.json") == 2);
  CHECK(run_cli("simulate-message -c " + quoted(kDataDir / "bad_parse.json")) == 2);
}

TEST_CASE("cli: simulate-message writes deterministic datasets") {
  fs::path dir1 = fresh_dir("sim-msg-1");
  fs::path dir2 = fresh_dir("sim-msg-2");
  fs::path dir3 = fresh_dir("sim-msg-3");
  std::string cfg = quoted(kDataDir / "message_small.json");
  CHECK(run_cli("simulate-message -c " + cfg + " -o " + quoted(dir1)) == 0);
  CHECK(run_cli("simulate-message -c " + cfg + " -o " + quoted(dir2)) == 0);
  CHECK(run_cli("simulate-message -c " + cfg + " -o " + quoted(dir3) + " -j 3") == 0);

  for (const fs::path& dir : {dir1, dir2, dir3}) {
    CHECK(fs::exists(dir / "message_stats.csv"));
    CHECK(fs::exists(dir / "histogram_t0.02.csv"));
    CHECK(fs::exists(dir / "meta.json"));
  }
  // identical bytes across reruns and thread counts
  CHECK(slurp(dir1 / "message_stats.csv") == slurp(dir2 / "message_stats.csv"));
  CHECK(slurp(dir1 / "message_stats.csv") == slurp(dir3 / "message_stats.csv"));
  CHECK(slurp(dir1 / "histogram_t0.02.csv") == slurp(dir2 / "histogram_t0.02.csv"));

  // a different seed changes the sample
  fs::path dir4 = fresh_dir("sim-msg-4");
  CHECK(run_cli("simulate-message -c " + cfg + " -o " + quoted(dir4) + " --seed 99") == 0);
  CHECK(slurp(dir1 / "message_stats.csv") != slurp(dir4 / "message_stats.csv"));

  // strided output: header plus 11 of the 51 grid points
  std::string stats = slurp(dir1 / "message_stats.csv");
  CHECK(std::count(stats.begin(), stats.end(), '\n') == 12);
  CHECK(stats.rfind("t,mean,variance,se_mean,se_variance,absorbed_zero,absorbed_one,", 0) == 0);

  nlohmann::json meta = nlohmann::json::parse(slurp(dir1 / "meta.json"));
  CHECK(meta["command"] == "simulate-message");
  CHECK(meta["config"]["ensemble"]["n_runs"] == 64);
  CHECK(meta["results"].contains("final_absorbed_zero"));
}

TEST_CASE("cli: message-stats writes law tables") {
  fs::path dir = fresh_dir("msg-stats");
  CHECK(run_cli("message-stats -c " + quoted(kDataDir / "message_small.json") + " -o " +
                quoted(dir)) == 0);
  CHECK(fs::exists(dir / "message_law.csv"));
  CHECK(fs::exists(dir / "pdf_t0.02.csv"));
  std::string law = slurp(dir / "message_law.csv");
  CHECK(law.rfind("t,absorbed_zero,absorbed_one,interior_mass,mean,", 0) == 0);
  nlohmann::json meta = nlohmann::json::parse(slurp(dir / "meta.json"));
  CHECK(meta["results"]["asymptotic_absorbed_one"] == 0.3);
  CHECK(meta["results"]["delta_sq"] == 0.0);
}

TEST_CASE("cli: opinion commands honor the row renormalization flag") {
  fs::path dir = fresh_dir("sim-op");
  std::string cfg = quoted(kDataDir / "opinion_small.json");
  CHECK(run_cli("simulate-opinions -c " + cfg + " -o " + quoted(dir)) == 0);
  CHECK(fs::exists(dir / "opinion_stats.csv"));
  std::string header = slurp(dir / "opinion_stats.csv");
  CHECK(header.rfind("t,mean_0,mean_1,mean_2,variance_0,", 0) == 0);
  nlohmann::json meta = nlohmann::json::parse(slurp(dir / "meta.json"));
  CHECK(meta["config"]["network"]["rows_were_renormalized"] == true);

  // raw rows: rejected without the flag, accepted with it
  fs::path dir2 = fresh_dir("op-stats");
  std::string raw = quoted(kDataDir / "opinion_raw_rows.json");
  CHECK(run_cli("opinion-stats -c " + raw + " -o " + quoted(dir2)) == 2);
  CHECK(run_cli("opinion-stats -c " + raw + " -o " + quoted(dir2) + " --renormalize-rows") == 0);
  CHECK(fs::exists(dir2 / "opinion_mean.csv"));
  CHECK(fs::exists(dir2 / "opinion_limits.csv"));
  std::string limits = slurp(dir2 / "opinion_limits.csv");
  CHECK(limits.rfind("agent,mean_limit,variance_limit,consensus_value", 0) == 0);
  CHECK(std::count(limits.begin(), limits.end(), '\n') == 4);
}

TEST_CASE("cli: validate returns the verdict in the exit code") {
  fs::path pass_dir = fresh_dir("validate-pass");
  CHECK(run_cli("validate -c " + quoted(kDataDir / "validate_message.json") + " -o " +
                quoted(pass_dir)) == 0);
  nlohmann::json report = nlohmann::json::parse(slurp(pass_dir / "validation_report.json"));
  CHECK(report["pass"] == true);
  CHECK(report["checks"].is_array());
  CHECK(report["checks"].size() > 10);

  fs::path fail_dir = fresh_dir("validate-fail");
  CHECK(run_cli("validate -c " + quoted(kDataDir / "validate_coarse_no_bridge.json") + " -o " +
                quoted(fail_dir)) == 1);
  nlohmann::json failed = nlohmann::json::parse(slurp(fail_dir / "validation_report.json"));
  CHECK(failed["pass"] == false);
}
