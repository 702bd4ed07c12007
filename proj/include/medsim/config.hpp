#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "medsim/core.hpp"
#include "medsim/ensemble.hpp"
#include "medsim/errors.hpp"

namespace medsim {

namespace detail {

// Cursor into a parsed config tree; every error names the full key path.
struct ConfigCursor {
  const nlohmann::json* node;
  std::string path;

  std::string join(const std::string& key) const { return path.empty() ? key : path + "." + key; }

  const nlohmann::json* find(const std::string& key) const {
    if (!node->is_object()) throw ConfigError("config key " + path + " must be an object");
    auto it = node->find(key);
    return it == node->end() || it->is_null() ? nullptr : &*it;
  }

  const nlohmann::json& require(const std::string& key) const {
    const nlohmann::json* child = find(key);
    if (!child) throw ConfigError("config is missing required key " + join(key));
    return *child;
  }

  ConfigCursor child(const std::string& key) const { return {&require(key), join(key)}; }

  std::optional<ConfigCursor> maybe_child(const std::string& key) const {
    const nlohmann::json* c = find(key);
    if (!c) return std::nullopt;
    return ConfigCursor{c, join(key)};
  }

  void allow_keys(std::initializer_list<const char*> allowed) const {
    if (!node->is_object()) throw ConfigError("config key " + path + " must be an object");
    for (auto it = node->begin(); it != node->end(); ++it) {
      bool known = false;
      for (const char* k : allowed)
        if (it.key() == k) known = true;
      if (!known) throw ConfigError("unknown config key " + join(it.key()));
    }
  }

  double number(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_number()) throw ConfigError("config key " + join(key) + " must be a number");
    return v.get<double>();
  }

  std::optional<double> maybe_number(const std::string& key) const {
    if (!find(key)) return std::nullopt;
    return number(key);
  }

  std::int64_t integer(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_number_integer()) throw ConfigError("config key " + join(key) + " must be an integer");
    return v.get<std::int64_t>();
  }

  std::optional<std::int64_t> maybe_integer(const std::string& key) const {
    if (!find(key)) return std::nullopt;
    return integer(key);
  }

  std::uint64_t uinteger(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError("config key " + join(key) + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    const nlohmann::json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError("config key " + join(key) + " must be a boolean");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const nlohmann::json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError("config key " + join(key) + " must be a string");
    return v->get<std::string>();
  }

  std::vector<double> number_list(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_array()) throw ConfigError("config key " + join(key) + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const nlohmann::json& e : v) {
      if (!e.is_number())
        throw ConfigError("config key " + join(key) + " must contain only numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Matrix matrix(const std::string& key) const {
    const nlohmann::json& v = require(key);
    if (!v.is_array() || v.empty() || !v[0].is_array())
      throw ConfigError("config key " + join(key) + " must be an array of rows");
    Index rows = static_cast<Index>(v.size());
    Index cols = static_cast<Index>(v[0].size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      const nlohmann::json& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Index>(row.size()) != cols)
        throw ConfigError("config key " + join(key) + " row " + std::to_string(i) +
                          " has wrong length");
      for (Index j = 0; j < cols; ++j) {
        const nlohmann::json& e = row[static_cast<std::size_t>(j)];
        if (!e.is_number())
          throw ConfigError("config key " + join(key) + " must contain only numbers");
        m(i, j) = e.get<double>();
      }
    }
    return m;
  }
};

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// Where and how much a command writes. An unset dir falls back to the
/// MEDSIM_OUT environment variable and then to "medsim-out".
struct OutputOptions {
  std::optional<std::filesystem::path> dir;
  bool raw_paths = false;
  Index stride = 1;
};

/// Output directory precedence: CLI flag, config value, MEDSIM_OUT, default.
inline std::filesystem::path resolve_output_dir(
    const std::optional<std::filesystem::path>& cli_dir,
    const std::optional<std::filesystem::path>& cfg_dir) {
  if (cli_dir) return *cli_dir;
  if (cfg_dir) return *cfg_dir;
  if (const char* env = std::getenv("MEDSIM_OUT"); env && *env) return env;
  return "medsim-out";
}

/// One fully resolved experiment: message model, grid, ensemble size and
/// seeding, optional opinion network, checkpoint overrides, output options.
struct ExperimentConfig {
  MessageModelParams message;
  TimeGrid grid;
  Index n_runs = 0;
  SeedSpec seed{};
  EnsembleOptions ensemble{};
  std::optional<NetworkModel> network;
  std::optional<Vector> o0;
  std::vector<double> hitting_times;
  std::vector<double> pdf_times;
  std::vector<double> moment_times;
  std::vector<double> mean_times;
  OutputOptions output{};
  bool renormalized_rows = false;

  /// Echo of the resolved config (post row renormalization), for provenance.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["message"]["c"] = message.c;
    j["message"]["xi_low"] = message.xi_low;
    j["message"]["xi_high"] = message.xi_high;
    if (message.fixed_s0) j["message"]["fixed_s0"] = *message.fixed_s0;
    j["grid"]["dt"] = grid.dt;
    j["grid"]["n_steps"] = grid.n_steps;
    j["ensemble"]["n_runs"] = n_runs;
    j["ensemble"]["seed"] = seed.master_seed;
    j["ensemble"]["n_bins"] = ensemble.n_bins;
    j["ensemble"]["bridge_correction"] = ensemble.bridge_correction;
    if (!ensemble.histogram_times.empty())
      j["ensemble"]["histogram_times"] = ensemble.histogram_times;
    if (network) {
      j["network"]["alpha"] = network->alpha;
      j["network"]["W"] = detail::matrix_to_json(network->W);
      j["network"]["U"] = detail::matrix_to_json(network->U);
      j["network"]["renormalize_rows"] = false;  // already applied below when set
      j["network"]["rows_were_renormalized"] = renormalized_rows;
    }
    if (o0) {
      std::vector<double> v(o0->data(), o0->data() + o0->size());
      j["opinion"]["o0"] = v;
    }
    nlohmann::json checks;
    if (!hitting_times.empty()) checks["hitting_times"] = hitting_times;
    if (!pdf_times.empty()) checks["pdf_times"] = pdf_times;
    if (!moment_times.empty()) checks["moment_times"] = moment_times;
    if (!mean_times.empty()) checks["mean_times"] = mean_times;
    if (!checks.is_null()) j["validate"] = checks;
    if (output.dir) j["output"]["dir"] = output.dir->string();
    j["output"]["raw_paths"] = output.raw_paths;
    j["output"]["stride"] = output.stride;
    return j;
  }
};

/// Builds a resolved config from a parsed tree. renormalize_flag (the CLI
/// switch) forces row renormalization even when the config does not ask.
inline ExperimentConfig config_from_json(const nlohmann::json& root, bool renormalize_flag = false) {
  detail::ConfigCursor top{&root, ""};
  top.allow_keys({"message", "grid", "ensemble", "network", "opinion", "validate", "output"});

  detail::ConfigCursor msg = top.child("message");
  msg.allow_keys({"c", "xi_low", "xi_high", "fixed_s0"});
  MessageModelParams message = [&] {
    try {
      return MessageModelParams(msg.number("c"), msg.number("xi_low"), msg.number("xi_high"),
                                msg.maybe_number("fixed_s0"));
    } catch (const DomainError& e) {
      throw ConfigError("config key message: " + std::string(e.what()));
    }
  }();

  detail::ConfigCursor grid_node = top.child("grid");
  grid_node.allow_keys({"dt", "n_steps"});
  TimeGrid grid = [&] {
    try {
      return TimeGrid(grid_node.number("dt"), grid_node.integer("n_steps"));
    } catch (const DomainError& e) {
      throw ConfigError("config key grid: " + std::string(e.what()));
    }
  }();

  detail::ConfigCursor ens = top.child("ensemble");
  ens.allow_keys({"n_runs", "seed", "n_bins", "bridge_correction", "histogram_times", "threads"});
  ExperimentConfig cfg{message, grid};
  cfg.n_runs = ens.integer("n_runs");
  if (cfg.n_runs < 2) throw ConfigError("config key ensemble.n_runs must be at least 2");
  cfg.seed.master_seed = ens.uinteger("seed");
  cfg.ensemble.n_bins = ens.maybe_integer("n_bins").value_or(100);
  if (cfg.ensemble.n_bins < 1) throw ConfigError("config key ensemble.n_bins must be positive");
  cfg.ensemble.bridge_correction = ens.boolean("bridge_correction", true);
  if (ens.find("histogram_times")) cfg.ensemble.histogram_times = ens.number_list("histogram_times");
  cfg.ensemble.threads = static_cast<int>(ens.maybe_integer("threads").value_or(0));

  if (auto net = top.maybe_child("network")) {
    net->allow_keys({"alpha", "W", "U", "renormalize_rows"});
    NetworkModel model;
    model.W = net->matrix("W");
    model.U = net->matrix("U");
    model.n_agents = model.W.rows();
    model.n_sources = model.U.cols();
    model.alpha = net->number("alpha");
    bool renorm = renormalize_flag || net->boolean("renormalize_rows", false);
    if (renorm) {
      model = renormalize_rows(std::move(model));
      cfg.renormalized_rows = true;
    }
    cfg.network = validate_network(std::move(model));
  }

  if (auto op = top.maybe_child("opinion")) {
    op->allow_keys({"o0"});
    std::vector<double> o0 = op->number_list("o0");
    cfg.o0 = Eigen::Map<const Vector>(o0.data(), static_cast<Index>(o0.size()));
  }

  if (auto val = top.maybe_child("validate")) {
    val->allow_keys({"hitting_times", "pdf_times", "moment_times", "mean_times"});
    if (val->find("hitting_times")) cfg.hitting_times = val->number_list("hitting_times");
    if (val->find("pdf_times")) cfg.pdf_times = val->number_list("pdf_times");
    if (val->find("moment_times")) cfg.moment_times = val->number_list("moment_times");
    if (val->find("mean_times")) cfg.mean_times = val->number_list("mean_times");
  }

  if (auto out = top.maybe_child("output")) {
    out->allow_keys({"dir", "raw_paths", "stride"});
    std::string dir = out->text("dir", "");
    if (!dir.empty()) cfg.output.dir = dir;
    cfg.output.raw_paths = out->boolean("raw_paths", false);
    cfg.output.stride = out->maybe_integer("stride").value_or(1);
    if (cfg.output.stride < 1) throw ConfigError("config key output.stride must be positive");
  }
  return cfg;
}

/// Loads and resolves a config file. Parse errors report the line number;
/// semantic errors report the key path.
inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    bool renormalize_flag = false) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string content = buffer.str();
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < content.size(); ++i)
      if (content[i] == '\n') ++line;
    throw ConfigError("parse error in " + path.string() + " at line " + std::to_string(line) +
                      ": " + e.what());
  }
  return config_from_json(root, renormalize_flag);
}

}  // namespace medsim
