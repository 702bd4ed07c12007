#pragma once

#include "medsim/config.hpp"
#include "medsim/core.hpp"

namespace medsim {

/// Master seed used by the bundled reference experiments; fixed so repeated
/// runs regenerate byte-identical datasets.
inline constexpr std::uint64_t kReferenceSeed = 1729;

/// Influence matrix of the bundled three-agent reference network, as
/// originally tabulated. Row 0 sums to 0.7, so it is renormalized before use.
inline Matrix reference_influence_raw() {
  Matrix w(3, 3);
  w << 0.2, 0.3, 0.2,
       0.7, 0.2, 0.1,
       0.1, 0.1, 0.8;
  return w;
}

/// Attention matrix of the reference network, as originally tabulated.
/// Row 1 sums to 0.4, so it is renormalized before use.
inline Matrix reference_attention_raw() {
  Matrix u(3, 2);
  u << 0.8, 0.2,
       0.2, 0.2,
       0.2, 0.8;
  return u;
}

/// The reference network with rows renormalized to be stochastic.
inline NetworkModel reference_network() {
  NetworkModel model;
  model.W = reference_influence_raw();
  model.U = reference_attention_raw();
  model.n_agents = 3;
  model.n_sources = 2;
  model.alpha = 0.3;
  return validate_network(renormalize_rows(std::move(model)));
}

/// Message ensemble with every path started at s0 = 0.3 (absorption curves
/// and interior histograms).
inline ExperimentConfig reference_message_conditional_config() {
  ExperimentConfig cfg{MessageModelParams(1.0, 0.2, 0.8, 0.3), TimeGrid(1e-4, 50000)};
  cfg.n_runs = 10000;
  cfg.seed.master_seed = kReferenceSeed;
  cfg.ensemble.n_bins = 100;
  cfg.ensemble.histogram_times = {0.005, 0.01, 0.02};
  return cfg;
}

/// Message ensemble with uniform starts on [0.2, 0.8] (moment trajectories).
inline ExperimentConfig reference_message_uniform_config() {
  ExperimentConfig cfg{MessageModelParams(1.0, 0.2, 0.8), TimeGrid(1e-4, 50000)};
  cfg.n_runs = 10000;
  cfg.seed.master_seed = kReferenceSeed;
  return cfg;
}

/// Opinion ensemble on the reference network: three agents, two sources,
/// alpha = 0.3, o0 = (0.2, 0.2, 0.8), horizon 50.
inline ExperimentConfig reference_opinion_config() {
  ExperimentConfig cfg{MessageModelParams(1.0, 0.2, 0.8), TimeGrid(0.005, 10000)};
  cfg.n_runs = 10000;
  cfg.seed.master_seed = kReferenceSeed;
  cfg.network = reference_network();
  Vector o0(3);
  o0 << 0.2, 0.2, 0.8;
  cfg.o0 = o0;
  cfg.renormalized_rows = true;
  return cfg;
}

}  // namespace medsim
