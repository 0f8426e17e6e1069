#pragma once

#include <string>
#include <vector>

#include "loopflow/engine.hpp"

namespace loopflow {

// One per-step component of the observation tuple: the sample
// (signal, t - lag) at every observed step t.
struct ObsComponent {
  int signal;
  int lag = 0;
};

// Exact finite-state reformulation of a LoopSystem, valid when every map
// has a finite window (always true in this DSL) and the exogenous groups
// are i.i.d. across time in the observed region. The hidden state is the
// tuple of lagged samples the steady-state maps reference.
struct MarkovModel {
  int num_states = 0;
  std::vector<std::pair<int, int>> state_layout;  // (signal, lag) per component
  std::vector<std::vector<int>> state_values;     // per state, component values

  std::vector<int> obs_sizes;
  std::vector<std::string> obs_names;
  int obs_card = 1;

  // kernel[(s * obs_card + o) * num_states + s'] = P(s', o | s); rows over
  // (o, s') sum to 1.
  std::vector<double> kernel;

  // Joint distribution over (warm-up observation tuple, state at
  // first_obs_step - 1); total mass 1.
  std::vector<int> warm_sizes;
  std::vector<std::string> warm_names;
  int warm_card = 1;
  std::vector<double> initial;

  int first_obs_step = 1;

  double k(int s, int o, int s2) const {
    return kernel[(static_cast<std::size_t>(s) * obs_card + o) * num_states + s2];
  }
};

// Compiles the system into a MarkovModel whose per-step observation tuple
// is `components`, observed from step `first_obs_step` through the
// horizon. Per-step overrides (block or exogenous) must all lie before
// first_obs_step. `warm_obs` lists warm-up samples to expose as observed
// root branches (e.g. y@0 when conditioning streams start one step early).
MarkovModel compile_fsm(const LoopSystem& sys, const std::vector<ObsComponent>& components,
                        int first_obs_step, const std::vector<VarId>& warm_obs = {},
                        const EngineConfig& config = {});

// Per-step, per-component conditional entropies of the observation chain:
//   bits[i][c] = H(o_c(i) | o^{i-1}, o_{<c}(i))        [bits]
// computed by expanding the observation-prefix tree with exact belief
// propagation. warm_bits carries the chain terms of the warm-up
// observations, which every later term is conditioned on.
struct ChainEntropies {
  int first_step = 0;
  int last_step = 0;
  std::vector<std::string> warm_names;
  std::vector<double> warm_bits;
  std::vector<std::string> component_names;
  std::vector<std::vector<double>> bits;

  double total() const;
  // Sum of column c over all steps (not including warm-up terms).
  double component_total(int c) const;
};

ChainEntropies tree_chain_entropies(const MarkovModel& model, int last_step,
                                    const EngineConfig& config = {});

}  // namespace loopflow
