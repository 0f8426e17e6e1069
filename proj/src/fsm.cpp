#include "loopflow/fsm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

namespace loopflow {

namespace {

constexpr std::size_t kMaxStates = 1u << 16;

struct NeededInfo {
  std::vector<bool> signal;        // needed signals
  std::vector<int> max_lag;        // per signal, over needed consumers
  std::vector<int> step_order;     // needed internal signals in intra-step order
  std::vector<int> needed_groups;  // exogenous groups to draw
};

NeededInfo compute_needed(const LoopSystem& sys, const std::vector<ObsComponent>& comps) {
  const SystemDecl& decl = sys.decl();
  const int num = sys.num_signals();
  NeededInfo info;
  info.signal.assign(num, false);
  info.max_lag.assign(num, 0);

  std::deque<int> queue;
  auto mark = [&](int id, int lag) {
    info.max_lag[id] = std::max(info.max_lag[id], lag);
    if (!info.signal[id]) {
      info.signal[id] = true;
      queue.push_back(id);
    }
  };
  for (const ObsComponent& c : comps) mark(c.signal, c.lag);
  while (!queue.empty()) {
    int id = queue.front();
    queue.pop_front();
    if (decl.signals[id].role == Role::Exogenous) continue;
    if (const LookupTable* lut = sys.map_lut(id)) {
      (void)lut;
      for (const auto& [src, lag] : sys.lut_inputs(id)) mark(src, lag);
    } else {
      // Steady-state references only; warm-up steps are simulated directly.
      for_each_ref(*sys.map_expr(id, sys.horizon()),
                   [&](const std::string& name, int lag) {
                     mark(sys.require_signal(name), lag);
                   });
    }
  }

  for (const SampleRef& s : sys.eval_order())
    if (s.t == sys.horizon() && info.signal[s.signal])
      info.step_order.push_back(s.signal);

  std::set<int> groups;
  for (int id = 0; id < num; ++id)
    if (info.signal[id] && decl.signals[id].role == Role::Exogenous)
      groups.insert(sys.group_of(id));
  info.needed_groups.assign(groups.begin(), groups.end());
  return info;
}

}  // namespace

MarkovModel compile_fsm(const LoopSystem& sys, const std::vector<ObsComponent>& components,
                        int first_obs_step, const std::vector<VarId>& warm_obs,
                        const EngineConfig& config) {
  const SystemDecl& decl = sys.decl();
  if (components.empty()) throw Error("compile_fsm: no observation components");
  if (first_obs_step > sys.horizon())
    throw Error("compile_fsm: first observed step beyond horizon");
  if (sys.last_override_step() >= first_obs_step)
    throw NonIIDExogenous(
        "per-step overrides extend into the observed region; the model is "
        "only stationary from step " + std::to_string(sys.last_override_step() + 1));

  NeededInfo need = compute_needed(sys, components);

  MarkovModel model;
  model.first_obs_step = first_obs_step;
  for (const ObsComponent& c : components) {
    const SignalDecl& sig = decl.signals[c.signal];
    if (first_obs_step - c.lag < sig.start_index)
      throw Error("compile_fsm: observation of '" + sig.name +
                  "' not defined at the first observed step");
    model.obs_sizes.push_back(sig.alphabet.size);
    model.obs_names.push_back(c.lag == 0 ? sig.name : sig.name + "[-" + std::to_string(c.lag) + "]");
    model.obs_card *= sig.alphabet.size;
  }

  for (int id = 0; id < sys.num_signals(); ++id)
    if (need.signal[id])
      for (int lag = 1; lag <= need.max_lag[id]; ++lag)
        model.state_layout.emplace_back(id, lag);

  // Warm-up: enumerate the exogenous cells before first_obs_step, run the
  // corresponding prefix of the evaluation order, and record the initial
  // (warm observation, state) joint.
  for (const VarId& v : warm_obs) {
    if (v.t >= first_obs_step)
      throw Error("compile_fsm: warm-up observation at or after the first observed step");
    if (v.t < sys.sample_floor(v.signal))
      throw Error("compile_fsm: warm-up observation before the signal's first value");
    model.warm_sizes.push_back(decl.signals[v.signal].alphabet.size);
    model.warm_names.push_back(var_name(sys, v));
    model.warm_card *= decl.signals[v.signal].alphabet.size;
  }

  struct WarmAtom {
    int warm_idx;
    std::vector<int> state;
    double mass;
  };
  std::vector<WarmAtom> warm_atoms;
  {
    // Exogenous cells strictly before the observed region.
    std::vector<std::pair<int, int>> cells;  // (group, t)
    double warm_count = 1.0;
    for (std::size_t g = 0; g < decl.exogenous.groups.size(); ++g) {
      const ExogenousGroup& grp = decl.exogenous.groups[g];
      int start = decl.signals[sys.signal_id(grp.signals[0])].start_index;
      for (int t = start; t < first_obs_step; ++t) {
        cells.emplace_back(static_cast<int>(g), t);
        auto it = grp.step_pmfs.find(t);
        const std::vector<double>& pmf = it != grp.step_pmfs.end() ? it->second : grp.iid_pmf;
        int support = 0;
        for (double p : pmf) support += p > 0.0;
        warm_count *= support;
      }
    }
    if (warm_count > static_cast<double>(config.budget_atoms))
      throw BudgetExceeded("fsm warm-up enumeration", warm_count,
                           static_cast<double>(config.budget_atoms));

    std::vector<const std::vector<double>*> pmfs;
    std::vector<std::vector<int>> supports;
    for (const auto& [g, t] : cells) {
      const ExogenousGroup& grp = decl.exogenous.groups[g];
      auto it = grp.step_pmfs.find(t);
      pmfs.push_back(it != grp.step_pmfs.end() ? &it->second : &grp.iid_pmf);
      std::vector<int> sup;
      for (int v = 0; v < static_cast<int>(pmfs.back()->size()); ++v)
        if ((*pmfs.back())[v] > 0.0) sup.push_back(v);
      supports.push_back(std::move(sup));
    }

    Trajectory tr;
    tr.values.resize(decl.signals.size());
    tr.floors.resize(decl.signals.size());
    for (int i = 0; i < sys.num_signals(); ++i) {
      tr.floors[i] = sys.sample_floor(i);
      tr.values[i].assign(static_cast<std::size_t>(sys.horizon() - tr.floors[i] + 1), 0);
      for (const auto& [t, v] : decl.signals[i].prologue)
        tr.values[i][t - tr.floors[i]] = v;
    }

    std::vector<int> digits(cells.size(), 0);
    bool more = true;
    if (cells.empty()) more = true;  // still one (empty) warm atom
    SampleFn env = [&tr](int sig, int t) -> long long {
      return tr.values[sig][t - tr.floors[sig]];
    };
    do {
      double w = 1.0;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        int tuple = supports[c][digits[c]];
        w *= (*pmfs[c])[tuple];
        const ExogenousGroup& grp = decl.exogenous.groups[cells[c].first];
        int div = 1;
        for (int slot = static_cast<int>(grp.signals.size()) - 1; slot >= 0; --slot) {
          int id = sys.signal_id(grp.signals[slot]);
          int size = decl.signals[id].alphabet.size;
          tr.values[id][cells[c].second - tr.floors[id]] = (tuple / div) % size;
          div *= size;
        }
      }
      for (const SampleRef& s : sys.eval_order()) {
        if (s.t >= first_obs_step) continue;
        int out;
        if (const LookupTable* lut = sys.map_lut(s.signal)) {
          std::size_t idx = 0;
          for (const auto& [id, lag] : sys.lut_inputs(s.signal))
            idx = idx * static_cast<std::size_t>(decl.signals[id].alphabet.size) +
                  static_cast<std::size_t>(tr.value(id, s.t - lag));
          out = lut->outputs[idx];
        } else {
          out = reduce_symbol(eval_expr(*sys.map_expr(s.signal, s.t), s.t, env),
                              decl.signals[s.signal].alphabet.size);
        }
        tr.values[s.signal][s.t - tr.floors[s.signal]] = out;
      }
      WarmAtom atom;
      atom.mass = w;
      atom.warm_idx = 0;
      for (std::size_t i = 0; i < warm_obs.size(); ++i)
        atom.warm_idx = atom.warm_idx * model.warm_sizes[i] +
                        tr.value(warm_obs[i].signal, warm_obs[i].t);
      for (const auto& [id, lag] : model.state_layout) {
        int t = first_obs_step - lag;
        if (t < sys.sample_floor(id))
          throw Error("compile_fsm: state component " + decl.signals[id].name +
                      " at lag " + std::to_string(lag) +
                      " reaches before the signal's first value");
        atom.state.push_back(tr.value(id, t));
      }
      warm_atoms.push_back(std::move(atom));

      more = false;
      for (int c = static_cast<int>(cells.size()) - 1; c >= 0; --c) {
        if (++digits[c] < static_cast<int>(supports[c].size())) {
          more = true;
          break;
        }
        digits[c] = 0;
      }
    } while (more);
  }

  // State discovery and kernel construction.
  std::map<std::vector<int>, int> state_index;
  std::deque<int> frontier;
  auto intern_state = [&](const std::vector<int>& tuple) {
    auto it = state_index.find(tuple);
    if (it != state_index.end()) return it->second;
    int idx = static_cast<int>(state_index.size());
    if (state_index.size() >= kMaxStates)
      throw BudgetExceeded("fsm state space", static_cast<double>(kMaxStates) * 2,
                           static_cast<double>(kMaxStates));
    state_index.emplace(tuple, idx);
    model.state_values.push_back(tuple);
    frontier.push_back(idx);
    return idx;
  };
  for (const WarmAtom& atom : warm_atoms) intern_state(atom.state);

  // Draw space over the needed groups at a steady step.
  struct DrawCell {
    int group;
    const std::vector<double>* pmf;
    std::vector<int> support;
  };
  std::vector<DrawCell> draw_cells;
  for (int g : need.needed_groups) {
    DrawCell cell;
    cell.group = g;
    cell.pmf = &decl.exogenous.groups[g].iid_pmf;
    for (int v = 0; v < static_cast<int>(cell.pmf->size()); ++v)
      if ((*cell.pmf)[v] > 0.0) cell.support.push_back(v);
    draw_cells.push_back(std::move(cell));
  }

  // Scratch sample store for one transition evaluation: lagged values come
  // from the state, step values are computed in place. Indexed per signal
  // by lag (0 = current step).
  std::vector<std::vector<int>> scratch(decl.signals.size());
  for (int id = 0; id < sys.num_signals(); ++id)
    scratch[id].assign(static_cast<std::size_t>(need.max_lag[id]) + 1, 0);
  const int step_now = sys.horizon();  // any steady step; maps are stationary
  SampleFn env = [&scratch, step_now](int sig, int t) -> long long {
    return scratch[sig][step_now - t];
  };

  std::vector<std::map<std::pair<int, int>, double>> rows;  // per state: (o, s') -> p
  while (!frontier.empty()) {
    int s_idx = frontier.front();
    frontier.pop_front();
    const std::vector<int> state = model.state_values[s_idx];
    if (static_cast<int>(rows.size()) <= s_idx) rows.resize(s_idx + 1);

    std::vector<int> digits(draw_cells.size(), 0);
    bool more = true;
    while (more) {
      double w = 1.0;
      for (std::size_t c = 0; c < draw_cells.size(); ++c) {
        int tuple = draw_cells[c].support[digits[c]];
        w *= (*draw_cells[c].pmf)[tuple];
        const ExogenousGroup& grp = decl.exogenous.groups[draw_cells[c].group];
        int div = 1;
        for (int slot = static_cast<int>(grp.signals.size()) - 1; slot >= 0; --slot) {
          int id = sys.signal_id(grp.signals[slot]);
          int size = decl.signals[id].alphabet.size;
          scratch[id][0] = (tuple / div) % size;
          div *= size;
        }
      }
      for (std::size_t i = 0; i < model.state_layout.size(); ++i) {
        const auto& [id, lag] = model.state_layout[i];
        scratch[id][lag] = state[i];
      }
      for (int id : need.step_order) {
        int out;
        if (const LookupTable* lut = sys.map_lut(id)) {
          std::size_t idx = 0;
          for (const auto& [src, lag] : sys.lut_inputs(id))
            idx = idx * static_cast<std::size_t>(decl.signals[src].alphabet.size) +
                  static_cast<std::size_t>(scratch[src][lag]);
          out = lut->outputs[idx];
        } else {
          out = reduce_symbol(eval_expr(*sys.map_expr(id, step_now), step_now, env),
                              decl.signals[id].alphabet.size);
        }
        scratch[id][0] = out;
      }
      int obs = 0;
      for (std::size_t c = 0; c < components.size(); ++c)
        obs = obs * model.obs_sizes[c] + scratch[components[c].signal][components[c].lag];
      std::vector<int> next;
      next.reserve(model.state_layout.size());
      for (const auto& [id, lag] : model.state_layout) next.push_back(scratch[id][lag - 1]);
      int n_idx = intern_state(next);
      rows[s_idx][{obs, n_idx}] += w;

      more = false;
      for (int c = static_cast<int>(draw_cells.size()) - 1; c >= 0; --c) {
        if (++digits[c] < static_cast<int>(draw_cells[c].support.size())) {
          more = true;
          break;
        }
        digits[c] = 0;
      }
      if (draw_cells.empty()) break;
    }
  }

  model.num_states = static_cast<int>(state_index.size());
  if (static_cast<double>(model.num_states) * model.obs_card * model.num_states > (1 << 24))
    throw BudgetExceeded("fsm kernel size",
                         static_cast<double>(model.num_states) * model.obs_card *
                             model.num_states,
                         static_cast<double>(1 << 24));
  model.kernel.assign(static_cast<std::size_t>(model.num_states) * model.obs_card *
                          model.num_states,
                      0.0);
  rows.resize(model.num_states);
  for (int s = 0; s < model.num_states; ++s) {
    double row_sum = 0.0;
    for (const auto& [key, p] : rows[s]) {
      model.kernel[(static_cast<std::size_t>(s) * model.obs_card + key.first) *
                       model.num_states +
                   key.second] = p;
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-12)
      throw Error("compile_fsm: kernel row mass " + std::to_string(row_sum));
  }

  model.initial.assign(static_cast<std::size_t>(model.warm_card) * model.num_states, 0.0);
  for (const WarmAtom& atom : warm_atoms) {
    int s_idx = state_index.at(atom.state);
    model.initial[static_cast<std::size_t>(atom.warm_idx) * model.num_states + s_idx] +=
        atom.mass;
  }
  return model;
}

}  // namespace loopflow
