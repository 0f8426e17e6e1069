#include "loopflow/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace loopflow {

namespace {

// One exogenous draw site: a (group, step) pair with its resolved pmf.
struct ExoCell {
  int group;
  int t;
  const std::vector<double>* pmf;
  std::vector<int> support;  // tuple indices with positive mass
};

struct ExoSpace {
  std::vector<ExoCell> cells;
  // Per signal: cell index by time offset, plus the divisor/size used to
  // extract this signal's symbol from the group tuple index.
  std::vector<std::vector<int>> cell_of;  // [signal][t - start]
  std::vector<int> slot_div;
  std::vector<int> slot_size;
  double atom_count = 1.0;
};

// full_group >= 0 forces that group's cells to enumerate the full tuple
// alphabet regardless of the current pmf (used by swept enumeration).
ExoSpace build_exo_space(const LoopSystem& sys, int full_group = -1) {
  const SystemDecl& decl = sys.decl();
  ExoSpace space;
  space.cell_of.assign(decl.signals.size(), {});
  space.slot_div.assign(decl.signals.size(), 1);
  space.slot_size.assign(decl.signals.size(), 1);

  for (std::size_t g = 0; g < decl.exogenous.groups.size(); ++g) {
    const ExogenousGroup& grp = decl.exogenous.groups[g];
    int start = decl.signals[sys.signal_id(grp.signals[0])].start_index;
    int div = 1;
    for (int slot = static_cast<int>(grp.signals.size()) - 1; slot >= 0; --slot) {
      int id = sys.signal_id(grp.signals[slot]);
      if (decl.signals[id].start_index != start)
        throw Error("signals of one coupling group must share a start index");
      space.slot_div[id] = div;
      space.slot_size[id] = decl.signals[id].alphabet.size;
      div *= decl.signals[id].alphabet.size;
    }
    for (int t = start; t <= decl.horizon; ++t) {
      ExoCell cell;
      cell.group = static_cast<int>(g);
      cell.t = t;
      auto it = grp.step_pmfs.find(t);
      cell.pmf = it != grp.step_pmfs.end() ? &it->second : &grp.iid_pmf;
      bool full = (full_group == static_cast<int>(g));
      for (int v = 0; v < static_cast<int>(cell.pmf->size()); ++v)
        if (full || (*cell.pmf)[v] > 0.0) cell.support.push_back(v);
      space.atom_count *= static_cast<double>(cell.support.size());
      space.cells.push_back(std::move(cell));
    }
    for (const auto& name : grp.signals) {
      int id = sys.signal_id(name);
      space.cell_of[id].assign(decl.horizon - start + 1, -1);
    }
  }
  for (std::size_t c = 0; c < space.cells.size(); ++c) {
    const ExoCell& cell = space.cells[c];
    const ExogenousGroup& grp = decl.exogenous.groups[cell.group];
    for (const auto& name : grp.signals) {
      int id = sys.signal_id(name);
      int start = decl.signals[id].start_index;
      space.cell_of[id][cell.t - start] = static_cast<int>(c);
    }
  }
  return space;
}

Trajectory make_buffer(const LoopSystem& sys) {
  Trajectory tr;
  const SystemDecl& decl = sys.decl();
  tr.values.resize(decl.signals.size());
  tr.floors.resize(decl.signals.size());
  for (std::size_t i = 0; i < decl.signals.size(); ++i) {
    tr.floors[i] = sys.sample_floor(static_cast<int>(i));
    tr.values[i].assign(static_cast<std::size_t>(decl.horizon - tr.floors[i] + 1), 0);
    for (const auto& [t, v] : decl.signals[i].prologue)
      tr.values[i][t - tr.floors[i]] = v;
  }
  return tr;
}

// Writes the exogenous symbols of one atom (digit vector over cells) into
// the trajectory buffer.
void fill_exogenous(const LoopSystem& sys, const ExoSpace& space,
                    const std::vector<int>& digits, Trajectory& tr) {
  const SystemDecl& decl = sys.decl();
  for (std::size_t c = 0; c < space.cells.size(); ++c) {
    const ExoCell& cell = space.cells[c];
    int tuple = cell.support[digits[c]];
    const ExogenousGroup& grp = decl.exogenous.groups[cell.group];
    for (const auto& name : grp.signals) {
      int id = sys.signal_id(name);
      int sym = (tuple / space.slot_div[id]) % space.slot_size[id];
      tr.values[id][cell.t - tr.floors[id]] = sym;
    }
  }
}

void run_internal(const LoopSystem& sys, Trajectory& tr) {
  const SystemDecl& decl = sys.decl();
  SampleFn env = [&tr](int sig, int t) -> long long {
    return tr.values[sig][t - tr.floors[sig]];
  };
  for (const SampleRef& s : sys.eval_order()) {
    int out;
    if (const LookupTable* lut = sys.map_lut(s.signal)) {
      const auto& inputs = sys.lut_inputs(s.signal);
      std::size_t idx = 0;
      for (const auto& [id, lag] : inputs) {
        idx = idx * static_cast<std::size_t>(decl.signals[id].alphabet.size) +
              static_cast<std::size_t>(tr.value(id, s.t - lag));
      }
      out = lut->outputs[idx];
    } else {
      long long v = eval_expr(*sys.map_expr(s.signal, s.t), s.t, env);
      out = reduce_symbol(v, decl.signals[s.signal].alphabet.size);
    }
    tr.values[s.signal][s.t - tr.floors[s.signal]] = out;
  }
}

double cell_weight(const ExoSpace& space, const std::vector<int>& digits) {
  double w = 1.0;
  for (std::size_t c = 0; c < space.cells.size(); ++c)
    w *= (*space.cells[c].pmf)[space.cells[c].support[digits[c]]];
  return w;
}

void digits_from_linear(const ExoSpace& space, std::uint64_t idx, std::vector<int>& digits) {
  // Mixed-radix decode, last cell least significant.
  for (int c = static_cast<int>(space.cells.size()) - 1; c >= 0; --c) {
    std::uint64_t size = space.cells[c].support.size();
    digits[c] = static_cast<int>(idx % size);
    idx /= size;
  }
}

bool advance_digits(const ExoSpace& space, std::vector<int>& digits) {
  for (int c = static_cast<int>(space.cells.size()) - 1; c >= 0; --c) {
    if (++digits[c] < static_cast<int>(space.cells[c].support.size())) return true;
    digits[c] = 0;
  }
  return false;
}

std::vector<int> table_var_indices(const LoopSystem& sys, const JointTable& table) {
  std::vector<int> check;
  for (const VarId& v : table.vars()) {
    if (v.signal < 0 || v.signal >= sys.num_signals())
      throw VariableMissing("variable references unknown signal");
    if (v.t < sys.sample_floor(v.signal) || v.t > sys.horizon())
      throw VariableMissing("variable " + var_name(sys, v) + " outside horizon");
    check.push_back(v.signal);
  }
  return check;
}

}  // namespace

std::string var_name(const LoopSystem& sys, const VarId& v) {
  return sys.signal(v.signal).name + "@" + std::to_string(v.t);
}

std::vector<VarId> signal_range(const LoopSystem& sys, const std::string& name,
                                int from, int to) {
  int id = sys.require_signal(name);
  std::vector<VarId> out;
  for (int t = from; t <= to; ++t) out.push_back({id, t});
  return out;
}

Trajectory simulate(const LoopSystem& sys,
                    const std::function<int(int, int)>& exogenous) {
  Trajectory tr = make_buffer(sys);
  const SystemDecl& decl = sys.decl();
  for (int id = 0; id < sys.num_signals(); ++id) {
    if (decl.signals[id].role != Role::Exogenous) continue;
    for (int t = decl.signals[id].start_index; t <= decl.horizon; ++t) {
      int sym = exogenous(id, t);
      if (sym < 0 || sym >= decl.signals[id].alphabet.size)
        throw MissingSample("exogenous symbol for " + decl.signals[id].name +
                            " at t=" + std::to_string(t) + " outside alphabet");
      tr.values[id][t - tr.floors[id]] = sym;
    }
  }
  run_internal(sys, tr);
  return tr;
}

double count_exo_atoms(const LoopSystem& sys) {
  return build_exo_space(sys).atom_count;
}

namespace {

JointTable make_table(const LoopSystem& sys, const std::vector<VarId>& vars) {
  std::vector<int> sizes;
  std::vector<std::string> names;
  for (const VarId& v : vars) {
    sizes.push_back(sys.signal(v.signal).alphabet.size);
    names.push_back(var_name(sys, v));
  }
  return JointTable(vars, std::move(sizes), std::move(names));
}

}  // namespace

JointTable enumerate_joint(const LoopSystem& sys, const std::vector<VarId>& vars,
                           const EngineConfig& config) {
  ExoSpace space = build_exo_space(sys);
  if (space.atom_count > static_cast<double>(config.budget_atoms))
    throw BudgetExceeded("exact enumeration", space.atom_count,
                         static_cast<double>(config.budget_atoms));

  JointTable result = make_table(sys, vars);
  table_var_indices(sys, result);

  const std::uint64_t total = static_cast<std::uint64_t>(space.atom_count);
  int workers = std::max(1, config.threads);
  if (total < 4096) workers = 1;

  using Local = std::unordered_map<AtomKey, Kahan, AtomKeyHash>;
  std::vector<Local> locals(static_cast<std::size_t>(workers));

  auto run_chunk = [&](int w) {
    std::uint64_t begin = total * static_cast<std::uint64_t>(w) / workers;
    std::uint64_t end = total * static_cast<std::uint64_t>(w + 1) / workers;
    if (begin >= end) return;
    Trajectory tr = make_buffer(sys);
    std::vector<int> digits(space.cells.size(), 0);
    digits_from_linear(space, begin, digits);
    Local& local = locals[static_cast<std::size_t>(w)];
    for (std::uint64_t i = begin; i < end; ++i) {
      double weight = cell_weight(space, digits);
      fill_exogenous(sys, space, digits, tr);
      run_internal(sys, tr);
      AtomKey key = 0;
      const auto& tvars = result.vars();
      std::vector<int> symbols(tvars.size());
      for (std::size_t v = 0; v < tvars.size(); ++v)
        symbols[v] = tr.value(tvars[v].signal, tvars[v].t);
      key = result.encode(symbols);
      local[key].add(weight);
      if (i + 1 < end) advance_digits(space, digits);
    }
  };

  if (workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_chunk, w);
    for (auto& th : pool) th.join();
  }

  // Merge in chunk order so the reduction is schedule independent.
  std::unordered_map<AtomKey, Kahan, AtomKeyHash> merged;
  for (const Local& local : locals)
    for (const auto& [key, acc] : local) merged[key].add(acc.value());
  for (const auto& [key, acc] : merged) result.add_mass(key, acc.value());
  return result;
}

JointTable sample_joint(const LoopSystem& sys, const std::vector<VarId>& vars,
                        std::uint64_t count, std::uint64_t seed) {
  if (count < 1) throw Error("sample_joint: count must be >= 1");
  ExoSpace space = build_exo_space(sys);
  JointTable result = make_table(sys, vars);
  table_var_indices(sys, result);

  // Per-cell cumulative masses for inverse-CDF draws.
  std::vector<std::vector<double>> cdf(space.cells.size());
  for (std::size_t c = 0; c < space.cells.size(); ++c) {
    double acc = 0.0;
    for (int v : space.cells[c].support) {
      acc += (*space.cells[c].pmf)[v];
      cdf[c].push_back(acc);
    }
  }

  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };

  std::unordered_map<AtomKey, std::uint64_t, AtomKeyHash> counts;
  Trajectory tr = make_buffer(sys);
  std::vector<int> digits(space.cells.size());
  std::vector<int> symbols(result.vars().size());
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < space.cells.size(); ++c) {
      double u = uniform() * cdf[c].back();
      std::size_t lo = 0;
      while (lo + 1 < cdf[c].size() && u >= cdf[c][lo]) ++lo;
      digits[c] = static_cast<int>(lo);
    }
    fill_exogenous(sys, space, digits, tr);
    run_internal(sys, tr);
    for (std::size_t v = 0; v < result.vars().size(); ++v)
      symbols[v] = tr.value(result.vars()[v].signal, result.vars()[v].t);
    ++counts[result.encode(symbols)];
  }
  for (const auto& [key, c] : counts)
    result.add_mass(key, static_cast<double>(c) / static_cast<double>(count));
  result.set_empirical({count, seed});
  return result;
}

SweptEnumeration::SweptEnumeration(const LoopSystem& sys, std::vector<VarId> vars,
                                   int group_index, const EngineConfig& config)
    : vars_(std::move(vars)) {
  const SystemDecl& decl = sys.decl();
  if (group_index < 0 || group_index >= static_cast<int>(decl.exogenous.groups.size()))
    throw Error("SweptEnumeration: bad group index");
  const ExogenousGroup& grp = decl.exogenous.groups[group_index];
  if (!grp.step_pmfs.empty())
    throw Error("SweptEnumeration: swept group must be i.i.d. (no per-step overrides)");
  arity_ = static_cast<int>(grp.iid_pmf.size());
  if (arity_ > 8)
    throw Error("SweptEnumeration: swept group tuple alphabet too large");

  ExoSpace space = build_exo_space(sys, group_index);
  if (space.atom_count > static_cast<double>(config.budget_atoms))
    throw BudgetExceeded("swept enumeration", space.atom_count,
                         static_cast<double>(config.budget_atoms));

  JointTable shape = make_table(sys, vars_);
  sizes_ = shape.sizes();
  names_ = shape.names();

  steps_ = 0;
  for (const ExoCell& cell : space.cells)
    if (cell.group == group_index) ++steps_;

  Trajectory tr = make_buffer(sys);
  std::vector<int> digits(space.cells.size(), 0);
  std::vector<int> symbols(vars_.size());
  const std::uint64_t total = static_cast<std::uint64_t>(space.atom_count);
  for (std::uint64_t i = 0; i < total; ++i) {
    double w = 1.0;
    std::uint64_t counts_key = 0;
    for (std::size_t c = 0; c < space.cells.size(); ++c) {
      const ExoCell& cell = space.cells[c];
      int tuple = cell.support[digits[c]];
      if (cell.group == group_index)
        counts_key += 1ull << (8 * tuple);
      else
        w *= (*cell.pmf)[tuple];
    }
    fill_exogenous(sys, space, digits, tr);
    run_internal(sys, tr);
    for (std::size_t v = 0; v < vars_.size(); ++v)
      symbols[v] = tr.value(vars_[v].signal, vars_[v].t);
    buckets_[{shape.encode(symbols), counts_key}] += w;
    if (i + 1 < total) advance_digits(space, digits);
  }
}

JointTable SweptEnumeration::reweight(const std::vector<double>& pmf) const {
  if (static_cast<int>(pmf.size()) != arity_)
    throw BadPmf("reweight: pmf arity mismatch");
  // pow table: powers[sym][c] = pmf[sym]^c
  std::vector<std::vector<double>> powers(static_cast<std::size_t>(arity_));
  for (int s = 0; s < arity_; ++s) {
    powers[s].assign(static_cast<std::size_t>(steps_ + 1), 1.0);
    for (int c = 1; c <= steps_; ++c) powers[s][c] = powers[s][c - 1] * pmf[s];
  }
  JointTable out(vars_, sizes_, names_);
  std::unordered_map<AtomKey, Kahan, AtomKeyHash> acc;
  for (const auto& [bk, w] : buckets_) {
    double sweep_w = 1.0;
    for (int s = 0; s < arity_; ++s)
      sweep_w *= powers[s][(bk.counts >> (8 * s)) & 0xff];
    acc[bk.proj].add(w * sweep_w);
  }
  for (const auto& [key, a] : acc) out.add_mass(key, a.value());
  return out;
}

}  // namespace loopflow
