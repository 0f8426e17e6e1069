#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "loopflow/model.hpp"
#include "loopflow/table.hpp"

namespace loopflow {

struct EngineConfig {
  std::uint64_t budget_atoms = 1ull << 28;
  std::uint64_t budget_leaves = 1ull << 26;
  int threads = 1;
};

// One joint realization of every signal over the horizon, prologue included.
struct Trajectory {
  std::vector<std::vector<int>> values;  // [signal][t - floor]
  std::vector<int> floors;

  int value(int signal, int t) const { return values[signal][t - floors[signal]]; }
};

// Deterministic forward pass: evaluates every internal and derived sample
// from the given exogenous realization, following the dependency DAG.
Trajectory simulate(const LoopSystem& sys,
                    const std::function<int(int signal, int t)>& exogenous);

// Exact pushforward of the exogenous model onto the given variables.
// Iterates the support of every exogenous (group, step) cell, simulates,
// and accumulates product weights with per-atom compensation. The result
// is independent of chunking to well below 1e-12.
JointTable enumerate_joint(const LoopSystem& sys, const std::vector<VarId>& vars,
                           const EngineConfig& config = {});

// Number of exogenous atoms enumerate_joint would visit.
double count_exo_atoms(const LoopSystem& sys);

// Monte Carlo fallback: i.i.d. trajectories from a seeded generator,
// empirical frequencies. Same seed, same table, bit for bit.
JointTable sample_joint(const LoopSystem& sys, const std::vector<VarId>& vars,
                        std::uint64_t count, std::uint64_t seed);

// Helper for naming table variables: "<signal>@<t>".
std::vector<VarId> signal_range(const LoopSystem& sys, const std::string& name,
                                int from, int to);
std::string var_name(const LoopSystem& sys, const VarId& v);

// Factorized-weight enumeration for parameter sweeps: trajectories are
// simulated once, bucketed by (projected atom, per-symbol counts of one
// designated i.i.d. group), and each sweep point only re-weights buckets.
class SweptEnumeration {
 public:
  SweptEnumeration(const LoopSystem& sys, std::vector<VarId> vars, int group_index,
                   const EngineConfig& config = {});

  // pmf over the swept group's per-step tuple alphabet.
  JointTable reweight(const std::vector<double>& pmf) const;

  int steps() const { return steps_; }
  int arity() const { return arity_; }

 private:
  struct BucketKey {
    AtomKey proj;
    std::uint64_t counts;
    friend bool operator==(const BucketKey&, const BucketKey&) = default;
  };
  struct BucketHash {
    std::size_t operator()(const BucketKey& k) const {
      return AtomKeyHash{}(k.proj ^ (static_cast<AtomKey>(k.counts) << 64));
    }
  };

  std::vector<VarId> vars_;
  std::vector<int> sizes_;
  std::vector<std::string> names_;
  int arity_ = 0;
  int steps_ = 0;
  std::unordered_map<BucketKey, double, BucketHash> buckets_;
};

}  // namespace loopflow
