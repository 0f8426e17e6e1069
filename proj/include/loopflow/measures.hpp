#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loopflow/engine.hpp"
#include "loopflow/table.hpp"

namespace loopflow {

// All values are in bits (log base 2).

double entropy_bits(const JointTable& table, const std::vector<VarId>& vars);
double cond_entropy_bits(const JointTable& table, const std::vector<VarId>& a,
                         const std::vector<VarId>& b);
// I(A;B|C) with C optional.
double mutual_information_bits(const JointTable& table, const std::vector<VarId>& a,
                               const std::vector<VarId>& b,
                               const std::vector<VarId>& c = {});

// Marginal-entropy cache over one table. Atoms are decoded to digit rows
// once, so each marginal is a single cheap pass; directed-information sums
// reuse many overlapping marginals through the cache.
class EntropyCache {
 public:
  explicit EntropyCache(const JointTable& table);

  double entropy(std::vector<VarId> vars);
  double cond_entropy(const std::vector<VarId>& a, const std::vector<VarId>& b);
  double cond_mi(const std::vector<VarId>& a, const std::vector<VarId>& b,
                 const std::vector<VarId>& c);

 private:
  const JointTable* table_;
  std::size_t atom_count_;
  std::vector<std::uint8_t> digits_;  // atom-major, one row per atom
  std::vector<double> mass_;
  std::map<std::vector<VarId>, double> cache_;
};

struct MeasureResult {
  double bits = 0.0;
  std::vector<double> per_step;
  std::vector<int> steps;
};

// A conditioning stream for causally conditioned directed information;
// step i conditions on the stream's samples up to i - lag.
struct CondStream {
  int signal;
  int lag = 0;
};

struct StepRange {
  int first;
  int last;
};

// Directed information with forward delay d:
//   sum over i in range of I(y(i); x^{i-d} | y^{<i}, c^{<=i-lag_c} ...)
// Histories run from each signal's first index; a term whose source
// history is empty contributes 0. With d=0 and no conditions this is
// Massey's directed information. `extra_sources` join the source side with
// their own delays (e.g. the exogenous triad of a conservation-of-flow
// check); `full_conditions` condition every term on a stream's whole
// history up to the range end.
struct DirectedInfoSpec {
  int source;
  int target;
  int delay = 0;
  std::vector<CondStream> extra_sources;
  std::vector<CondStream> conditions;
  std::vector<int> full_conditions;
  std::optional<StepRange> range;  // defaults to max(1, target start)..horizon
};

MeasureResult directed_information(const LoopSystem& sys, const JointTable& table,
                                   const DirectedInfoSpec& spec,
                                   EntropyCache* cache = nullptr);
// Enumerates the needed variables first.
MeasureResult directed_information(const LoopSystem& sys, const DirectedInfoSpec& spec,
                                   const EngineConfig& config = {});

// The lagged backward flow of the conservation law,
//   I(0*y^{k-1} -> x^k) = sum_i I(x(i); y^{i-1} | x^{i-1}),
// which equals directed information from y to x with delay 1.
MeasureResult reverse_directed_information(const LoopSystem& sys, const JointTable& table,
                                           int y, int x,
                                           std::optional<StepRange> range = {},
                                           EntropyCache* cache = nullptr);

// Variables a directed-information computation needs from a table.
std::vector<VarId> directed_information_vars(const LoopSystem& sys,
                                             const DirectedInfoSpec& spec);

struct ConservationReport {
  double mutual_information;
  double forward;   // I(x^k -> y^k), zero delay
  double backward;  // I(0*y^{k-1} -> x^k)
  double gap;       // mi - forward - backward
};

// Massey-Massey conservation over steps 1..k (an identity on any joint).
ConservationReport conservation_check(const LoopSystem& sys, const JointTable& table,
                                      int x, int y, int k);

}  // namespace loopflow
