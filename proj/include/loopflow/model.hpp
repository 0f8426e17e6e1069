#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loopflow/expr.hpp"

namespace loopflow {

// Symbols are indices 0..size-1. Sizes above 16 are rejected: the exact
// engines enumerate symbol products and need a hard guardrail.
struct Alphabet {
  int size = 2;
};

constexpr int kMaxAlphabet = 16;

enum class Role : std::uint8_t { Exogenous, Internal };

struct SignalDecl {
  std::string name;
  Alphabet alphabet;
  Role role = Role::Internal;
  int start_index = 1;  // first time index carrying a random/computed sample
  // Deterministic values for pre-start samples referenced through lags,
  // keyed by time index (all keys < start_index).
  std::map<int, int> prologue;
};

// One mutually-independent group of exogenous signals. Within a group the
// per-step tuple is drawn jointly; across steps draws are independent
// (i.i.d. with the group pmf unless a per-step override applies). Across
// groups independence is exact by construction.
struct ExogenousGroup {
  std::vector<std::string> signals;  // tuple component order
  // Joint pmf over the per-step tuple, row-major with the first signal as
  // the most significant digit.
  std::vector<double> iid_pmf;
  // Per-step pmf overrides (a deterministic value is a point mass).
  std::map<int, std::vector<double>> step_pmfs;
};

struct ExogenousSpec {
  std::vector<ExogenousGroup> groups;
};

// Lookup-table map over a declared finite window of input samples.
struct LookupTable {
  std::vector<std::pair<std::string, int>> inputs;  // (signal, lag)
  std::vector<int> outputs;  // row-major over input tuples, first input most significant
};

// A causal block of the loop. The map references its loop input only at
// lags >= delay, its exogenous input at lags >= 0 and its own output at
// lags >= 1. Early steps may carry expression overrides (time-varying maps
// are constant-delay in this implementation).
struct Block {
  std::string name;
  std::string output;
  std::string loop_input;
  std::optional<std::string> exog_input;
  int delay = 0;
  ExprPtr expr;                      // generic map, or null when lut is set
  std::optional<LookupTable> lut;
  std::map<int, ExprPtr> step_exprs; // overrides for specific early steps
};

// A signal computed from the trajectory but never fed back into the loop.
// May reference any declared signal at causal lags.
struct DerivedDef {
  std::string name;
  Alphabet alphabet;
  int start_index = 1;
  std::map<int, int> prologue;
  ExprPtr expr;
  std::map<int, ExprPtr> step_exprs;
};

struct SystemDecl {
  std::vector<SignalDecl> signals;
  ExogenousSpec exogenous;
  std::vector<Block> blocks;  // the loop cycle, in wiring order
  std::vector<DerivedDef> derived;
  int horizon = 1;  // last time index
};

struct SampleRef {
  int signal;
  int t;
};

// A validated system: name resolution done, expressions bound, pmfs
// checked, and the sample-level dependency DAG toposorted. Immutable after
// construction; safe to share across threads.
class LoopSystem {
 public:
  static LoopSystem build(SystemDecl decl);

  LoopSystem with_derived(DerivedDef def) const;

  const SystemDecl& decl() const { return decl_; }
  int horizon() const { return decl_.horizon; }
  int num_signals() const { return static_cast<int>(decl_.signals.size()); }
  const SignalDecl& signal(int id) const { return decl_.signals[id]; }
  int signal_id(const std::string& name) const;  // -1 if unknown
  int require_signal(const std::string& name) const;

  // Earliest time index with a defined value (start_index minus prologue).
  int sample_floor(int id) const { return sample_floor_[id]; }
  int prologue_value(int id, int t) const;

  // Global evaluation order over computed samples (blocks and derived).
  const std::vector<SampleRef>& eval_order() const { return eval_order_; }

  // Who computes a signal: block index, ~derived index encoded as
  // -(index+1), or 0 sentinel via kind.
  enum class Producer : std::uint8_t { ExogenousInput, BlockOutput, Derived };
  Producer producer_kind(int id) const { return producer_kind_[id]; }
  int producer_index(int id) const { return producer_index_[id]; }

  // Bound map for computing signal `id` at step t (override-aware).
  // Null when the producer is a lookup table.
  const Expr* map_expr(int id, int t) const;
  const LookupTable* map_lut(int id) const;
  // Lookup table inputs with signal ids resolved.
  const std::vector<std::pair<int, int>>& lut_inputs(int id) const;

  int group_of(int exo_id) const { return exo_group_of_[exo_id]; }
  int group_slot(int exo_id) const { return exo_group_slot_[exo_id]; }

  // Smallest start index over all signals (first step of the horizon).
  int t_min() const { return t_min_; }

  // Largest lag at which `id` is referenced by any steady-state map
  // (block/derived generic expressions and lookup windows).
  int steady_max_lag(int id) const { return steady_max_lag_[id]; }

  // Last time step at which any per-step override (block expression or
  // exogenous pmf) applies; t_min()-1 when there are none.
  int last_override_step() const { return last_override_step_; }

 private:
  friend LoopSystem make_validated(SystemDecl);
  LoopSystem() = default;
  void finalize();  // validation + binding + toposort

  SystemDecl decl_;
  std::map<std::string, int> ids_;
  std::vector<int> sample_floor_;
  std::vector<Producer> producer_kind_;
  std::vector<int> producer_index_;
  std::vector<int> exo_group_of_;
  std::vector<int> exo_group_slot_;
  std::vector<SampleRef> eval_order_;
  std::vector<ExprPtr> bound_generic_;                 // per signal
  std::vector<std::map<int, ExprPtr>> bound_steps_;    // per signal
  std::vector<std::vector<std::pair<int, int>>> lut_inputs_;
  std::vector<int> steady_max_lag_;
  int t_min_ = 1;
  int last_override_step_ = 0;
};

inline LoopSystem build_system(SystemDecl decl) { return LoopSystem::build(std::move(decl)); }

LoopSystem attach_derived(const LoopSystem& sys, DerivedDef def);

// --- Independence patterns -------------------------------------------------
//
// Structural requirements on the exogenous coupling groups, e.g.
//   "(q,s) _|_ (r,p) and q _|_ s"
//   "markov(q,s)"        for the chain q_{i+1}^k <-> q^i <-> s^i
// Statements are separated by "and", ";" or top-level ",". The UTF-8
// symbol for independence is accepted in place of "_|_".

struct IndependenceStatement {
  std::vector<std::string> left, right;
};

struct MarkovStatement {
  std::string chain;  // the signal whose future is conditionally independent
  std::string other;
};

struct IndependencePattern {
  std::vector<IndependenceStatement> independent;
  std::vector<MarkovStatement> markov;
};

IndependencePattern parse_pattern(const std::string& text);

struct PatternResult {
  bool satisfied;
  std::string explanation;
};

PatternResult check_independence_pattern(const LoopSystem& sys,
                                         const IndependencePattern& pattern);
PatternResult check_independence_pattern(const LoopSystem& sys,
                                         const std::string& pattern);

}  // namespace loopflow
