#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "loopflow/itl.hpp"

namespace loopflow {

enum class Verdict : std::uint8_t { Holds, Equality, Violated, HypothesesUnmet };

const char* verdict_name(Verdict v);

struct HypothesisFlag {
  std::string pattern;
  bool satisfied;
};

// Result of one mechanical theorem check. `gap` is oriented so the claim
// reads lhs >= rhs (identities expect |gap| within tolerance). Verdict
// Violated is only issued when the hypotheses are satisfied, or when an
// unconditional part of the statement fails.
struct CheckReport {
  std::string id;
  std::vector<HypothesisFlag> hypotheses;
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  std::map<std::string, double> terms;
  Verdict verdict = Verdict::Holds;
  double tolerance = 1e-9;
  std::string note;

  bool hypotheses_ok() const;
};

std::string report_json(const CheckReport& r);
std::string report_table(const std::vector<CheckReport>& reports);

// Deterministic generator of small four-block systems with lookup-table
// maps, exercising all independence patterns the theorems need.
struct RandomSystemParams {
  std::uint64_t seed = 1;
  int horizon = 3;     // 2..5
  int alphabet = 2;    // 2..3 (3 only up to horizon 3)
  std::array<int, 4> delays{0, 0, 1, 0};
  std::string pattern = "all_indep";
  bool self_memory = false;
};

const std::vector<std::string>& known_patterns();

LoopSystem generate_four_block(const RandomSystemParams& params);

// Two interconnected blocks u(i) = T2[q(i), y(i-1)], y(i) = T1[r(i), u(i)]
// with deterministic y(0); the structure of the fundamental lemma.
LoopSystem generate_two_block(std::uint64_t seed, int horizon, int alphabet = 2,
                              int y0 = 0);

// ids: thm1..thm6, lemma2, eq11, eq13, eq17, conservation, chain22.
CheckReport check(const std::string& id, const LoopSystem& sys,
                  const EngineConfig& config = {});

// Theorem 7 terms and identities for an ITL scenario (the error indicator
// must be attached for the Fano part).
CheckReport check_thm7(const ItlScenario& scn, const EngineConfig& config = {});
// Instance chain for Theorem 8: n*R = H(w|y,p) + I(w->y||p) and
// I(w->y||p) <= I(x->y||p), with x the channel input.
CheckReport check_thm8(const ItlScenario& scn, const std::string& channel_input,
                       const EngineConfig& config = {});

// Max total-variation distance between P(A,B | C=c) and
// P(A|C=c) x P(B|C=c) over all positive-mass conditioning atoms c.
double max_conditional_tv(const LoopSystem& sys, const JointTable& table,
                          const std::vector<VarId>& a, const std::vector<VarId>& b,
                          const std::vector<VarId>& c);

struct SweepEntry {
  RandomSystemParams params;
  CheckReport report;
};

struct SweepSummary {
  int checks = 0;
  int violations = 0;
  int hypotheses_unmet = 0;
  std::map<std::string, double> min_gap;           // over hypothesis-met inequality runs
  std::map<std::string, double> max_equality_gap;  // |gap| where equality is forced
  std::map<std::string, int> strict_instances;     // hypothesis-met gap > 1e-6
  std::vector<SweepEntry> failures;
};

SweepSummary sweep(const std::vector<std::string>& ids,
                   const std::vector<RandomSystemParams>& corpus,
                   const EngineConfig& config = {});

std::string summary_table(const SweepSummary& s);

// A deterministic corpus covering all patterns, delays and horizons.
std::vector<RandomSystemParams> make_sweep_corpus(int count, std::uint64_t base_seed,
                                                  int max_horizon = 4, int alphabet = 2);

}  // namespace loopflow
