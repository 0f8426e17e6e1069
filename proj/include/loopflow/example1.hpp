#pragma once

#include <string>
#include <vector>

#include "loopflow/fsm.hpp"
#include "loopflow/itl.hpp"

namespace loopflow {

// The worked feedback-communication scenario: a transparent (optionally
// bit-flipping) forward channel with quaternary output, a binary message
// stream produced by the feedback channel
//   w(k) = q(k)            if q(k-1) = y(k-1) mod 2
//        = y(k-1) mod 2    otherwise,
// q(0) = 1 deterministically, Pr{q(k)=1} = alpha, and two encoder/decoder
// pairs: E1 (side stream r, Pr{r(k)=1} = beta) aiming at a large message
// entropy rate, and E2 (y(k) = w(k)) attaining the best in-the-loop rate.
struct Example1Config {
  enum class Encoder { E1, E2 };

  Encoder encoder = Encoder::E1;
  double alpha = 0.9;
  double beta = 0.5;       // E1 only
  int n = 6;               // horizon
  double flip_prob = 0.0;  // >0 flips the channel output bit i.i.d. (E2 variant)
};

ItlScenario build_example1(const Example1Config& cfg);

double binary_entropy(double p);

struct ClosedForms {
  double pr_w1;        // alpha * beta
  double pr_wk;        // (alpha^2 + (1-alpha)^2) beta + alpha (1-alpha), k >= 2
  double r_itl_paper;  // H_b(alpha) * (alpha(1-beta) + (1-alpha)beta)
  double r_itl_alt;    // H_b(alpha) * (alpha beta + (1-alpha)(1-beta))
};

ClosedForms closed_forms(double alpha, double beta);

// H(w_1^n)/n through the belief-tree engine.
double tree_h_w_rate(const Example1Config& cfg, const EngineConfig& config = {});

// Per-step increments of the message-revelation identity, computed both
// with causal conditioning (H(q(k)|q^{k-1}) - H(q(k)|q^{k-1}, y_0^k), the
// reading under which the local argument is exact) and literally against
// the whole output record y_0^n. The engine arbitrates between the two
// closed-form candidates.
struct Eq62Increments {
  std::vector<int> steps;
  std::vector<double> causal;
  std::vector<double> literal;
  double candidate_paper;
  double candidate_alt;
};

Eq62Increments eq62_increments(const Example1Config& cfg, const EngineConfig& config = {});

enum class SweepEngine { Enumerate, Tree };

struct BetaSweepRow {
  double beta;
  double h_w_rate;
  double r_itl;        // nan when beyond the exact budget
  double di_forward;   // nan when beyond the exact budget
  double di_backward;  // nan when beyond the exact budget
};

struct BetaSweepResult {
  std::vector<BetaSweepRow> rows;
  double max_h_rate = 0.0;
  double argmax_beta = 0.0;
};

BetaSweepResult beta_sweep(const Example1Config& base, double beta_from, double beta_to,
                           double beta_step, SweepEngine engine,
                           const EngineConfig& config = {});

// CSV contract: "beta,H_w_rate,R_ITL,DI_forward,DI_backward", 12
// significant digits, "nan" for columns beyond the exact budget.
std::string sweep_csv(const BetaSweepResult& result);

}  // namespace loopflow
