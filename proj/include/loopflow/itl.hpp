#pragma once

#include <optional>
#include <string>

#include "loopflow/measures.hpp"

namespace loopflow {

// A channel-coding scenario whose messages live inside the loop: the
// message signal w, the channel output y, optional decoder side
// information p, the decoded signal v, and the running error indicator
// err with err(n) = 1 iff v and w ever disagreed on 1..n.
struct ItlScenario {
  LoopSystem sys;
  int w = -1;
  int y = -1;
  int p = -1;    // -1 when absent
  int v = -1;
  int err = -1;

  int horizon() const { return sys.horizon(); }
};

ItlScenario make_itl_scenario(LoopSystem sys, const std::string& w, const std::string& y,
                              const std::string& p = "", const std::string& v = "",
                              const std::string& err = "");

// Variables every ITL measure needs (w, y, p histories plus err@n).
std::vector<VarId> itl_vars(const ItlScenario& scn);
JointTable itl_table(const ItlScenario& scn, const EngineConfig& config = {});

// (1/n) sum_k H(w(k) | w^{k-1}, y^{<k}, p^k), the per-sample information
// novel to both ends of the link.
MeasureResult itl_rate(const ItlScenario& scn, const JointTable& table);
MeasureResult itl_rate(const ItlScenario& scn, const EngineConfig& config = {});

// Causally conditioned directed information from w into y over 1..n with
// conditioning stream p (lag 0).
MeasureResult itl_forward_di(const ItlScenario& scn, const JointTable& table,
                             EntropyCache* cache = nullptr);

struct FanoReport {
  int n = 0;
  double r_itl = 0.0;          // bits/sample
  double di_forward = 0.0;     // total bits
  double h_w_given_yp = 0.0;
  double h_e_given_yp = 0.0;
  double pr_error = 0.0;
  double h_w_given_yp_err1 = 0.0;  // 0 by convention when pr_error == 0
  bool zero_error_convention = false;
  double identity46_gap = 0.0;  // n*R - (H(w|y,p) + DI)
  double identity50_gap = 0.0;  // n*R - (H(e|y,p) + H(w|y,p,e=1)*Pr + DI)
  double eq40_gap = 0.0;        // n*R - DI, >= 0 with equality iff H(w|y,p)=0
  double bound42_rhs = 0.0;     // (R - DI/n - 1/n) / log2|W|
  bool bound42_holds = false;
};

// The Theorem 7 decomposition: identities (46) and (50), the bound (42),
// and every named term. Requires the error indicator.
FanoReport fano_decomposition(const ItlScenario& scn, const EngineConfig& config = {});

struct ExtendedConservationReport {
  int n = 0;
  double h_w = 0.0;           // H(w_1^n)
  double di_backward = 0.0;   // I(y^{n-1} -> w^n || p)
  double di_forward = 0.0;    // I(w^n -> y^n || p)
  double h_w_given_yp = 0.0;
  double n_r_itl = 0.0;
  double gap_left = 0.0;   // (H(w) - bwd) - (fwd + H(w|y,p))
  double gap_right = 0.0;  // (fwd + H(w|y,p)) - n*R
};

// The conservation extension: H(w) - backward flow = forward flow +
// residual entropy = n * R_ITL.
ExtendedConservationReport conservation_extended(const ItlScenario& scn,
                                                 const EngineConfig& config = {});

}  // namespace loopflow
