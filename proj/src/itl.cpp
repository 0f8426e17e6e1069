#include "loopflow/itl.hpp"

#include <algorithm>
#include <cmath>

namespace loopflow {

namespace {

std::vector<VarId> history(const LoopSystem& sys, int signal, int upto) {
  std::vector<VarId> out;
  for (int t = sys.signal(signal).start_index; t <= upto; ++t) out.push_back({signal, t});
  return out;
}

}  // namespace

ItlScenario make_itl_scenario(LoopSystem sys, const std::string& w, const std::string& y,
                              const std::string& p, const std::string& v,
                              const std::string& err) {
  ItlScenario scn{std::move(sys)};
  scn.w = scn.sys.require_signal(w);
  scn.y = scn.sys.require_signal(y);
  scn.p = p.empty() ? -1 : scn.sys.require_signal(p);
  scn.v = v.empty() ? -1 : scn.sys.require_signal(v);
  scn.err = err.empty() ? -1 : scn.sys.require_signal(err);
  return scn;
}

std::vector<VarId> itl_vars(const ItlScenario& scn) {
  const int n = scn.horizon();
  std::vector<VarId> vars = history(scn.sys, scn.w, n);
  auto ys = history(scn.sys, scn.y, n);
  vars.insert(vars.end(), ys.begin(), ys.end());
  if (scn.p >= 0) {
    auto ps = history(scn.sys, scn.p, n);
    vars.insert(vars.end(), ps.begin(), ps.end());
  }
  if (scn.err >= 0) vars.push_back({scn.err, n});
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

JointTable itl_table(const ItlScenario& scn, const EngineConfig& config) {
  return enumerate_joint(scn.sys, itl_vars(scn), config);
}

MeasureResult itl_rate(const ItlScenario& scn, const JointTable& table) {
  const int n = scn.horizon();
  const int first = std::max(1, scn.sys.signal(scn.w).start_index);
  EntropyCache cache(table);
  MeasureResult result;
  Kahan total;
  for (int k = first; k <= n; ++k) {
    std::vector<VarId> cond = history(scn.sys, scn.w, k - 1);
    auto ys = history(scn.sys, scn.y, k - 1);
    cond.insert(cond.end(), ys.begin(), ys.end());
    if (scn.p >= 0) {
      auto ps = history(scn.sys, scn.p, k);
      cond.insert(cond.end(), ps.begin(), ps.end());
    }
    double term = cache.cond_entropy({{scn.w, k}}, cond);
    result.per_step.push_back(term);
    result.steps.push_back(k);
    total.add(term);
  }
  result.bits = total.value() / n;
  return result;
}

MeasureResult itl_rate(const ItlScenario& scn, const EngineConfig& config) {
  return itl_rate(scn, itl_table(scn, config));
}

MeasureResult itl_forward_di(const ItlScenario& scn, const JointTable& table,
                             EntropyCache* cache) {
  DirectedInfoSpec spec;
  spec.source = scn.w;
  spec.target = scn.y;
  spec.delay = 0;
  if (scn.p >= 0) spec.conditions.push_back({scn.p, 0});
  spec.range = StepRange{1, scn.horizon()};
  return directed_information(scn.sys, table, spec, cache);
}

FanoReport fano_decomposition(const ItlScenario& scn, const EngineConfig& config) {
  if (scn.err < 0)
    throw Error("fano_decomposition: scenario has no error indicator");
  const int n = scn.horizon();
  JointTable table = itl_table(scn, config);
  EntropyCache cache(table);

  FanoReport rep;
  rep.n = n;
  rep.r_itl = itl_rate(scn, table).bits;
  rep.di_forward = itl_forward_di(scn, table, &cache).bits;

  std::vector<VarId> yp = history(scn.sys, scn.y, n);
  if (scn.p >= 0) {
    auto ps = history(scn.sys, scn.p, n);
    yp.insert(yp.end(), ps.begin(), ps.end());
  }
  std::vector<VarId> ws = history(scn.sys, scn.w, n);
  rep.h_w_given_yp = cache.cond_entropy(ws, yp);
  rep.h_e_given_yp = cache.cond_entropy({{scn.err, n}}, yp);

  JointTable err_marginal = table.marginalize({{scn.err, n}});
  rep.pr_error = 0.0;
  for (const auto& [key, p] : err_marginal.atoms())
    if (err_marginal.digit(key, 0) == 1) rep.pr_error = p;

  if (rep.pr_error > 0.0) {
    JointTable conditioned = table.condition({{{scn.err, n}, 1}});
    rep.h_w_given_yp_err1 = cond_entropy_bits(conditioned, ws, yp);
  } else {
    rep.h_w_given_yp_err1 = 0.0;
    rep.zero_error_convention = true;
  }

  double n_r = rep.r_itl * n;
  rep.identity46_gap = n_r - (rep.h_w_given_yp + rep.di_forward);
  rep.identity50_gap =
      n_r - (rep.h_e_given_yp + rep.h_w_given_yp_err1 * rep.pr_error + rep.di_forward);
  rep.eq40_gap = n_r - rep.di_forward;

  double log_w = std::log2(static_cast<double>(scn.sys.signal(scn.w).alphabet.size));
  if (log_w > 0.0) {
    rep.bound42_rhs = (rep.r_itl - rep.di_forward / n - 1.0 / n) / log_w;
    rep.bound42_holds = rep.pr_error >= rep.bound42_rhs - 1e-9;
  } else {
    rep.bound42_rhs = 0.0;
    rep.bound42_holds = true;
  }
  return rep;
}

ExtendedConservationReport conservation_extended(const ItlScenario& scn,
                                                 const EngineConfig& config) {
  const int n = scn.horizon();
  JointTable table = itl_table(scn, config);
  EntropyCache cache(table);

  ExtendedConservationReport rep;
  rep.n = n;
  rep.h_w = cache.entropy(history(scn.sys, scn.w, n));
  rep.di_forward = itl_forward_di(scn, table, &cache).bits;

  // I(y^{n-1} -> w^n || p) = sum_k I(w(k); y^{<k} | w^{k-1}, p^k): forward
  // delay 1 from y into w, causally conditioned on p.
  DirectedInfoSpec bwd;
  bwd.source = scn.y;
  bwd.target = scn.w;
  bwd.delay = 1;
  if (scn.p >= 0) bwd.conditions.push_back({scn.p, 0});
  bwd.range = StepRange{std::max(1, scn.sys.signal(scn.w).start_index), n};
  rep.di_backward = directed_information(scn.sys, table, bwd, &cache).bits;

  std::vector<VarId> yp = history(scn.sys, scn.y, n);
  if (scn.p >= 0) {
    auto ps = history(scn.sys, scn.p, n);
    yp.insert(yp.end(), ps.begin(), ps.end());
  }
  rep.h_w_given_yp = cache.cond_entropy(history(scn.sys, scn.w, n), yp);
  rep.n_r_itl = itl_rate(scn, table).bits * n;

  rep.gap_left = (rep.h_w - rep.di_backward) - (rep.di_forward + rep.h_w_given_yp);
  rep.gap_right = (rep.di_forward + rep.h_w_given_yp) - rep.n_r_itl;
  return rep;
}

}  // namespace loopflow
