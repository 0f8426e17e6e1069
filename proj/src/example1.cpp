#include "loopflow/example1.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace loopflow {

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

ClosedForms closed_forms(double alpha, double beta) {
  ClosedForms cf;
  cf.pr_w1 = alpha * beta;
  cf.pr_wk = (alpha * alpha + (1.0 - alpha) * (1.0 - alpha)) * beta +
             alpha * (1.0 - alpha);
  double hb = binary_entropy(alpha);
  cf.r_itl_paper = hb * (alpha * (1.0 - beta) + (1.0 - alpha) * beta);
  cf.r_itl_alt = hb * (alpha * beta + (1.0 - alpha) * (1.0 - beta));
  return cf;
}

ItlScenario build_example1(const Example1Config& cfg) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0 || cfg.beta < 0.0 || cfg.beta > 1.0 ||
      cfg.flip_prob < 0.0 || cfg.flip_prob > 1.0)
    throw Error("example1: probabilities must lie in [0,1]");
  if (cfg.n < 1) throw Error("example1: horizon must be >= 1");
  const bool e1 = cfg.encoder == Example1Config::Encoder::E1;
  const bool noisy = cfg.flip_prob > 0.0;

  SystemDecl decl;
  decl.horizon = cfg.n;

  auto add_signal = [&decl](const std::string& name, int alphabet, Role role, int start) {
    SignalDecl s;
    s.name = name;
    s.alphabet.size = alphabet;
    s.role = role;
    s.start_index = start;
    decl.signals.push_back(s);
  };
  add_signal("q", 2, Role::Exogenous, 0);
  if (e1) add_signal("r", 2, Role::Exogenous, 0);
  if (noisy) add_signal("s", 2, Role::Exogenous, 1);
  add_signal("x", 4, Role::Internal, 0);
  add_signal("y", 4, Role::Internal, 0);
  add_signal("w", 2, Role::Internal, 1);

  {
    ExogenousGroup q;
    q.signals = {"q"};
    q.iid_pmf = {1.0 - cfg.alpha, cfg.alpha};
    q.step_pmfs[0] = {0.0, 1.0};  // q(0) = 1 deterministically
    decl.exogenous.groups.push_back(std::move(q));
  }
  if (e1) {
    ExogenousGroup r;
    r.signals = {"r"};
    r.iid_pmf = {1.0 - cfg.beta, cfg.beta};
    decl.exogenous.groups.push_back(std::move(r));
  }
  if (noisy) {
    ExogenousGroup s;
    s.signals = {"s"};
    s.iid_pmf = {1.0 - cfg.flip_prob, cfg.flip_prob};
    decl.exogenous.groups.push_back(std::move(s));
  }

  // Encoder: x(k) from the message w and its own past output (the channel
  // is transparent, so the fed-back output equals x).
  Block enc;
  enc.name = "E";
  enc.output = "x";
  enc.loop_input = "w";
  enc.delay = 0;
  if (e1) {
    enc.exog_input = "r";
    enc.expr = parse_expr("(w[t] == (x[t-1] mod 2)) ? r[t] : (r[t] + 2)");
    enc.step_exprs[0] = parse_expr("r[t]");
  } else {
    enc.expr = parse_expr("w[t]");
    enc.step_exprs[0] = parse_expr("1");
  }

  Block chan;
  chan.name = "C";
  chan.output = "y";
  chan.loop_input = "x";
  chan.delay = 0;
  if (noisy) {
    chan.exog_input = "s";
    chan.expr = parse_expr("x[t] xor s[t]");
    chan.step_exprs[0] = parse_expr("x[t]");
  } else {
    chan.expr = parse_expr("x[t]");
  }

  Block fb;
  fb.name = "S";
  fb.output = "w";
  fb.loop_input = "y";
  fb.exog_input = "q";
  fb.delay = 1;
  fb.expr = parse_expr("(q[t-1] == (y[t-1] mod 2)) ? q[t] : (y[t-1] mod 2)");

  decl.blocks.push_back(std::move(enc));
  decl.blocks.push_back(std::move(chan));
  decl.blocks.push_back(std::move(fb));

  DerivedDef v;
  v.name = "v";
  v.alphabet.size = 2;
  v.start_index = 1;
  v.expr = e1 ? parse_expr("(y[t] <= 1) ? (y[t-1] mod 2) : ((y[t-1] mod 2) xor 1)")
              : parse_expr("y[t]");
  decl.derived.push_back(std::move(v));

  if (e1) {
    DerivedDef a;
    a.name = "a";
    a.alphabet.size = 2;
    a.start_index = 0;
    a.expr = parse_expr("((y[t] mod 2) == q[t]) ? 1 : 0");
    decl.derived.push_back(std::move(a));
  }

  DerivedDef err;
  err.name = "err";
  err.alphabet.size = 2;
  err.start_index = 1;
  err.prologue[0] = 0;
  err.expr = parse_expr("(err[t-1] == 1) ? 1 : ((v[t] != w[t]) ? 1 : 0)");
  decl.derived.push_back(std::move(err));

  return make_itl_scenario(build_system(std::move(decl)), "w", "y", "", "v", "err");
}

double tree_h_w_rate(const Example1Config& cfg, const EngineConfig& config) {
  ItlScenario scn = build_example1(cfg);
  MarkovModel model = compile_fsm(scn.sys, {{scn.w, 0}}, 1, {}, config);
  return tree_chain_entropies(model, cfg.n, config).total() / cfg.n;
}

Eq62Increments eq62_increments(const Example1Config& cfg, const EngineConfig& config) {
  ItlScenario scn = build_example1(cfg);
  const LoopSystem& sys = scn.sys;
  int q = sys.require_signal("q");
  int y = scn.y;
  const int n = cfg.n;

  std::vector<VarId> vars;
  for (int t = 0; t <= n; ++t) vars.push_back({q, t});
  for (int t = 0; t <= n; ++t) vars.push_back({y, t});
  JointTable table = enumerate_joint(sys, vars, config);
  EntropyCache cache(table);

  Eq62Increments inc;
  ClosedForms cf = closed_forms(cfg.alpha, cfg.beta);
  inc.candidate_paper = cf.r_itl_paper;
  inc.candidate_alt = cf.r_itl_alt;

  std::vector<VarId> y_all;
  for (int t = 0; t <= n; ++t) y_all.push_back({y, t});
  for (int k = 1; k <= n; ++k) {
    std::vector<VarId> q_past;
    for (int t = 0; t < k; ++t) q_past.push_back({q, t});
    std::vector<VarId> y_upto;
    for (int t = 0; t <= k; ++t) y_upto.push_back({y, t});
    double h_prior = cache.cond_entropy({{q, k}}, q_past);
    std::vector<VarId> cond_causal = q_past;
    cond_causal.insert(cond_causal.end(), y_upto.begin(), y_upto.end());
    std::vector<VarId> cond_literal = q_past;
    cond_literal.insert(cond_literal.end(), y_all.begin(), y_all.end());
    inc.steps.push_back(k);
    inc.causal.push_back(h_prior - cache.cond_entropy({{q, k}}, cond_causal));
    inc.literal.push_back(h_prior - cache.cond_entropy({{q, k}}, cond_literal));
  }
  return inc;
}

BetaSweepResult beta_sweep(const Example1Config& base, double beta_from, double beta_to,
                           double beta_step, SweepEngine engine,
                           const EngineConfig& config) {
  if (base.encoder != Example1Config::Encoder::E1)
    throw Error("beta_sweep: the side-stream probability only exists for encoder E1");
  if (beta_step <= 0.0 || beta_to < beta_from) throw Error("beta_sweep: bad grid");

  std::vector<double> grid;
  for (double b = beta_from; b <= beta_to + 1e-12; b += beta_step)
    grid.push_back(std::min(b, 1.0));

  BetaSweepResult result;
  result.rows.resize(grid.size());

  // The detailed columns need the enumerated joint; they are exact only
  // while the atom space fits the budget.
  Example1Config probe = base;
  probe.beta = 0.5;
  ItlScenario scn = build_example1(probe);
  bool detailed = count_exo_atoms(scn.sys) <= static_cast<double>(config.budget_atoms);

  if (engine == SweepEngine::Enumerate && !detailed)
    throw BudgetExceeded("beta sweep enumeration", count_exo_atoms(scn.sys),
                         static_cast<double>(config.budget_atoms));

  if (detailed) {
    int r_group = -1;
    const auto& groups = scn.sys.decl().exogenous.groups;
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (groups[g].signals == std::vector<std::string>{"r"}) r_group = static_cast<int>(g);
    std::vector<VarId> vars;
    for (int t = 1; t <= base.n; ++t) vars.push_back({scn.w, t});
    for (int t = 0; t <= base.n; ++t) vars.push_back({scn.y, t});
    SweptEnumeration swept(scn.sys, vars, r_group, config);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      JointTable table = swept.reweight({1.0 - grid[i], grid[i]});
      EntropyCache cache(table);
      std::vector<VarId> ws;
      for (int t = 1; t <= base.n; ++t) ws.push_back({scn.w, t});
      BetaSweepRow& row = result.rows[i];
      row.beta = grid[i];
      row.h_w_rate = cache.entropy(ws) / base.n;
      row.r_itl = itl_rate(scn, table).bits;
      row.di_forward = itl_forward_di(scn, table, &cache).bits;
      DirectedInfoSpec bwd{scn.y, scn.w, 1, {}, {}, {}, StepRange{1, base.n}};
      row.di_backward = directed_information(scn.sys, table, bwd, &cache).bits;
    }
  } else {
    for (auto& row : result.rows) {
      row.r_itl = std::nan("");
      row.di_forward = std::nan("");
      row.di_backward = std::nan("");
    }
  }

  if (engine == SweepEngine::Tree) {
    // Tree engine recomputes H(w_1^n)/n exactly at any horizon; points are
    // independent and sharded deterministically across workers.
    int workers = std::max(1, config.threads);
    std::vector<std::thread> pool;
    auto run = [&](int w) {
      for (std::size_t i = static_cast<std::size_t>(w); i < grid.size();
           i += static_cast<std::size_t>(workers)) {
        Example1Config cfg = base;
        cfg.beta = grid[i];
        result.rows[i].beta = grid[i];
        result.rows[i].h_w_rate = tree_h_w_rate(cfg, config);
      }
    };
    if (workers == 1) {
      run(0);
    } else {
      for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
      for (auto& th : pool) th.join();
    }
  }

  result.max_h_rate = -1.0;
  for (const BetaSweepRow& row : result.rows) {
    if (row.h_w_rate > result.max_h_rate) {
      result.max_h_rate = row.h_w_rate;
      result.argmax_beta = row.beta;
    }
  }
  return result;
}

std::string sweep_csv(const BetaSweepResult& result) {
  std::ostringstream os;
  os << "beta,H_w_rate,R_ITL,DI_forward,DI_backward\n";
  auto fmt = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  for (const BetaSweepRow& row : result.rows)
    os << fmt(row.beta) << "," << fmt(row.h_w_rate) << "," << fmt(row.r_itl) << ","
       << fmt(row.di_forward) << "," << fmt(row.di_backward) << "\n";
  return os.str();
}

}  // namespace loopflow
