#include <cmath>
#include <vector>

#include "loopflow/fsm.hpp"

namespace loopflow {

namespace {

// Chain decomposition of a joint distribution over a small tuple:
// term[c] = H(comp_c | comp_<c) = H(comp_<=c) - H(comp_<c).
std::vector<double> chain_terms(const std::vector<double>& dist,
                                const std::vector<int>& sizes) {
  std::vector<double> terms(sizes.size(), 0.0);
  double prev_h = 0.0;
  std::size_t prefix_card = 1;
  std::size_t suffix = dist.size();
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    prefix_card *= static_cast<std::size_t>(sizes[c]);
    suffix /= static_cast<std::size_t>(sizes[c]);
    // Marginal over the first c+1 components.
    Kahan h;
    for (std::size_t i = 0; i < prefix_card; ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < suffix; ++j) p += dist[i * suffix + j];
      if (p > 0.0) h.add(-p * std::log2(p));
    }
    double hc = h.value();
    terms[c] = hc - prev_h;
    prev_h = hc;
  }
  return terms;
}

// Writes chain terms into a caller-provided buffer; no allocation.
void chain_terms_into(const double* dist, const std::vector<int>& sizes,
                      double* terms) {
  double prev_h = 0.0;
  std::size_t card = 1;
  for (int s : sizes) card *= static_cast<std::size_t>(s);
  std::size_t prefix_card = 1;
  std::size_t suffix = card;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    prefix_card *= static_cast<std::size_t>(sizes[c]);
    suffix /= static_cast<std::size_t>(sizes[c]);
    double h = 0.0;
    for (std::size_t i = 0; i < prefix_card; ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < suffix; ++j) p += dist[i * suffix + j];
      if (p > 0.0) h -= p * std::log2(p);
    }
    terms[c] = h - prev_h;
    prev_h = h;
  }
}

struct TreeWalker {
  const MarkovModel& model;
  int depth_count;
  std::vector<std::vector<Kahan>> acc;      // [depth][component]
  std::vector<std::vector<double>> raw;     // [depth]: obs_card * S
  std::vector<std::vector<double>> belief;  // [depth]
  std::vector<std::vector<double>> dist;    // [depth]: obs_card
  std::vector<double> terms;                // scratch, components

  TreeWalker(const MarkovModel& m, int depth)
      : model(m), depth_count(depth) {
    acc.assign(depth, std::vector<Kahan>(m.obs_sizes.size()));
    raw.assign(depth, std::vector<double>(static_cast<std::size_t>(m.obs_card) *
                                          m.num_states));
    belief.assign(depth + 1, std::vector<double>(m.num_states));
    dist.assign(depth, std::vector<double>(m.obs_card));
    terms.assign(m.obs_sizes.size(), 0.0);
  }

  void walk(int depth, double prefix) {
    if (depth == depth_count) return;
    const int S = model.num_states;
    const int O = model.obs_card;
    std::vector<double>& r = raw[depth];
    std::fill(r.begin(), r.end(), 0.0);
    const std::vector<double>& b = belief[depth];
    for (int s = 0; s < S; ++s) {
      double bs = b[s];
      if (bs == 0.0) continue;
      const double* base = model.kernel.data() + static_cast<std::size_t>(s) * O * S;
      for (int o = 0; o < O; ++o) {
        double* out = r.data() + static_cast<std::size_t>(o) * S;
        const double* k = base + static_cast<std::size_t>(o) * S;
        for (int s2 = 0; s2 < S; ++s2) out[s2] += bs * k[s2];
      }
    }
    std::vector<double>& d = dist[depth];
    double mass_sum = 0.0;
    for (int o = 0; o < O; ++o) {
      double m = 0.0;
      const double* row = r.data() + static_cast<std::size_t>(o) * S;
      for (int s2 = 0; s2 < S; ++s2) m += row[s2];
      d[o] = m;
      mass_sum += m;
    }
    if (std::abs(mass_sum - 1.0) > 1e-6)
      throw Error("belief propagation drift: step mass " + std::to_string(mass_sum));

    chain_terms_into(d.data(), model.obs_sizes, terms.data());
    for (std::size_t c = 0; c < terms.size(); ++c) acc[depth][c].add(prefix * terms[c]);

    for (int o = 0; o < O; ++o) {
      double m = d[o];
      if (m <= 0.0) continue;
      const double* row = raw[depth].data() + static_cast<std::size_t>(o) * S;
      std::vector<double>& child = belief[depth + 1];
      double inv = 1.0 / m;
      for (int s2 = 0; s2 < S; ++s2) child[s2] = row[s2] * inv;
      walk(depth + 1, prefix * m);
    }
  }
};

}  // namespace

double ChainEntropies::total() const {
  Kahan t;
  for (double w : warm_bits) t.add(w);
  for (const auto& row : bits)
    for (double v : row) t.add(v);
  return t.value();
}

double ChainEntropies::component_total(int c) const {
  Kahan t;
  for (const auto& row : bits) t.add(row[c]);
  return t.value();
}

ChainEntropies tree_chain_entropies(const MarkovModel& model, int last_step,
                                    const EngineConfig& config) {
  const int depth = last_step - model.first_obs_step + 1;
  if (depth < 0) throw Error("tree_chain_entropies: empty step range");
  double leaves = std::pow(static_cast<double>(model.obs_card), depth) *
                  static_cast<double>(model.num_states);
  if (leaves > static_cast<double>(config.budget_leaves))
    throw BudgetExceeded("belief tree", leaves,
                         static_cast<double>(config.budget_leaves));

  ChainEntropies out;
  out.first_step = model.first_obs_step;
  out.last_step = last_step;
  out.component_names = model.obs_names;
  out.warm_names = model.warm_names;
  out.bits.assign(static_cast<std::size_t>(depth),
                  std::vector<double>(model.obs_sizes.size(), 0.0));

  // Warm-up chain terms from the initial joint.
  std::vector<double> warm_dist(model.warm_card, 0.0);
  for (int w = 0; w < model.warm_card; ++w) {
    double m = 0.0;
    for (int s = 0; s < model.num_states; ++s)
      m += model.initial[static_cast<std::size_t>(w) * model.num_states + s];
    warm_dist[w] = m;
  }
  out.warm_bits = model.warm_sizes.empty()
                      ? std::vector<double>{}
                      : chain_terms(warm_dist, model.warm_sizes);

  TreeWalker walker(model, depth);
  for (int w = 0; w < model.warm_card; ++w) {
    double m = warm_dist[w];
    if (m <= 0.0) continue;
    for (int s = 0; s < model.num_states; ++s)
      walker.belief[0][s] =
          model.initial[static_cast<std::size_t>(w) * model.num_states + s] / m;
    walker.walk(0, m);
  }
  for (int d = 0; d < depth; ++d)
    for (std::size_t c = 0; c < model.obs_sizes.size(); ++c)
      out.bits[static_cast<std::size_t>(d)][c] = walker.acc[d][c].value();
  return out;
}

}  // namespace loopflow
