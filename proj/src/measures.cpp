#include "loopflow/measures.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace loopflow {

namespace {

double entropy_of_marginal(const JointTable& m) {
  Kahan acc;
  for (const auto& [key, p] : m.atoms())
    if (p > 0.0) acc.add(-p * std::log2(p));
  return acc.value();
}

std::vector<VarId> sorted_unique(std::vector<VarId> vars) {
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

std::vector<VarId> joined(const std::vector<VarId>& a, const std::vector<VarId>& b) {
  std::vector<VarId> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return sorted_unique(std::move(out));
}

}  // namespace

double entropy_bits(const JointTable& table, const std::vector<VarId>& vars) {
  auto v = sorted_unique(vars);
  if (v.empty()) return 0.0;
  return entropy_of_marginal(table.marginalize(v));
}

double cond_entropy_bits(const JointTable& table, const std::vector<VarId>& a,
                         const std::vector<VarId>& b) {
  return entropy_bits(table, joined(a, b)) - entropy_bits(table, b);
}

double mutual_information_bits(const JointTable& table, const std::vector<VarId>& a,
                               const std::vector<VarId>& b,
                               const std::vector<VarId>& c) {
  EntropyCache cache(table);
  return cache.cond_mi(a, b, c);
}

EntropyCache::EntropyCache(const JointTable& table) : table_(&table) {
  atom_count_ = table.atom_count();
  const std::size_t width = table.vars().size();
  digits_.resize(atom_count_ * width);
  mass_.resize(atom_count_);
  std::size_t row = 0;
  for (const auto& [key, p] : table.atoms()) {
    for (std::size_t v = 0; v < width; ++v)
      digits_[row * width + v] =
          static_cast<std::uint8_t>(table.digit(key, static_cast<int>(v)));
    mass_[row] = p;
    ++row;
  }
}

double EntropyCache::entropy(std::vector<VarId> vars) {
  vars = sorted_unique(std::move(vars));
  if (vars.empty()) return 0.0;
  auto it = cache_.find(vars);
  if (it != cache_.end()) return it->second;

  // Column indices and a mixed-radix packing of the subset.
  const std::size_t width = table_->vars().size();
  std::vector<int> cols;
  std::uint64_t card = 1;
  bool narrow = true;
  for (const VarId& v : vars) {
    int i = table_->require_index(v);
    cols.push_back(i);
    int size = table_->sizes()[i];
    if (card > (1ull << 62) / static_cast<unsigned>(size)) narrow = false;
    if (narrow) card *= static_cast<unsigned>(size);
  }

  double h;
  if (!narrow) {
    h = entropy_of_marginal(table_->marginalize(vars));
  } else {
    std::unordered_map<std::uint64_t, double> marginal;
    marginal.reserve(std::min<std::uint64_t>(card, atom_count_) * 2);
    for (std::size_t row = 0; row < atom_count_; ++row) {
      const std::uint8_t* d = digits_.data() + row * width;
      std::uint64_t key = 0;
      for (int c : cols)
        key = key * static_cast<unsigned>(table_->sizes()[c]) + d[c];
      marginal[key] += mass_[row];
    }
    Kahan acc;
    for (const auto& [k, p] : marginal)
      if (p > 0.0) acc.add(-p * std::log2(p));
    h = acc.value();
  }
  cache_.emplace(std::move(vars), h);
  return h;
}

double EntropyCache::cond_entropy(const std::vector<VarId>& a,
                                  const std::vector<VarId>& b) {
  return entropy(joined(a, b)) - entropy(b);
}

double EntropyCache::cond_mi(const std::vector<VarId>& a, const std::vector<VarId>& b,
                             const std::vector<VarId>& c) {
  // H(A|C) - H(A|B,C), all through the joint-entropy cache.
  return entropy(joined(a, c)) + entropy(joined(b, c)) -
         entropy(joined(joined(a, b), c)) - entropy(c);
}

namespace {

std::vector<VarId> history(const LoopSystem& sys, int signal, int upto) {
  int from = sys.signal(signal).start_index;
  std::vector<VarId> out;
  for (int t = from; t <= upto; ++t) out.push_back({signal, t});
  return out;
}

StepRange default_range(const LoopSystem& sys, int target) {
  return {std::max(1, sys.signal(target).start_index), sys.horizon()};
}

}  // namespace

std::vector<VarId> directed_information_vars(const LoopSystem& sys,
                                             const DirectedInfoSpec& spec) {
  StepRange range = spec.range.value_or(default_range(sys, spec.target));
  std::vector<VarId> vars = history(sys, spec.target, range.last);
  int src_hi = std::min(sys.horizon(), range.last - spec.delay);
  for (const VarId& v : history(sys, spec.source, src_hi)) vars.push_back(v);
  for (const CondStream& es : spec.extra_sources)
    for (const VarId& v : history(sys, es.signal, range.last - es.lag)) vars.push_back(v);
  for (const CondStream& c : spec.conditions)
    for (const VarId& v : history(sys, c.signal, range.last - c.lag)) vars.push_back(v);
  for (int f : spec.full_conditions)
    for (const VarId& v : history(sys, f, range.last)) vars.push_back(v);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

MeasureResult directed_information(const LoopSystem& sys, const JointTable& table,
                                   const DirectedInfoSpec& spec, EntropyCache* cache) {
  std::optional<EntropyCache> local;
  if (!cache) local.emplace(table);
  EntropyCache& c = cache ? *cache : *local;
  StepRange range = spec.range.value_or(default_range(sys, spec.target));
  MeasureResult result;
  Kahan total;
  for (int i = range.first; i <= range.last; ++i) {
    std::vector<VarId> a{{spec.target, i}};
    std::vector<VarId> x = history(sys, spec.source, i - spec.delay);
    for (const CondStream& es : spec.extra_sources) {
      auto h = history(sys, es.signal, i - es.lag);
      x.insert(x.end(), h.begin(), h.end());
    }
    std::vector<VarId> b = history(sys, spec.target, i - 1);
    for (const CondStream& cs : spec.conditions) {
      auto h = history(sys, cs.signal, i - cs.lag);
      b.insert(b.end(), h.begin(), h.end());
    }
    for (int f : spec.full_conditions) {
      auto h = history(sys, f, range.last);
      b.insert(b.end(), h.begin(), h.end());
    }
    double term = x.empty() ? 0.0 : c.cond_mi(a, x, b);
    result.per_step.push_back(term);
    result.steps.push_back(i);
    total.add(term);
  }
  result.bits = total.value();
  return result;
}

MeasureResult directed_information(const LoopSystem& sys, const DirectedInfoSpec& spec,
                                   const EngineConfig& config) {
  JointTable table = enumerate_joint(sys, directed_information_vars(sys, spec), config);
  return directed_information(sys, table, spec);
}

MeasureResult reverse_directed_information(const LoopSystem& sys, const JointTable& table,
                                           int y, int x, std::optional<StepRange> range,
                                           EntropyCache* cache) {
  DirectedInfoSpec spec;
  spec.source = y;
  spec.target = x;
  spec.delay = 1;
  spec.range = range;
  return directed_information(sys, table, spec, cache);
}

ConservationReport conservation_check(const LoopSystem& sys, const JointTable& table,
                                      int x, int y, int k) {
  EntropyCache cache(table);
  std::vector<VarId> xs = history(sys, x, k);
  std::vector<VarId> ys = history(sys, y, k);
  ConservationReport rep{};
  rep.mutual_information = cache.cond_mi(xs, ys, {});
  DirectedInfoSpec fwd{x, y, 0, {}, StepRange{std::max(1, sys.signal(y).start_index), k}};
  rep.forward = directed_information(sys, table, fwd, &cache).bits;
  rep.backward =
      reverse_directed_information(sys, table, y, x,
                                   StepRange{std::max(1, sys.signal(x).start_index), k},
                                   &cache)
          .bits;
  rep.gap = rep.mutual_information - rep.forward - rep.backward;
  return rep;
}

}  // namespace loopflow
