#include "loopflow/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace loopflow {

namespace {

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", p);
  return buf;
}

}  // namespace

JointTable::JointTable(std::vector<VarId> vars, std::vector<int> sizes,
                       std::vector<std::string> names)
    : vars_(std::move(vars)), sizes_(std::move(sizes)), names_(std::move(names)) {
  if (vars_.size() != sizes_.size() || vars_.size() != names_.size())
    throw Error("JointTable: mismatched variable metadata");
  strides_.assign(vars_.size(), 1);
  AtomKey capacity = 1;
  const AtomKey max = ~static_cast<AtomKey>(0);
  for (int i = static_cast<int>(vars_.size()) - 1; i >= 0; --i) {
    if (sizes_[i] < 1) throw Error("JointTable: empty alphabet");
    strides_[i] = capacity;
    if (capacity > max / static_cast<unsigned>(sizes_[i]))
      throw BudgetExceeded("joint table key space", 1e39, 3.4e38);
    capacity *= static_cast<unsigned>(sizes_[i]);
  }
}

int JointTable::index_of(const VarId& v) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i] == v) return static_cast<int>(i);
  return -1;
}

int JointTable::require_index(const VarId& v) const {
  int i = index_of(v);
  if (i < 0)
    throw VariableMissing("variable (signal " + std::to_string(v.signal) + ", t=" +
                          std::to_string(v.t) + ") not in table");
  return i;
}

AtomKey JointTable::encode(const std::vector<int>& symbols) const {
  AtomKey key = 0;
  for (std::size_t i = 0; i < vars_.size(); ++i)
    key += static_cast<AtomKey>(symbols[i]) * strides_[i];
  return key;
}

std::vector<int> JointTable::decode(AtomKey key) const {
  std::vector<int> out(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i)
    out[i] = static_cast<int>((key / strides_[i]) % static_cast<unsigned>(sizes_[i]));
  return out;
}

int JointTable::digit(AtomKey key, int var_index) const {
  return static_cast<int>((key / strides_[var_index]) %
                          static_cast<unsigned>(sizes_[var_index]));
}

void JointTable::add_mass(AtomKey key, double mass) {
  if (mass == 0.0) return;
  if (mass < 0.0) throw Error("JointTable: negative mass");
  atoms_[key] += mass;
}

double JointTable::total_mass() const {
  Kahan acc;
  for (const auto& [k, p] : atoms_) acc.add(p);
  return acc.value();
}

JointTable JointTable::marginalize(const std::vector<VarId>& keep) const {
  std::vector<int> idx(keep.size());
  std::vector<int> sizes(keep.size());
  std::vector<std::string> names(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    idx[i] = require_index(keep[i]);
    sizes[i] = sizes_[idx[i]];
    names[i] = names_[idx[i]];
  }
  JointTable out(keep, std::move(sizes), std::move(names));
  for (const auto& [key, p] : atoms_) {
    AtomKey nk = 0;
    for (std::size_t i = 0; i < keep.size(); ++i)
      nk += static_cast<AtomKey>(digit(key, idx[i])) * out.strides_[i];
    out.atoms_[nk] += p;
  }
  out.empirical_ = empirical_;
  return out;
}

JointTable JointTable::condition(
    const std::vector<std::pair<VarId, int>>& assignment) const {
  std::vector<std::pair<int, int>> fixed;
  fixed.reserve(assignment.size());
  for (const auto& [v, value] : assignment) {
    int i = require_index(v);
    if (value < 0 || value >= sizes_[i])
      throw Error("condition: value outside alphabet");
    fixed.emplace_back(i, value);
  }
  std::vector<VarId> keep_vars;
  std::vector<int> keep_idx, keep_sizes;
  std::vector<std::string> keep_names;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    bool is_fixed = false;
    for (const auto& [fi, fv] : fixed) is_fixed |= (fi == static_cast<int>(i));
    if (is_fixed) continue;
    keep_vars.push_back(vars_[i]);
    keep_idx.push_back(static_cast<int>(i));
    keep_sizes.push_back(sizes_[i]);
    keep_names.push_back(names_[i]);
  }
  JointTable out(std::move(keep_vars), std::move(keep_sizes), std::move(keep_names));
  Kahan event_mass;
  for (const auto& [key, p] : atoms_) {
    bool match = true;
    for (const auto& [fi, fv] : fixed) match &= (digit(key, fi) == fv);
    if (!match) continue;
    event_mass.add(p);
    AtomKey nk = 0;
    for (std::size_t i = 0; i < keep_idx.size(); ++i)
      nk += static_cast<AtomKey>(digit(key, keep_idx[i])) * out.strides_[i];
    out.atoms_[nk] += p;
  }
  double z = event_mass.value();
  if (z <= 0.0) throw ZeroMassEvent("conditioning event has zero probability");
  for (auto& [k, p] : out.atoms_) p /= z;
  out.empirical_ = empirical_;
  return out;
}

std::vector<std::pair<AtomKey, double>> JointTable::sorted_atoms() const {
  std::vector<std::pair<AtomKey, double>> out(atoms_.begin(), atoms_.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::string JointTable::to_csv() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < names_.size(); ++i) os << names_[i] << ",";
  os << "probability\n";
  for (const auto& [key, p] : sorted_atoms()) {
    for (std::size_t i = 0; i < vars_.size(); ++i) os << digit(key, static_cast<int>(i)) << ",";
    os << format_probability(p) << "\n";
  }
  return os.str();
}

std::string JointTable::to_json() const {
  std::ostringstream os;
  os << "{\"vars\":[";
  for (std::size_t i = 0; i < names_.size(); ++i)
    os << (i ? "," : "") << "\"" << names_[i] << "\"";
  os << "],\"atoms\":[";
  bool first = true;
  for (const auto& [key, p] : sorted_atoms()) {
    os << (first ? "" : ",") << "{\"symbols\":[";
    for (std::size_t i = 0; i < vars_.size(); ++i)
      os << (i ? "," : "") << digit(key, static_cast<int>(i));
    os << "],\"probability\":" << format_probability(p) << "}";
    first = false;
  }
  os << "]";
  if (empirical_)
    os << ",\"provenance\":{\"kind\":\"empirical\",\"count\":" << empirical_->count
       << ",\"seed\":" << empirical_->seed << "}";
  else
    os << ",\"provenance\":{\"kind\":\"exact\"}";
  os << "}";
  return os.str();
}

}  // namespace loopflow
