#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "loopflow/errors.hpp"

namespace loopflow {

// A variable of a joint table: one time sample of one signal.
struct VarId {
  int signal;
  int t;

  friend bool operator==(const VarId&, const VarId&) = default;
  friend auto operator<=>(const VarId&, const VarId&) = default;
};

struct EmpiricalProvenance {
  std::uint64_t count;
  std::uint64_t seed;
};

using AtomKey = unsigned __int128;

struct AtomKeyHash {
  std::size_t operator()(AtomKey k) const {
    std::uint64_t x = static_cast<std::uint64_t>(k) ^
                      (static_cast<std::uint64_t>(k >> 64) * 0x9E3779B97F4A7C15ull);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return static_cast<std::size_t>(x);
  }
};

// Exact probability table over an ordered list of (signal, time) variables.
// Atoms are keyed by the mixed-radix packing of their symbol tuple with the
// first variable most significant, so ascending keys are lexicographic
// order. Zero-mass atoms are never stored.
class JointTable {
 public:
  JointTable(std::vector<VarId> vars, std::vector<int> sizes,
             std::vector<std::string> names);

  const std::vector<VarId>& vars() const { return vars_; }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(const VarId& v) const;  // -1 when absent
  int require_index(const VarId& v) const;

  std::size_t atom_count() const { return atoms_.size(); }
  const std::unordered_map<AtomKey, double, AtomKeyHash>& atoms() const { return atoms_; }

  AtomKey encode(const std::vector<int>& symbols) const;
  std::vector<int> decode(AtomKey key) const;
  int digit(AtomKey key, int var_index) const;

  void add_mass(AtomKey key, double mass);
  void set_empirical(EmpiricalProvenance p) { empirical_ = p; }
  const std::optional<EmpiricalProvenance>& empirical() const { return empirical_; }

  // Compensated total; 1 +- 1e-12 for any table produced by the engines.
  double total_mass() const;

  JointTable marginalize(const std::vector<VarId>& keep) const;
  // Renormalized conditional given an assignment; ZeroMassEvent when the
  // event has no mass.
  JointTable condition(const std::vector<std::pair<VarId, int>>& assignment) const;

  // Atoms sorted by key (lexicographic by symbol tuple).
  std::vector<std::pair<AtomKey, double>> sorted_atoms() const;

  // "vars...,probability" CSV and the equivalent JSON array, atom order
  // lexicographic; the bit-exact export contract for golden tests.
  std::string to_csv() const;
  std::string to_json() const;

 private:
  std::vector<VarId> vars_;
  std::vector<int> sizes_;
  std::vector<std::string> names_;
  std::vector<AtomKey> strides_;
  std::unordered_map<AtomKey, double, AtomKeyHash> atoms_;
  std::optional<EmpiricalProvenance> empirical_;
};

// Neumaier-compensated accumulator for the reductions, where drift would
// otherwise eat into the 1e-12 identity tolerances.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }

  double value() const { return sum + comp; }
};

}  // namespace loopflow
