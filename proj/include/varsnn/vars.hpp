#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "varsnn/rng.hpp"

namespace varsnn::vars {

// Layout of a VARS vector:
//   [slot 0 .. slot n_slots-1 contents, d values each]
//   ++ [A_1 .. A_max_arity, each an n_slots x n_slots row-major binding matrix]
// Bit (i, j) of A_a binds argument a of the predicate in slot i to the filler
// in slot j. Slots and argument positions are 0-based throughout the API;
// argument matrices are still displayed as A1, A2, ... in dumps.
struct VarsConfig {
  int n_slots = 0;
  int max_arity = 0;
  int d = 0;
  std::vector<std::vector<double>> symbol_table;  // symbol id -> d-vector
  std::vector<std::string> symbol_names;          // optional, for dumps

  // One-hot symbols: symbol i gets the unit vector with bit i set (d defaults
  // to n_symbols).
  static VarsConfig localist(int n_slots, int max_arity, int n_symbols,
                             std::vector<std::string> names = {});

  int vector_length() const { return n_slots * d + max_arity * n_slots * n_slots; }
  int n_symbols() const { return static_cast<int>(symbol_table.size()); }
  int slot_offset(int slot) const { return slot * d; }
  int binding_offset(int arg_pos, int pred_slot, int filler_slot) const {
    return n_slots * d + arg_pos * n_slots * n_slots + pred_slot * n_slots + filler_slot;
  }
  const std::string& name_of(int symbol) const;
  void validate() const;
};

struct SymbolInstance {
  int symbol = 0;
  int slot = 0;
  auto operator<=>(const SymbolInstance&) const = default;
};

// arg_pos is 0-based: 0 selects A1.
struct Binding {
  int pred_slot = 0;
  int arg_pos = 0;
  int filler_slot = 0;
  auto operator<=>(const Binding&) const = default;
};

struct SymbolicStructure {
  std::vector<SymbolInstance> instances;
  std::vector<Binding> bindings;

  void sort() {
    std::sort(instances.begin(), instances.end());
    std::sort(bindings.begin(), bindings.end());
  }
  bool operator==(const SymbolicStructure&) const = default;
};

using VarsVector = std::vector<double>;

class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::vector<int> bits)
      : std::runtime_error(what), offending_bits(std::move(bits)) {}
  std::vector<int> offending_bits;
};

// Throws std::invalid_argument on slot collisions, dangling bindings, or
// out-of-range fields.
void validate_structure(const SymbolicStructure& s, const VarsConfig& cfg);

VarsVector encode(const SymbolicStructure& s, const VarsConfig& cfg);

// Reads the n_active largest-valued positions as active bits and rebuilds
// the structure; inverse of encode on exact codes. Ties at the n-th rank go
// to the lowest index. Requires a localist symbol table.
SymbolicStructure decode(const VarsVector& v, const VarsConfig& cfg, int n_active);

// Number of nonzero positions in the exact code of s.
int active_bit_count(const SymbolicStructure& s, const VarsConfig& cfg);

// True iff the n largest output positions (n = number of active target bits)
// coincide with the target's active positions as sets.
template <typename T>
bool topn_match(const T* output, int64_t out_len, const T* target, int64_t target_len) {
  if (out_len != target_len) {
    throw std::invalid_argument("topn_match: length mismatch " + std::to_string(out_len) + " vs " +
                                std::to_string(target_len));
  }
  int n = 0;
  for (int64_t i = 0; i < target_len; ++i) {
    if (target[i] != T(0)) ++n;
  }
  if (n == 0) return true;
  std::vector<int> idx(static_cast<size_t>(out_len));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + n, idx.end(), [&](int a, int b) {
    if (output[a] != output[b]) return output[a] > output[b];
    return a < b;
  });
  for (int i = 0; i < n; ++i) {
    if (target[idx[static_cast<size_t>(i)]] == T(0)) return false;
  }
  return true;
}

template <typename T>
bool topn_match(const std::vector<T>& output, const std::vector<T>& target) {
  return topn_match(output.data(), static_cast<int64_t>(output.size()), target.data(),
                    static_cast<int64_t>(target.size()));
}

// Uniformly random injective map from k symbols to slots; result[i] is the
// slot of symbol i.
std::vector<int> random_slot_assignment(int k, int n_slots, Rng& rng);

// True iff some relabeling of slots maps s1 onto s2 (same symbols, same
// binding topology).
bool structures_equivalent(const SymbolicStructure& s1, const SymbolicStructure& s2,
                           const VarsConfig& cfg);

// One instance/binding per line, plus rendered predicate expressions.
std::string format_structure(const SymbolicStructure& s, const VarsConfig& cfg);

}  // namespace varsnn::vars
