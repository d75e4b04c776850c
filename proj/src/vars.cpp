#include "varsnn/vars.hpp"

#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace varsnn::vars {

VarsConfig VarsConfig::localist(int n_slots, int max_arity, int n_symbols,
                                std::vector<std::string> names) {
  VarsConfig cfg;
  cfg.n_slots = n_slots;
  cfg.max_arity = max_arity;
  cfg.d = n_symbols;
  cfg.symbol_table.assign(static_cast<size_t>(n_symbols), std::vector<double>(n_symbols, 0.0));
  for (int i = 0; i < n_symbols; ++i) cfg.symbol_table[static_cast<size_t>(i)][static_cast<size_t>(i)] = 1.0;
  cfg.symbol_names = std::move(names);
  cfg.validate();
  return cfg;
}

const std::string& VarsConfig::name_of(int symbol) const {
  static const std::string empty;
  if (symbol >= 0 && symbol < static_cast<int>(symbol_names.size())) {
    return symbol_names[static_cast<size_t>(symbol)];
  }
  return empty;
}

void VarsConfig::validate() const {
  if (n_slots < 1) throw std::invalid_argument("VarsConfig: n_slots must be >= 1");
  if (max_arity < 0) throw std::invalid_argument("VarsConfig: max_arity must be >= 0");
  if (d < 1) throw std::invalid_argument("VarsConfig: d must be >= 1");
  for (const auto& v : symbol_table) {
    if (static_cast<int>(v.size()) != d) {
      throw std::invalid_argument("VarsConfig: symbol vector length != d");
    }
  }
}

namespace {

// slot -> symbol, or nullopt when free; also checks per-slot uniqueness.
std::vector<std::optional<int>> occupancy(const SymbolicStructure& s, const VarsConfig& cfg) {
  std::vector<std::optional<int>> slot(static_cast<size_t>(cfg.n_slots));
  for (const auto& inst : s.instances) {
    if (inst.slot < 0 || inst.slot >= cfg.n_slots) {
      throw std::invalid_argument("structure: slot " + std::to_string(inst.slot) + " out of range");
    }
    if (inst.symbol < 0 || inst.symbol >= cfg.n_symbols()) {
      throw std::invalid_argument("structure: unknown symbol id " + std::to_string(inst.symbol));
    }
    if (slot[static_cast<size_t>(inst.slot)].has_value()) {
      throw std::invalid_argument("structure: slot " + std::to_string(inst.slot) +
                                  " holds more than one instance");
    }
    slot[static_cast<size_t>(inst.slot)] = inst.symbol;
  }
  return slot;
}

}  // namespace

void validate_structure(const SymbolicStructure& s, const VarsConfig& cfg) {
  auto slot = occupancy(s, cfg);
  for (const auto& b : s.bindings) {
    if (b.arg_pos < 0 || b.arg_pos >= cfg.max_arity) {
      throw std::invalid_argument("structure: argument position " + std::to_string(b.arg_pos) +
                                  " outside arity " + std::to_string(cfg.max_arity));
    }
    if (b.pred_slot < 0 || b.pred_slot >= cfg.n_slots || b.filler_slot < 0 ||
        b.filler_slot >= cfg.n_slots) {
      throw std::invalid_argument("structure: binding slot out of range");
    }
    if (!slot[static_cast<size_t>(b.pred_slot)].has_value() ||
        !slot[static_cast<size_t>(b.filler_slot)].has_value()) {
      throw std::invalid_argument("structure: binding references an empty slot");
    }
  }
}

VarsVector encode(const SymbolicStructure& s, const VarsConfig& cfg) {
  validate_structure(s, cfg);
  VarsVector v(static_cast<size_t>(cfg.vector_length()), 0.0);
  for (const auto& inst : s.instances) {
    const auto& sym = cfg.symbol_table[static_cast<size_t>(inst.symbol)];
    std::copy(sym.begin(), sym.end(), v.begin() + cfg.slot_offset(inst.slot));
  }
  for (const auto& b : s.bindings) {
    v[static_cast<size_t>(cfg.binding_offset(b.arg_pos, b.pred_slot, b.filler_slot))] = 1.0;
  }
  return v;
}

int active_bit_count(const SymbolicStructure& s, const VarsConfig& cfg) {
  const VarsVector v = encode(s, cfg);
  int n = 0;
  for (double x : v) {
    if (x != 0.0) ++n;
  }
  return n;
}

SymbolicStructure decode(const VarsVector& v, const VarsConfig& cfg, int n_active) {
  if (n_active < 0) throw std::invalid_argument("decode: n_active must be >= 0");
  if (static_cast<int>(v.size()) != cfg.vector_length()) {
    throw std::invalid_argument("decode: vector length " + std::to_string(v.size()) +
                                " != configured " + std::to_string(cfg.vector_length()));
  }
  // Localist inverse table: one-hot position -> symbol id.
  std::vector<int> symbol_at(static_cast<size_t>(cfg.d), -1);
  for (int s = 0; s < cfg.n_symbols(); ++s) {
    const auto& vec = cfg.symbol_table[static_cast<size_t>(s)];
    int hot = -1;
    for (int i = 0; i < cfg.d; ++i) {
      if (vec[static_cast<size_t>(i)] != 0.0) {
        if (hot != -1 || vec[static_cast<size_t>(i)] != 1.0) {
          throw std::logic_error("decode: symbol table is not localist one-hot");
        }
        hot = i;
      }
    }
    if (hot == -1 || symbol_at[static_cast<size_t>(hot)] != -1) {
      throw std::logic_error("decode: symbol table is not distinct one-hot");
    }
    symbol_at[static_cast<size_t>(hot)] = s;
  }

  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (n_active > static_cast<int>(v.size())) {
    throw std::invalid_argument("decode: n_active exceeds vector length");
  }
  std::partial_sort(idx.begin(), idx.begin() + n_active, idx.end(), [&](int a, int b) {
    if (v[static_cast<size_t>(a)] != v[static_cast<size_t>(b)]) {
      return v[static_cast<size_t>(a)] > v[static_cast<size_t>(b)];
    }
    return a < b;
  });
  std::set<int> active(idx.begin(), idx.begin() + n_active);

  SymbolicStructure out;
  std::vector<bool> occupied(static_cast<size_t>(cfg.n_slots), false);
  // Slot contents.
  for (int slot = 0; slot < cfg.n_slots; ++slot) {
    std::vector<int> bits;
    for (int i = 0; i < cfg.d; ++i) {
      const int pos = cfg.slot_offset(slot) + i;
      if (active.count(pos)) bits.push_back(pos);
    }
    if (bits.empty()) continue;
    if (bits.size() > 1) {
      throw DecodeError("decode: slot " + std::to_string(slot) + " has " +
                            std::to_string(bits.size()) + " active units",
                        bits);
    }
    const int offset = bits[0] - cfg.slot_offset(slot);
    const int symbol = symbol_at[static_cast<size_t>(offset)];
    if (symbol == -1) {
      throw DecodeError("decode: unit " + std::to_string(bits[0]) + " matches no symbol", bits);
    }
    out.instances.push_back({symbol, slot});
    occupied[static_cast<size_t>(slot)] = true;
  }
  // Binding bits.
  const int base = cfg.n_slots * cfg.d;
  for (int pos : active) {
    if (pos < base) continue;
    const int rel = pos - base;
    const int arg = rel / (cfg.n_slots * cfg.n_slots);
    const int pred = (rel / cfg.n_slots) % cfg.n_slots;
    const int filler = rel % cfg.n_slots;
    if (arg >= cfg.max_arity) {
      throw DecodeError("decode: unit " + std::to_string(pos) + " beyond configured layout", {pos});
    }
    if (!occupied[static_cast<size_t>(pred)] || !occupied[static_cast<size_t>(filler)]) {
      throw DecodeError("decode: binding unit " + std::to_string(pos) +
                            " references an empty slot",
                        {pos});
    }
    out.bindings.push_back({pred, arg, filler});
  }
  out.sort();
  return out;
}

std::vector<int> random_slot_assignment(int k, int n_slots, Rng& rng) {
  if (k > n_slots) {
    throw std::invalid_argument("random_slot_assignment: " + std::to_string(k) + " symbols exceed " +
                                std::to_string(n_slots) + " slots");
  }
  return rng.sample_distinct(k, n_slots);
}

namespace {

bool equivalent_under(const std::vector<int>& map_slot, const SymbolicStructure& s1,
                      const SymbolicStructure& s2) {
  SymbolicStructure mapped;
  mapped.instances.reserve(s1.instances.size());
  for (const auto& inst : s1.instances) {
    mapped.instances.push_back({inst.symbol, map_slot[static_cast<size_t>(inst.slot)]});
  }
  mapped.bindings.reserve(s1.bindings.size());
  for (const auto& b : s1.bindings) {
    mapped.bindings.push_back({map_slot[static_cast<size_t>(b.pred_slot)], b.arg_pos,
                               map_slot[static_cast<size_t>(b.filler_slot)]});
  }
  mapped.sort();
  SymbolicStructure sorted2 = s2;
  sorted2.sort();
  return mapped == sorted2;
}

}  // namespace

bool structures_equivalent(const SymbolicStructure& s1, const SymbolicStructure& s2,
                           const VarsConfig& cfg) {
  validate_structure(s1, cfg);
  validate_structure(s2, cfg);
  if (s1.instances.size() != s2.instances.size() || s1.bindings.size() != s2.bindings.size()) {
    return false;
  }
  // Candidate target slots per occupied source slot, filtered by symbol.
  std::map<int, int> sym1;  // slot -> symbol
  for (const auto& i : s1.instances) sym1[i.slot] = i.symbol;
  std::vector<std::pair<int, std::vector<int>>> candidates;
  for (const auto& [slot, symbol] : sym1) {
    std::vector<int> targets;
    for (const auto& j : s2.instances) {
      if (j.symbol == symbol) targets.push_back(j.slot);
    }
    if (targets.empty()) return false;
    candidates.push_back({slot, std::move(targets)});
  }
  std::vector<int> map_slot(static_cast<size_t>(cfg.n_slots), -1);
  std::vector<bool> used(static_cast<size_t>(cfg.n_slots), false);
  std::function<bool(size_t)> assign = [&](size_t i) -> bool {
    if (i == candidates.size()) return equivalent_under(map_slot, s1, s2);
    for (int target : candidates[i].second) {
      if (used[static_cast<size_t>(target)]) continue;
      used[static_cast<size_t>(target)] = true;
      map_slot[static_cast<size_t>(candidates[i].first)] = target;
      if (assign(i + 1)) return true;
      used[static_cast<size_t>(target)] = false;
      map_slot[static_cast<size_t>(candidates[i].first)] = -1;
    }
    return false;
  };
  return assign(0);
}

std::string format_structure(const SymbolicStructure& s, const VarsConfig& cfg) {
  std::ostringstream os;
  auto name = [&](int symbol) {
    const std::string& n = cfg.name_of(symbol);
    return n.empty() ? "sym" + std::to_string(symbol) : n;
  };
  if (s.instances.empty()) {
    os << "empty structure\n";
    return os.str();
  }
  SymbolicStructure sorted = s;
  sorted.sort();
  std::map<int, int> sym;  // slot -> symbol
  for (const auto& inst : sorted.instances) {
    sym[inst.slot] = inst.symbol;
    os << "slot " << inst.slot << ": " << name(inst.symbol) << "\n";
  }
  for (const auto& b : sorted.bindings) {
    os << "bind A" << (b.arg_pos + 1) << ": slot " << b.pred_slot << " -> slot " << b.filler_slot
       << "\n";
  }
  // Render each predicate slot as name(arg1, arg2, ...), grouping multiple
  // fillers of one argument position in braces.
  std::map<int, std::map<int, std::vector<int>>> preds;  // pred slot -> arg -> filler slots
  for (const auto& b : sorted.bindings) preds[b.pred_slot][b.arg_pos].push_back(b.filler_slot);
  for (const auto& [pred_slot, args] : preds) {
    os << name(sym.at(pred_slot)) << "(";
    bool first_arg = true;
    const int max_arg = args.rbegin()->first;
    for (int a = 0; a <= max_arg; ++a) {
      if (!first_arg) os << ", ";
      first_arg = false;
      auto it = args.find(a);
      if (it == args.end()) {
        os << "_";
        continue;
      }
      if (it->second.size() > 1) os << "{";
      for (size_t i = 0; i < it->second.size(); ++i) {
        os << (i ? ", " : "") << name(sym.at(it->second[i]));
      }
      if (it->second.size() > 1) os << "}";
    }
    os << ")\n";
  }
  return os.str();
}

}  // namespace varsnn::vars
