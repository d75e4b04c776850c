#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "varsnn/rng.hpp"
#include "varsnn/vars.hpp"

using namespace varsnn;
using namespace varsnn::vars;

namespace {

// Random valid structure generator for property tests: a random subset of
// slots gets random symbols; random bindings among occupied slots.
SymbolicStructure random_structure(const VarsConfig& cfg, Rng& rng) {
  SymbolicStructure s;
  const int n_occupied = rng.below(cfg.n_slots + 1);
  std::vector<int> slots = rng.sample_distinct(n_occupied, cfg.n_slots);
  for (int slot : slots) s.instances.push_back({rng.below(cfg.n_symbols()), slot});
  if (n_occupied > 0 && cfg.max_arity > 0) {
    const int n_bindings = rng.below(2 * cfg.max_arity + 1);
    std::set<std::tuple<int, int, int>> seen;
    for (int i = 0; i < n_bindings; ++i) {
      Binding b{slots[static_cast<size_t>(rng.below(n_occupied))], rng.below(cfg.max_arity),
                slots[static_cast<size_t>(rng.below(n_occupied))]};
      if (seen.insert({b.pred_slot, b.arg_pos, b.filler_slot}).second) s.bindings.push_back(b);
    }
  }
  s.sort();
  return s;
}

// The Fig-1 style running example: a binary relation over two entities, with
// the predicate and both fillers placed at explicit slots.
VarsConfig relation_config() {
  return VarsConfig::localist(4, 2, 4, {"John", "Mary", "loves", "knows"});
}

SymbolicStructure loves_john_mary() {
  SymbolicStructure s;
  s.instances = {{0, 2}, {1, 1}, {2, 3}};  // John at slot 2, Mary at 1, loves at 3 (0-based)
  s.bindings = {{3, 0, 2}, {3, 1, 1}};     // A1: loves->John, A2: loves->Mary
  s.sort();
  return s;
}

}  // namespace

TEST_CASE("vector length formula holds across configurations") {
  for (int n_slots : {1, 3, 4, 6}) {
    for (int arity : {0, 1, 2, 3}) {
      for (int d : {1, 4, 10}) {
        VarsConfig cfg = VarsConfig::localist(n_slots, arity, d);
        CHECK(cfg.vector_length() == n_slots * d + arity * n_slots * n_slots);
        SymbolicStructure empty;
        CHECK(static_cast<int>(encode(empty, cfg).size()) == cfg.vector_length());
      }
    }
  }
}

TEST_CASE("binary relation encodes to the documented bit positions") {
  VarsConfig cfg = relation_config();
  VarsVector v = encode(loves_john_mary(), cfg);
  REQUIRE(static_cast<int>(v.size()) == 4 * 4 + 2 * 16);
  std::set<int> active;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<size_t>(i)] != 0.0) active.insert(i);
  }
  // John's one-hot (bit 0) in slot 2, Mary's (bit 1) in slot 1, loves (bit 2)
  // in slot 3; A1 row 3 col 2; A2 row 3 col 1.
  std::set<int> expected = {2 * 4 + 0, 1 * 4 + 1, 3 * 4 + 2, 16 + 3 * 4 + 2, 16 + 16 + 3 * 4 + 1};
  CHECK(active == expected);
}

TEST_CASE("two instances of the same symbol occupy different slots without collision") {
  VarsConfig cfg = relation_config();
  SymbolicStructure s;
  s.instances = {{2, 0}, {2, 3}};  // loves twice
  VarsVector v = encode(s, cfg);
  CHECK(v[0 * 4 + 2] == 1.0);
  CHECK(v[3 * 4 + 2] == 1.0);
  SymbolicStructure back = decode(v, cfg, 2);
  s.sort();
  CHECK(back == s);
}

TEST_CASE("empty structure encodes to the zero vector and decodes back") {
  VarsConfig cfg = VarsConfig::localist(5, 2, 3);
  SymbolicStructure empty;
  VarsVector v = encode(empty, cfg);
  CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  CHECK(decode(v, cfg, 0) == empty);
}

TEST_CASE("encode rejects invalid structures") {
  VarsConfig cfg = relation_config();
  SymbolicStructure collision;
  collision.instances = {{0, 1}, {1, 1}};
  CHECK_THROWS_AS(encode(collision, cfg), std::invalid_argument);

  SymbolicStructure dangling;
  dangling.instances = {{2, 3}};
  dangling.bindings = {{3, 0, 0}};  // slot 0 empty
  CHECK_THROWS_AS(encode(dangling, cfg), std::invalid_argument);

  SymbolicStructure bad_arity;
  bad_arity.instances = {{2, 3}, {0, 0}};
  bad_arity.bindings = {{3, 2, 0}};  // arg 2 with max_arity 2 (0-based range is 0..1)
  CHECK_THROWS_AS(encode(bad_arity, cfg), std::invalid_argument);
}

TEST_CASE("decode errors carry the offending bit positions") {
  VarsConfig cfg = relation_config();
  VarsVector v(static_cast<size_t>(cfg.vector_length()), 0.0);
  v[0] = 1.0;
  v[1] = 0.9;  // two active units inside slot 0
  try {
    decode(v, cfg, 2);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.offending_bits == std::vector<int>{0, 1});
  }

  VarsVector w(static_cast<size_t>(cfg.vector_length()), 0.0);
  const int bit = cfg.binding_offset(0, 2, 3);
  w[static_cast<size_t>(bit)] = 1.0;  // binding over empty slots
  try {
    decode(w, cfg, 1);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.offending_bits == std::vector<int>{bit});
  }
}

TEST_CASE("decode(encode(s)) is the identity on random structures across configs") {
  Rng rng(1234);
  int checked = 0;
  for (int n_slots = 3; n_slots <= 6; ++n_slots) {
    for (int arity = 1; arity <= 2; ++arity) {
      VarsConfig cfg = VarsConfig::localist(n_slots, arity, n_slots >= 5 ? 10 : 4);
      for (int i = 0; i < 1300; ++i) {
        SymbolicStructure s = random_structure(cfg, rng);
        const VarsVector v = encode(s, cfg);
        SymbolicStructure back = decode(v, cfg, active_bit_count(s, cfg));
        CHECK(back == s);
        ++checked;
      }
    }
  }
  CHECK(checked >= 10000);
}

TEST_CASE("encode is injective on valid structures") {
  Rng rng(99);
  VarsConfig cfg = VarsConfig::localist(4, 2, 5);
  std::map<VarsVector, SymbolicStructure> seen;
  for (int i = 0; i < 3000; ++i) {
    SymbolicStructure s = random_structure(cfg, rng);
    auto [it, inserted] = seen.insert({encode(s, cfg), s});
    if (!inserted) CHECK(it->second == s);
  }
}

TEST_CASE("second-order relation: a predicate bound to another predicate's slot") {
  VarsConfig cfg = relation_config();
  SymbolicStructure s;
  // knows(Mary, loves(John, Mary)) -- the second argument of knows points at
  // the slot holding loves.
  s.instances = {{0, 2}, {1, 1}, {2, 3}, {3, 0}};
  s.bindings = {{3, 0, 2}, {3, 1, 1}, {0, 0, 1}, {0, 1, 3}};
  s.sort();
  VarsVector v = encode(s, cfg);
  CHECK(decode(v, cfg, 8) == s);
  std::string dump = format_structure(s, cfg);
  CHECK(dump.find("knows(Mary, loves)") != std::string::npos);
}

TEST_CASE("topn_match accepts exact targets and ranking permutations above the cut") {
  std::vector<double> target = {1, 0, 1, 0, 0, 1, 0};
  CHECK(topn_match(target, target));

  std::vector<double> out = {0.9, 0.1, 0.8, 0.2, 0.15, 0.7, 0.05};
  CHECK(topn_match(out, target));
  std::swap(out[5], out[3]);  // drops an active unit below the cut
  CHECK_FALSE(topn_match(out, target));
}

TEST_CASE("topn_match brute force over permutations of a 7-unit vector") {
  // Rank values 7..1 assigned to positions by permutation; match holds iff
  // the target's 3 active positions get the top 3 values.
  std::vector<double> target = {1, 1, 0, 0, 1, 0, 0};
  std::vector<int> perm = {0, 1, 2, 3, 4, 5, 6};
  int matches = 0, total = 0;
  do {
    std::vector<double> out(7);
    for (int i = 0; i < 7; ++i) out[static_cast<size_t>(perm[static_cast<size_t>(i)])] = 7.0 - i;
    std::set<int> top(perm.begin(), perm.begin() + 3);
    const bool expect = top == std::set<int>{0, 1, 4};
    CHECK(topn_match(out, target) == expect);
    matches += expect;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(total == 5040);
  CHECK(matches == 3 * 2 * 1 * 24);  // 3! orderings of the active set x 4! of the rest
}

TEST_CASE("topn_match resolves rank ties by lowest index") {
  std::vector<double> target = {0, 1, 0};
  std::vector<double> tie_low = {0.5, 0.5, 0.1};   // indices 0 and 1 tied; 0 wins the single spot
  CHECK_FALSE(topn_match(tie_low, target));
  std::vector<double> tie_high = {0.4, 0.5, 0.5};  // 1 and 2 tied; 1 wins
  CHECK(topn_match(tie_high, target));
  CHECK(topn_match(std::vector<double>{0, 0, 0}, std::vector<double>{0, 0, 0}));
  CHECK_THROWS_AS(topn_match(std::vector<double>{1, 2}, target), std::invalid_argument);
}

TEST_CASE("random_slot_assignment is injective, seeded, and capacity-checked") {
  Rng rng(5);
  auto a = random_slot_assignment(3, 5, rng);
  CHECK(a.size() == 3);
  CHECK(std::set<int>(a.begin(), a.end()).size() == 3);
  for (int s : a) CHECK((s >= 0 && s < 5));

  Rng r1(42), r2(42);
  CHECK(random_slot_assignment(4, 6, r1) == random_slot_assignment(4, 6, r2));

  Rng r3(7);
  CHECK_THROWS_AS(random_slot_assignment(4, 3, r3), std::invalid_argument);

  auto single = random_slot_assignment(1, 4, rng);
  CHECK(single.size() == 1);
}

TEST_CASE("random_slot_assignment is uniform over permutations (chi-squared)") {
  Rng rng(2024);
  std::map<std::vector<int>, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[random_slot_assignment(3, 3, rng)];
  CHECK(counts.size() == 6);
  double chi2 = 0;
  const double expected = draws / 6.0;
  for (const auto& [perm, c] : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 5 degrees of freedom, alpha = 0.01 -> critical value 15.086
  CHECK(chi2 < 15.086);
}

TEST_CASE("structures_equivalent detects slot relabelings and argument swaps") {
  VarsConfig cfg = relation_config();
  SymbolicStructure a = loves_john_mary();

  SymbolicStructure c;  // same content, different slots
  c.instances = {{0, 0}, {1, 3}, {2, 1}};
  c.bindings = {{1, 0, 0}, {1, 1, 3}};
  CHECK(structures_equivalent(a, c, cfg));
  CHECK(structures_equivalent(a, a, cfg));

  SymbolicStructure b;  // loves(Mary, John): same symbols, swapped roles
  b.instances = {{0, 2}, {1, 1}, {2, 3}};
  b.bindings = {{3, 0, 1}, {3, 1, 2}};
  CHECK_FALSE(structures_equivalent(a, b, cfg));
}

TEST_CASE("relabeling occupied slots by any permutation preserves equivalence") {
  Rng rng(31337);
  VarsConfig cfg = VarsConfig::localist(4, 2, 5);
  for (int i = 0; i < 300; ++i) {
    SymbolicStructure s = random_structure(cfg, rng);
    std::vector<int> perm = rng.permutation(cfg.n_slots);
    SymbolicStructure t;
    for (const auto& inst : s.instances) {
      t.instances.push_back({inst.symbol, perm[static_cast<size_t>(inst.slot)]});
    }
    for (const auto& b : s.bindings) {
      t.bindings.push_back({perm[static_cast<size_t>(b.pred_slot)], b.arg_pos,
                            perm[static_cast<size_t>(b.filler_slot)]});
    }
    CHECK(structures_equivalent(s, t, cfg));
  }
}

TEST_CASE("format_structure renders instances, bindings, and the relation") {
  VarsConfig cfg = relation_config();
  std::string dump = format_structure(loves_john_mary(), cfg);
  CHECK(dump.find("slot 2: John") != std::string::npos);
  CHECK(dump.find("slot 1: Mary") != std::string::npos);
  CHECK(dump.find("slot 3: loves") != std::string::npos);
  CHECK(dump.find("bind A1: slot 3 -> slot 2") != std::string::npos);
  CHECK(dump.find("bind A2: slot 3 -> slot 1") != std::string::npos);
  CHECK(dump.find("loves(John, Mary)") != std::string::npos);

  SymbolicStructure empty;
  CHECK(format_structure(empty, cfg) == "empty structure\n");
}
