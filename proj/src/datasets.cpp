#include "varsnn/datasets.hpp"

#include <algorithm>
#include <stdexcept>

namespace varsnn::sim1 {

const std::array<std::string, kNumFillers>& filler_names() {
  static const std::array<std::string, kNumFillers> names = {
      "dog", "cat", "eat", "steak", "fish", "take", "get", "man", "apple", "chase"};
  return names;
}

const std::array<std::string, kNumRoles>& role_names() {
  static const std::array<std::string, kNumRoles> names = {"SUBJECT", "VERB", "PATIENT"};
  return names;
}

int Trial::step_of(Role r) const {
  for (int s = 0; s < kNumRoles; ++s) {
    if (order[static_cast<size_t>(s)] == r) return s;
  }
  throw std::logic_error("Trial: role not present");
}

std::vector<Trial> enumerate_trials() {
  static const std::array<std::array<Role, 3>, 6> orders = {{
      {Role::Subject, Role::Verb, Role::Patient},
      {Role::Subject, Role::Patient, Role::Verb},
      {Role::Verb, Role::Subject, Role::Patient},
      {Role::Verb, Role::Patient, Role::Subject},
      {Role::Patient, Role::Subject, Role::Verb},
      {Role::Patient, Role::Verb, Role::Subject},
  }};
  std::vector<Trial> trials;
  trials.reserve(6000);
  for (int fs = 0; fs < kNumFillers; ++fs) {
    for (int fv = 0; fv < kNumFillers; ++fv) {
      for (int fp = 0; fp < kNumFillers; ++fp) {
        for (int k = 0; k < 6; ++k) {
          Trial t;
          t.filler_of_role = {fs, fv, fp};
          t.order = orders[static_cast<size_t>(k)];
          t.probe = static_cast<Role>(k % kNumRoles);
          trials.push_back(t);
        }
      }
    }
  }
  return trials;
}

Split split(int held_filler, Role held_role) {
  if (held_filler < 0 || held_filler >= kNumFillers) {
    throw std::invalid_argument("sim1::split: held filler out of range");
  }
  Split out;
  for (const Trial& t : enumerate_trials()) {
    if (t.filler_of(held_role) == held_filler) {
      out.test.push_back(t);
    } else {
      out.train.push_back(t);
    }
  }
  return out;
}

vars::VarsConfig vars_config() {
  vars::VarsConfig cfg;
  cfg.n_slots = kNumSlots;
  cfg.max_arity = 2;
  cfg.d = kNumFillers;
  cfg.symbol_table.assign(kNumFillers, std::vector<double>(kNumFillers, 0.0));
  for (int f = 0; f < kNumFillers; ++f) {
    cfg.symbol_table[static_cast<size_t>(f)][static_cast<size_t>(filler_unit(f))] = 1.0;
  }
  cfg.symbol_names.assign(filler_names().begin(), filler_names().end());
  cfg.validate();
  return cfg;
}

vars::SymbolicStructure structure_of(const Trial& t) {
  vars::SymbolicStructure s;
  for (int step = 0; step < kNumRoles; ++step) {
    s.instances.push_back({t.filler_at_step(step), t.tokens[static_cast<size_t>(step)]});
  }
  const int verb_slot = t.tokens[static_cast<size_t>(t.step_of(Role::Verb))];
  const int subject_slot = t.tokens[static_cast<size_t>(t.step_of(Role::Subject))];
  const int patient_slot = t.tokens[static_cast<size_t>(t.step_of(Role::Patient))];
  s.bindings.push_back({verb_slot, 0, subject_slot});
  s.bindings.push_back({verb_slot, 1, patient_slot});
  s.sort();
  return s;
}

}  // namespace varsnn::sim1

namespace varsnn::sim2 {

const std::array<std::string, kNumShapes>& shape_names() {
  static const std::array<std::string, kNumShapes> names = {"square", "disc",  "triangle",
                                                            "diamond", "cross", "ring"};
  return names;
}

const std::array<std::string, kNumColors>& color_names() {
  static const std::array<std::string, kNumColors> names = {"white",   "red",    "cyan",
                                                            "green",   "magenta", "yellow"};
  return names;
}

const std::array<std::string, kNumSymbols>& symbol_names() {
  static const std::array<std::string, kNumSymbols> names = {"top", "middle", "bottom",
                                                             "different-from"};
  return names;
}

namespace {

using Mask = std::array<const char*, kObject>;

constexpr Mask kSquare = {
    "############", "############", "############", "############", "############", "############",
    "############", "############", "############", "############", "############", "############"};

constexpr Mask kDisc = {
    "...######...", "..########..", ".##########.", ".##########.", "############", "############",
    "############", "############", ".##########.", ".##########.", "..########..", "...######..."};

constexpr Mask kTriangle = {
    ".....##.....", ".....##.....", "....####....", "....####....", "...######...", "...######...",
    "..########..", "..########..", ".##########.", ".##########.", "############", "############"};

constexpr Mask kDiamond = {
    ".....##.....", "....####....", "...######...", "..########..", ".##########.", "############",
    "############", ".##########.", "..########..", "...######...", "....####....", ".....##....."};

constexpr Mask kCross = {
    "....####....", "....####....", "....####....", "....####....", "############", "############",
    "############", "############", "....####....", "....####....", "....####....", "....####...."};

constexpr Mask kRing = {
    "...######...", "..########..", ".####..####.", ".###....###.", "###......###", "###......###",
    "###......###", "###......###", ".###....###.", ".####..####.", "..########..", "...######..."};

constexpr std::array<Mask, kNumShapes> kMasks = {kSquare, kDisc, kTriangle, kDiamond, kCross, kRing};

int shared_features(const Obj& a, const Obj& b) {
  return (a.shape == b.shape ? 1 : 0) + (a.color == b.color ? 1 : 0);
}

}  // namespace

const std::array<const char*, kObject>& shape_mask(int shape) {
  return kMasks.at(static_cast<size_t>(shape));
}

int mask_pixel_count(int shape) {
  int n = 0;
  for (const char* row : shape_mask(shape)) {
    for (int x = 0; x < kObject; ++x) n += row[x] == '#';
  }
  return n;
}

std::array<double, 3> color_rgb(int color) {
  static const std::array<std::array<double, 3>, kNumColors> rgb = {{
      {1, 1, 1},  // white
      {1, 0, 0},  // red
      {0, 1, 1},  // cyan
      {0, 1, 0},  // green
      {1, 0, 1},  // magenta
      {1, 1, 0},  // yellow
  }};
  return rgb.at(static_cast<size_t>(color));
}

std::optional<int> classify(const std::array<Obj, kNumPositions>& objects) {
  static const std::array<std::array<int, 2>, 3> pairs = {{{0, 1}, {0, 2}, {1, 2}}};
  int found = -1;
  int n_found = 0;
  for (int p = 0; p < 3; ++p) {
    const Obj& a = objects[static_cast<size_t>(pairs[static_cast<size_t>(p)][0])];
    const Obj& b = objects[static_cast<size_t>(pairs[static_cast<size_t>(p)][1])];
    if (shared_features(a, b) == 1) {
      found = p;
      ++n_found;
    }
  }
  if (n_found != 1) return std::nullopt;
  const int odd = 3 - pairs[static_cast<size_t>(found)][0] - pairs[static_cast<size_t>(found)][1];
  for (int other = 0; other < 3; ++other) {
    if (other == odd) continue;
    if (shared_features(objects[static_cast<size_t>(odd)], objects[static_cast<size_t>(other)]) != 0) {
      return std::nullopt;
    }
  }
  return odd;
}

std::vector<Scene> enumerate_scenes() {
  std::vector<Scene> scenes;
  std::array<Obj, kNumPositions> objs;
  for (int s0 = 0; s0 < kNumShapes; ++s0) {
    for (int c0 = 0; c0 < kNumColors; ++c0) {
      objs[0] = {s0, c0};
      for (int s1 = 0; s1 < kNumShapes; ++s1) {
        for (int c1 = 0; c1 < kNumColors; ++c1) {
          objs[1] = {s1, c1};
          for (int s2 = 0; s2 < kNumShapes; ++s2) {
            for (int c2 = 0; c2 < kNumColors; ++c2) {
              objs[2] = {s2, c2};
              if (auto odd = classify(objs)) scenes.push_back({objs, *odd});
            }
          }
        }
      }
    }
  }
  return scenes;
}

Split split() {
  Split out;
  for (const Scene& s : enumerate_scenes()) {
    if (s.objects[static_cast<size_t>(s.odd)].color == kGreen) {
      out.test.push_back(s);
    } else {
      out.train.push_back(s);
    }
  }
  return out;
}

vars::VarsConfig vars_config() {
  vars::VarsConfig cfg = vars::VarsConfig::localist(
      kNumSlots, 2, kNumSymbols,
      std::vector<std::string>(symbol_names().begin(), symbol_names().end()));
  return cfg;
}

vars::SymbolicStructure structure_of(const Scene& scene, const std::array<int, kNumSymbols>& tokens,
                                     bool with_binding) {
  vars::SymbolicStructure s;
  for (int sym = 0; sym < kNumSymbols; ++sym) {
    s.instances.push_back({sym, tokens[static_cast<size_t>(sym)]});
  }
  if (with_binding) {
    const int df_slot = tokens[kDifferentFrom];
    s.bindings.push_back({df_slot, 0, tokens[static_cast<size_t>(scene.odd)]});
    for (int pos = 0; pos < kNumPositions; ++pos) {
      if (pos != scene.odd) s.bindings.push_back({df_slot, 1, tokens[static_cast<size_t>(pos)]});
    }
  }
  s.sort();
  return s;
}

}  // namespace varsnn::sim2
