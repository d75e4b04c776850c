#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "varsnn/tensor.hpp"
#include "varsnn/vars.hpp"

namespace varsnn::sim1 {

// Sequence-recall task: three role-filler pairs are presented one per step,
// then a probe role is shown and the paired filler must be recalled.

constexpr int kNumFillers = 10;
constexpr int kNumRoles = 3;
constexpr int kSteps = 4;
constexpr int kNumSlots = 3;
constexpr int kVarsWidth = kNumSlots * kNumFillers + 2 * kNumSlots * kNumSlots;  // 48

enum class Role : int { Subject = 0, Verb = 1, Patient = 2 };

const std::array<std::string, kNumFillers>& filler_names();
const std::array<std::string, kNumRoles>& role_names();

// Fillers are listed most-significant-last in their one-hot block: filler 0
// (dog) activates unit 9, filler 9 (chase) activates unit 0.
inline int filler_unit(int filler) { return kNumFillers - 1 - filler; }

struct Trial {
  std::array<int, kNumRoles> filler_of_role{};  // indexed by role id
  std::array<Role, kNumRoles> order{};          // roles in presentation order
  Role probe = Role::Subject;
  std::array<int, kNumRoles> tokens{0, 1, 2};   // slot of the step-i filler

  Role role_at_step(int step) const { return order[static_cast<size_t>(step)]; }
  int filler_at_step(int step) const {
    return filler_of_role[static_cast<size_t>(static_cast<int>(order[static_cast<size_t>(step)]))];
  }
  int filler_of(Role r) const { return filler_of_role[static_cast<size_t>(static_cast<int>(r))]; }
  int target_filler() const { return filler_of(probe); }
  // step index (0..2) at which the given role is presented
  int step_of(Role r) const;

  bool operator==(const Trial&) const = default;
};

// All 6000 trials: 10^3 filler assignments x 3! presentation orders. Probe
// roles cycle deterministically; tokens start at the identity. Both fields
// are re-drawn per presentation during training.
std::vector<Trial> enumerate_trials();

struct Split {
  std::vector<Trial> train;
  std::vector<Trial> test;
};

// test = all trials where held_filler fills held_role (600); train = the rest
// (5400).
Split split(int held_filler, Role held_role);

inline int input_width(bool with_vars) { return with_vars ? 17 : 14; }

// Codec configuration for the 48-unit target: 3 slots of 10-unit filler
// vectors plus two 3x3 binding matrices.
vars::VarsConfig vars_config();

// Fillers at their token-assigned slots; the verb slot binds the subject
// filler via A1 and the patient filler via A2.
vars::SymbolicStructure structure_of(const Trial& t);

// One input row: [filler one-hot 10 | role one-hot 3 | test-phase unit]
// (+ [token one-hot 3] with VARS). Steps 0..2 present pairs; step 3 presents
// the probe role alone with the test-phase unit on.
template <typename T>
void encode_step(const Trial& t, int step, bool with_vars, T* row) {
  const int width = input_width(with_vars);
  for (int i = 0; i < width; ++i) row[i] = T(0);
  if (step < kNumRoles) {
    row[filler_unit(t.filler_at_step(step))] = T(1);
    row[kNumFillers + static_cast<int>(t.role_at_step(step))] = T(1);
    if (with_vars) row[kNumFillers + kNumRoles + 1 + t.tokens[static_cast<size_t>(step)]] = T(1);
  } else {
    row[kNumFillers + static_cast<int>(t.probe)] = T(1);
    row[kNumFillers + kNumRoles] = T(1);
  }
}

template <typename T>
void main_target_into(const Trial& t, T* row) {
  for (int i = 0; i < kNumFillers; ++i) row[i] = T(0);
  row[filler_unit(t.target_filler())] = T(1);
}

template <typename T>
void vars_target_into(const Trial& t, T* row) {
  const vars::VarsVector v = vars::encode(structure_of(t), vars_config());
  for (int i = 0; i < kVarsWidth; ++i) row[i] = static_cast<T>(v[static_cast<size_t>(i)]);
}

template <typename T>
struct Example {
  std::array<Tensor<T>, kSteps> steps;
  Tensor<T> main_target;
  std::optional<Tensor<T>> vars_target;
};

template <typename T>
Example<T> encode(const Trial& t, bool with_vars) {
  Example<T> ex;
  const int width = input_width(with_vars);
  for (int s = 0; s < kSteps; ++s) {
    ex.steps[static_cast<size_t>(s)] = Tensor<T>({width});
    encode_step(t, s, with_vars, ex.steps[static_cast<size_t>(s)].data());
  }
  ex.main_target = Tensor<T>({kNumFillers});
  main_target_into(t, ex.main_target.data());
  if (with_vars) {
    ex.vars_target = Tensor<T>({kVarsWidth});
    vars_target_into(t, ex.vars_target->data());
  }
  return ex;
}

}  // namespace varsnn::sim1

namespace varsnn::sim2 {

// Odd-one-out task: three vertically stacked objects; exactly two share one
// feature (shape xor color); report the position of the object sharing
// neither.

constexpr int kNumShapes = 6;
constexpr int kNumColors = 6;
constexpr int kImage = 48;
constexpr int kObject = 12;
constexpr int kGreen = 3;
constexpr int kNumPositions = 3;
constexpr int kNumSymbols = 4;  // top, middle, bottom, different-from
constexpr int kNumSlots = 4;
constexpr int kVarsWidth = kNumSlots * kNumSymbols + 2 * kNumSlots * kNumSlots;  // 48
constexpr int kDifferentFrom = 3;

const std::array<std::string, kNumShapes>& shape_names();
const std::array<std::string, kNumColors>& color_names();
const std::array<std::string, kNumSymbols>& symbol_names();

struct Obj {
  int shape = 0;
  int color = 0;
  bool operator==(const Obj&) const = default;
};

struct Scene {
  std::array<Obj, kNumPositions> objects{};  // top, middle, bottom
  int odd = 0;
  bool operator==(const Scene&) const = default;
};

// Odd position if the triple satisfies the task constraints, else nullopt.
std::optional<int> classify(const std::array<Obj, kNumPositions>& objects);

// All valid scenes in a fixed deterministic order (21600).
std::vector<Scene> enumerate_scenes();

struct Split {
  std::vector<Scene> train;
  std::vector<Scene> test;
};

// test = scenes whose odd object is green (3600); train = the rest (18000).
Split split();

const std::array<const char*, kObject>& shape_mask(int shape);
int mask_pixel_count(int shape);
std::array<double, 3> color_rgb(int color);

// 48x48x3 image in [0,1]: the three 12x12 shapes in their colors, stacked
// vertically with a 12-row band each starting at row 6, centred horizontally,
// on black.
template <typename T>
void render_into(const Scene& scene, T* img) {
  for (int i = 0; i < kImage * kImage * 3; ++i) img[i] = T(0);
  for (int pos = 0; pos < kNumPositions; ++pos) {
    const Obj& o = scene.objects[static_cast<size_t>(pos)];
    const auto& mask = shape_mask(o.shape);
    const auto rgb = color_rgb(o.color);
    const int row0 = 6 + pos * kObject;
    const int col0 = (kImage - kObject) / 2;
    for (int y = 0; y < kObject; ++y) {
      for (int x = 0; x < kObject; ++x) {
        if (mask[static_cast<size_t>(y)][x] != '#') continue;
        T* px = img + ((row0 + y) * kImage + col0 + x) * 3;
        px[0] = static_cast<T>(rgb[0]);
        px[1] = static_cast<T>(rgb[1]);
        px[2] = static_cast<T>(rgb[2]);
      }
    }
  }
}

template <typename T>
Tensor<T> render(const Scene& scene) {
  Tensor<T> img({kImage, kImage, 3});
  render_into(scene, img.data());
  return img;
}

vars::VarsConfig vars_config();

// tokens[s] is the slot of symbol s (0=top, 1=middle, 2=bottom,
// 3=different-from). With binding, A1 points the different-from slot at the
// odd position's symbol and A2 at the two others.
vars::SymbolicStructure structure_of(const Scene& scene, const std::array<int, kNumSymbols>& tokens,
                                     bool with_binding);

template <typename T>
void main_target_into(const Scene& scene, T* row) {
  for (int i = 0; i < kNumPositions; ++i) row[i] = T(0);
  row[scene.odd] = T(1);
}

template <typename T>
void vars_target_into(const Scene& scene, const std::array<int, kNumSymbols>& tokens,
                      bool with_binding, T* row) {
  const vars::VarsVector v = vars::encode(structure_of(scene, tokens, with_binding), vars_config());
  for (int i = 0; i < kVarsWidth; ++i) row[i] = static_cast<T>(v[static_cast<size_t>(i)]);
}

// Token input row: the 1-based slot number of each symbol, scaled by 1/4
// into [0.25, 1].
template <typename T>
void token_input_into(const std::array<int, kNumSymbols>& tokens, T* row) {
  for (int s = 0; s < kNumSymbols; ++s) {
    row[s] = static_cast<T>(tokens[static_cast<size_t>(s)] + 1) / static_cast<T>(kNumSlots);
  }
}

}  // namespace varsnn::sim2
