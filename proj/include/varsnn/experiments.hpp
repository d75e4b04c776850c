#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "varsnn/datasets.hpp"
#include "varsnn/nn.hpp"
#include "varsnn/rng.hpp"
#include "varsnn/tape.hpp"

namespace varsnn::exp {

enum class Precision { F32, F64 };
enum class Condition { Plain, Vars, VarsNoBinding };

const char* precision_name(Precision p);
const char* condition_name(Condition c);
std::optional<Precision> parse_precision(const std::string& s);
std::optional<Condition> parse_condition(const std::string& s);

struct RunConfig {
  int sim = 1;
  Condition condition = Condition::Plain;
  uint64_t seed = 1;
  Precision precision = Precision::F32;

  int batch_size = 50;
  int batches_per_epoch = 5000;
  int max_epochs = 50;
  int patience = 10;
  bool early_stop = true;  // simulation 1 only; the control condition disables it

  double learning_rate = 1e-3;

  // architecture
  int lstm_hidden = 200;
  bool sim1_tanh_dense = false;
  int conv_channels[3] = {16, 32, 64};
  int fc1 = 256;
  int fc2 = 128;

  // hold-out (simulation 1)
  int held_filler = 0;
  int held_role = 0;

  // training-set accuracy is evaluated on this many sampled items per epoch
  // (0 = the full training set); the full set is always used after the final
  // epoch
  int eval_train_sample = 0;

  static RunConfig defaults_for(int sim, Condition condition);
  void validate() const;
};

struct RunResult {
  uint64_t seed = 0;
  bool failed = false;
  std::string fail_reason;
  int epochs_trained = 0;
  double final_main_acc = 0;
  std::optional<double> final_vars_acc;
  double max_main_acc = 0;  // best test-set main accuracy seen at any epoch
  double final_train_acc = 0;
  std::vector<double> train_acc_by_epoch;
  std::vector<double> test_main_acc_by_epoch;
  std::vector<double> test_vars_acc_by_epoch;
  uint64_t train_stream_hash = 0;
  int64_t presentations = 0;
};

struct AggStat {
  double mean = 0;
  std::optional<double> sd;  // absent below 2 runs
  int n = 0;
};

AggStat aggregate_values(const std::vector<double>& values);

struct AggregateResult {
  int n_runs = 0;
  int n_failed = 0;
  AggStat main_acc;
  std::optional<AggStat> vars_acc;
  AggStat max_main_acc;
  AggStat epochs;
};

AggregateResult aggregate(const std::vector<RunResult>& runs);

// Trains one replication to completion. All stochasticity (weight init,
// batch sampling, probe roles, token permutations, evaluation draws) flows
// from a single generator seeded with config.seed.
RunResult train_run(const RunConfig& config, bool verbose = false);

// Runs one replication per seed, scheduling across `jobs` threads. on_done
// (optional) fires as each run finishes, serialized by a mutex.
std::vector<RunResult> replicate(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                 int jobs,
                                 const std::function<void(size_t, const RunResult&)>& on_done = {});

// ---- evaluation (identical main-task scoring in every condition) ----

// Fraction of items whose most active main-head unit is the target unit.
// probe_override substitutes every trial's probe role (the held-out role at
// test time); token permutations are drawn from rng in the VARS condition.
template <typename T>
double evaluate_sim1_main(const nn::Sim1Model<T>& model, const std::vector<sim1::Trial>& trials,
                          std::optional<sim1::Role> probe_override, Rng& rng, int batch_size = 250);

// Fraction of items whose n most active VARS units match the target's active
// positions (n = 5). Requires the VARS head.
template <typename T>
double evaluate_sim1_vars(const nn::Sim1Model<T>& model, const std::vector<sim1::Trial>& trials,
                          Rng& rng, int batch_size = 250);

template <typename T>
double evaluate_sim2_main(const nn::Sim2Model<T>& model, const std::vector<sim2::Scene>& scenes,
                          Rng& rng, int batch_size = 100);

// n = 7 with binding targets, 4 without.
template <typename T>
double evaluate_sim2_vars(const nn::Sim2Model<T>& model, const std::vector<sim2::Scene>& scenes,
                          bool with_binding, Rng& rng, int batch_size = 100);

// ---- implementation of the templated evaluators ----

namespace detail {

template <typename T>
struct Sim1Batch {
  std::vector<Tensor<T>> steps;
  Tensor<T> main_targets;
  Tensor<T> vars_targets;
};

template <typename T>
Sim1Batch<T> assemble_sim1(const std::vector<sim1::Trial>& trials, size_t begin, size_t end,
                           bool with_vars, std::optional<sim1::Role> probe_override, Rng& rng) {
  const int width = sim1::input_width(with_vars);
  const int B = static_cast<int>(end - begin);
  Sim1Batch<T> batch;
  batch.steps.assign(sim1::kSteps, Tensor<T>({B, width}));
  batch.main_targets = Tensor<T>({B, sim1::kNumFillers});
  if (with_vars) batch.vars_targets = Tensor<T>({B, sim1::kVarsWidth});
  for (size_t i = begin; i < end; ++i) {
    sim1::Trial t = trials[i];
    if (probe_override) t.probe = *probe_override;
    if (with_vars) {
      auto perm = rng.permutation(sim1::kNumSlots);
      std::copy(perm.begin(), perm.end(), t.tokens.begin());
    }
    const int64_t row = static_cast<int64_t>(i - begin);
    for (int s = 0; s < sim1::kSteps; ++s) {
      sim1::encode_step(t, s, with_vars, batch.steps[static_cast<size_t>(s)].data() + row * width);
    }
    sim1::main_target_into(t, batch.main_targets.data() + row * sim1::kNumFillers);
    if (with_vars) sim1::vars_target_into(t, batch.vars_targets.data() + row * sim1::kVarsWidth);
  }
  return batch;
}

inline int argmax_row(const float* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

inline int argmax_row(const double* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

template <typename T>
struct Sim2Batch {
  Tensor<T> images;
  Tensor<T> tokens;
  Tensor<T> main_targets;
  Tensor<T> vars_targets;
};

template <typename T>
Sim2Batch<T> assemble_sim2(const std::vector<sim2::Scene>& scenes, size_t begin, size_t end,
                           bool with_tokens, bool with_binding, Rng& rng) {
  const int B = static_cast<int>(end - begin);
  Sim2Batch<T> batch;
  batch.images = Tensor<T>({B, sim2::kImage, sim2::kImage, 3});
  batch.main_targets = Tensor<T>({B, sim2::kNumPositions});
  if (with_tokens) {
    batch.tokens = Tensor<T>({B, sim2::kNumSymbols});
    batch.vars_targets = Tensor<T>({B, sim2::kVarsWidth});
  }
  for (size_t i = begin; i < end; ++i) {
    const sim2::Scene& scene = scenes[i];
    const int64_t row = static_cast<int64_t>(i - begin);
    sim2::render_into(scene, batch.images.data() + row * sim2::kImage * sim2::kImage * 3);
    sim2::main_target_into(scene, batch.main_targets.data() + row * sim2::kNumPositions);
    if (with_tokens) {
      std::array<int, sim2::kNumSymbols> tokens;
      auto perm = rng.permutation(sim2::kNumSlots);
      std::copy(perm.begin(), perm.end(), tokens.begin());
      sim2::token_input_into(tokens, batch.tokens.data() + row * sim2::kNumSymbols);
      sim2::vars_target_into(scene, tokens, with_binding,
                             batch.vars_targets.data() + row * sim2::kVarsWidth);
    }
  }
  return batch;
}

}  // namespace detail

template <typename T>
double evaluate_sim1_main(const nn::Sim1Model<T>& model, const std::vector<sim1::Trial>& trials,
                          std::optional<sim1::Role> probe_override, Rng& rng, int batch_size) {
  if (trials.empty()) throw std::invalid_argument("evaluate_sim1_main: empty evaluation set");
  const bool with_vars = model.cfg.with_vars;
  int64_t correct = 0;
  for (size_t begin = 0; begin < trials.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(trials.size(), begin + static_cast<size_t>(batch_size));
    auto batch = detail::assemble_sim1<T>(trials, begin, end, with_vars, probe_override, rng);
    Tape<T> tape;
    std::vector<typename Tape<T>::NodeId> steps;
    for (auto& s : batch.steps) steps.push_back(tape.constant(std::move(s)));
    auto heads = model.forward(tape, steps);
    const Tensor<T>& probs = tape.value(tape.softmax(heads.main_logits));
    for (int64_t r = 0; r < static_cast<int64_t>(end - begin); ++r) {
      const int predicted = detail::argmax_row(probs.data() + r * sim1::kNumFillers, sim1::kNumFillers);
      const int target = detail::argmax_row(batch.main_targets.data() + r * sim1::kNumFillers,
                                            sim1::kNumFillers);
      correct += predicted == target;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

template <typename T>
double evaluate_sim1_vars(const nn::Sim1Model<T>& model, const std::vector<sim1::Trial>& trials,
                          Rng& rng, int batch_size) {
  if (!model.cfg.with_vars) {
    throw std::logic_error("evaluate_sim1_vars: model has no VARS head");
  }
  if (trials.empty()) throw std::invalid_argument("evaluate_sim1_vars: empty evaluation set");
  int64_t correct = 0;
  for (size_t begin = 0; begin < trials.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(trials.size(), begin + static_cast<size_t>(batch_size));
    auto batch = detail::assemble_sim1<T>(trials, begin, end, true, std::nullopt, rng);
    Tape<T> tape;
    std::vector<typename Tape<T>::NodeId> steps;
    for (auto& s : batch.steps) steps.push_back(tape.constant(std::move(s)));
    auto heads = model.forward(tape, steps);
    const Tensor<T>& out = tape.value(tape.activation(*heads.vars_logits, Act::Sigmoid));
    for (int64_t r = 0; r < static_cast<int64_t>(end - begin); ++r) {
      correct += vars::topn_match(out.data() + r * sim1::kVarsWidth, sim1::kVarsWidth,
                                  batch.vars_targets.data() + r * sim1::kVarsWidth, sim1::kVarsWidth);
    }
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

template <typename T>
double evaluate_sim2_main(const nn::Sim2Model<T>& model, const std::vector<sim2::Scene>& scenes,
                          Rng& rng, int batch_size) {
  if (scenes.empty()) throw std::invalid_argument("evaluate_sim2_main: empty evaluation set");
  const bool with_tokens = model.cfg.with_vars;
  int64_t correct = 0;
  for (size_t begin = 0; begin < scenes.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(scenes.size(), begin + static_cast<size_t>(batch_size));
    auto batch = detail::assemble_sim2<T>(scenes, begin, end, with_tokens, true, rng);
    Tape<T> tape;
    auto images = tape.constant(std::move(batch.images));
    std::optional<typename Tape<T>::NodeId> tokens;
    if (with_tokens) tokens = tape.constant(std::move(batch.tokens));
    auto heads = model.forward(tape, images, tokens);
    const Tensor<T>& probs = tape.value(tape.softmax(heads.main_logits));
    for (int64_t r = 0; r < static_cast<int64_t>(end - begin); ++r) {
      const int predicted = detail::argmax_row(probs.data() + r * 3, 3);
      correct += predicted == scenes[begin + static_cast<size_t>(r)].odd;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(scenes.size());
}

template <typename T>
double evaluate_sim2_vars(const nn::Sim2Model<T>& model, const std::vector<sim2::Scene>& scenes,
                          bool with_binding, Rng& rng, int batch_size) {
  if (!model.cfg.with_vars) {
    throw std::logic_error("evaluate_sim2_vars: model has no VARS head");
  }
  if (scenes.empty()) throw std::invalid_argument("evaluate_sim2_vars: empty evaluation set");
  int64_t correct = 0;
  for (size_t begin = 0; begin < scenes.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(scenes.size(), begin + static_cast<size_t>(batch_size));
    auto batch = detail::assemble_sim2<T>(scenes, begin, end, true, with_binding, rng);
    Tape<T> tape;
    auto images = tape.constant(std::move(batch.images));
    auto tokens = tape.constant(std::move(batch.tokens));
    auto heads = model.forward(tape, images, tokens);
    const Tensor<T>& out = tape.value(tape.activation(*heads.vars_logits, Act::Sigmoid));
    for (int64_t r = 0; r < static_cast<int64_t>(end - begin); ++r) {
      correct += vars::topn_match(out.data() + r * sim2::kVarsWidth, sim2::kVarsWidth,
                                  batch.vars_targets.data() + r * sim2::kVarsWidth, sim2::kVarsWidth);
    }
  }
  return static_cast<double>(correct) / static_cast<double>(scenes.size());
}

}  // namespace varsnn::exp
