#include "varsnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "varsnn/serialize.hpp"

namespace varsnn::exp {

const char* precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::Plain: return "plain";
    case Condition::Vars: return "vars";
    case Condition::VarsNoBinding: return "vars_no_binding";
  }
  return "?";
}

std::optional<Precision> parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  return std::nullopt;
}

std::optional<Condition> parse_condition(const std::string& s) {
  if (s == "plain") return Condition::Plain;
  if (s == "vars") return Condition::Vars;
  if (s == "vars_no_binding") return Condition::VarsNoBinding;
  return std::nullopt;
}

RunConfig RunConfig::defaults_for(int sim, Condition condition) {
  RunConfig cfg;
  cfg.sim = sim;
  cfg.condition = condition;
  if (sim == 1) {
    cfg.batch_size = 50;
    cfg.batches_per_epoch = 5000;
    cfg.learning_rate = 1e-3;
    cfg.early_stop = true;
    cfg.eval_train_sample = 0;
  } else if (sim == 2) {
    cfg.batch_size = 100;
    cfg.batches_per_epoch = 500;
    cfg.learning_rate = 1e-4;
    cfg.early_stop = false;
    cfg.eval_train_sample = 2000;
  } else {
    throw std::invalid_argument("unknown simulation id " + std::to_string(sim));
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (sim != 1 && sim != 2) throw std::invalid_argument("config: sim must be 1 or 2");
  if (condition == Condition::VarsNoBinding && sim != 2) {
    throw std::invalid_argument("config: vars_no_binding applies to simulation 2 only");
  }
  if (batch_size < 1 || batches_per_epoch < 1 || max_epochs < 1) {
    throw std::invalid_argument("config: batch geometry must be positive");
  }
  if (early_stop && (patience < 1 || patience > max_epochs)) {
    throw std::invalid_argument("config: patience must be in [1, max_epochs]");
  }
  if (learning_rate <= 0) throw std::invalid_argument("config: learning rate must be positive");
  if (lstm_hidden < 1 || fc1 < 1 || fc2 < 1 || conv_channels[0] < 1 || conv_channels[1] < 1 ||
      conv_channels[2] < 1) {
    throw std::invalid_argument("config: layer sizes must be positive");
  }
  if (held_filler < 0 || held_filler >= sim1::kNumFillers || held_role < 0 ||
      held_role >= sim1::kNumRoles) {
    throw std::invalid_argument("config: held-out pair out of range");
  }
  if (eval_train_sample < 0) throw std::invalid_argument("config: eval_train_sample must be >= 0");
}

AggStat aggregate_values(const std::vector<double>& values) {
  AggStat s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / s.n;
  if (s.n >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

AggregateResult aggregate(const std::vector<RunResult>& runs) {
  AggregateResult agg;
  agg.n_runs = static_cast<int>(runs.size());
  std::vector<double> main, vars, max_main, epochs;
  for (const RunResult& r : runs) {
    if (r.failed) {
      ++agg.n_failed;
      continue;
    }
    main.push_back(r.final_main_acc);
    max_main.push_back(r.max_main_acc);
    epochs.push_back(static_cast<double>(r.epochs_trained));
    if (r.final_vars_acc) vars.push_back(*r.final_vars_acc);
  }
  agg.main_acc = aggregate_values(main);
  agg.max_main_acc = aggregate_values(max_main);
  agg.epochs = aggregate_values(epochs);
  if (!vars.empty()) agg.vars_acc = aggregate_values(vars);
  return agg;
}

namespace {

template <typename T>
std::vector<const Tensor<T>*> collect_grads(Tape<T>& tape, const std::vector<Tensor<T>*>& params) {
  std::vector<const Tensor<T>*> grads;
  grads.reserve(params.size());
  for (Tensor<T>* p : params) grads.push_back(&tape.grad(tape.borrow(*p)));
  return grads;
}

// Deterministic evaluation subsample (without replacement) of the training
// set, fixed once per run.
template <typename Item>
std::vector<Item> eval_subset(const std::vector<Item>& items, int sample, Rng& rng) {
  if (sample <= 0 || sample >= static_cast<int>(items.size())) return items;
  std::vector<Item> out;
  out.reserve(static_cast<size_t>(sample));
  for (int i : rng.sample_distinct(sample, static_cast<int>(items.size()))) {
    out.push_back(items[static_cast<size_t>(i)]);
  }
  return out;
}

template <typename T>
RunResult train_sim1(const RunConfig& cfg, bool verbose) {
  RunResult res;
  res.seed = cfg.seed;
  Rng rng(cfg.seed);

  const bool with_vars = cfg.condition == Condition::Vars;
  auto split = sim1::split(cfg.held_filler, static_cast<sim1::Role>(cfg.held_role));
  const auto held_role = static_cast<sim1::Role>(cfg.held_role);

  nn::Sim1Model<T> model;
  model.init({.with_vars = with_vars, .hidden = cfg.lstm_hidden, .tanh_dense = cfg.sim1_tanh_dense},
             rng);
  auto params = model.params();
  nn::AdamState<T> opt;
  opt.init(params, {.lr = static_cast<T>(cfg.learning_rate)});

  const int B = cfg.batch_size;
  const int width = sim1::input_width(with_vars);
  uint64_t stream_hash = io::fnv1a_init();
  double best_metric = -1;
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      std::vector<Tensor<T>> steps(sim1::kSteps, Tensor<T>({B, width}));
      Tensor<T> main_targets({B, sim1::kNumFillers});
      Tensor<T> vars_targets;
      if (with_vars) vars_targets = Tensor<T>({B, sim1::kVarsWidth});
      for (int i = 0; i < B; ++i) {
        const int idx = rng.below(static_cast<int>(split.train.size()));
        sim1::Trial t = split.train[static_cast<size_t>(idx)];
        t.probe = static_cast<sim1::Role>(rng.below(sim1::kNumRoles));
        stream_hash = io::fnv1a_mix(stream_hash, static_cast<uint64_t>(idx));
        stream_hash = io::fnv1a_mix(stream_hash, static_cast<uint64_t>(t.probe));
        if (with_vars) {
          auto perm = rng.permutation(sim1::kNumSlots);
          std::copy(perm.begin(), perm.end(), t.tokens.begin());
          for (int tok : t.tokens) stream_hash = io::fnv1a_mix(stream_hash, static_cast<uint64_t>(tok));
        }
        for (int s = 0; s < sim1::kSteps; ++s) {
          sim1::encode_step(t, s, with_vars, steps[static_cast<size_t>(s)].data() + static_cast<int64_t>(i) * width);
        }
        sim1::main_target_into(t, main_targets.data() + static_cast<int64_t>(i) * sim1::kNumFillers);
        if (with_vars) {
          sim1::vars_target_into(t, vars_targets.data() + static_cast<int64_t>(i) * sim1::kVarsWidth);
        }
      }
      res.presentations += B;

      Tape<T> tape;
      std::vector<typename Tape<T>::NodeId> step_ids;
      for (auto& s : steps) step_ids.push_back(tape.constant(std::move(s)));
      auto heads = model.forward(tape, step_ids);
      auto loss = tape.softmax_cross_entropy(heads.main_logits, tape.constant(std::move(main_targets)));
      if (with_vars) {
        loss = tape.add(loss, tape.sigmoid_binary_cross_entropy(
                                  *heads.vars_logits, tape.constant(std::move(vars_targets))));
      }
      const double loss_value = static_cast<double>(tape.value(loss).item());
      if (!std::isfinite(loss_value)) {
        res.failed = true;
        res.fail_reason = "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                          std::to_string(b) + " (" + std::to_string(loss_value) + ")";
        res.epochs_trained = epoch;
        res.train_stream_hash = stream_hash;
        return res;
      }
      tape.backward(loss);
      adam_step(opt, params, collect_grads(tape, params));
    }

    const double train_acc = evaluate_sim1_main(model, split.train, std::nullopt, rng);
    const double test_main = evaluate_sim1_main(model, split.test, held_role, rng);
    res.train_acc_by_epoch.push_back(train_acc);
    res.test_main_acc_by_epoch.push_back(test_main);
    double metric = test_main;
    if (with_vars) {
      const double test_vars = evaluate_sim1_vars(model, split.test, rng);
      res.test_vars_acc_by_epoch.push_back(test_vars);
      metric = test_vars;
    }
    res.epochs_trained = epoch + 1;
    if (verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::string vars_note =
          with_vars ? " vars " + std::to_string(res.test_vars_acc_by_epoch.back()) : "";
      std::fprintf(stderr, "[sim1 seed %llu] epoch %d train %.4f test %.4f%s (%.1fs)\n",
                   static_cast<unsigned long long>(cfg.seed), epoch + 1, train_acc, test_main,
                   vars_note.c_str(), secs);
    }
    if (cfg.early_stop) {
      if (metric > best_metric) {
        best_metric = metric;
        best_epoch = epoch;
      } else if (epoch - best_epoch >= cfg.patience) {
        break;
      }
    }
  }

  res.final_main_acc = res.test_main_acc_by_epoch.back();
  if (with_vars) res.final_vars_acc = res.test_vars_acc_by_epoch.back();
  res.max_main_acc = *std::max_element(res.test_main_acc_by_epoch.begin(),
                                       res.test_main_acc_by_epoch.end());
  res.final_train_acc = res.train_acc_by_epoch.back();
  res.train_stream_hash = stream_hash;
  return res;
}


// One forward pass scoring both heads.
template <typename T>
std::pair<double, double> evaluate_sim2_both(const nn::Sim2Model<T>& model,
                                             const std::vector<sim2::Scene>& scenes,
                                             bool with_binding, Rng& rng, int batch_size) {
  int64_t main_correct = 0, vars_correct = 0;
  for (size_t begin = 0; begin < scenes.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(scenes.size(), begin + static_cast<size_t>(batch_size));
    auto batch = detail::assemble_sim2<T>(scenes, begin, end, true, with_binding, rng);
    Tape<T> tape;
    auto images = tape.constant(std::move(batch.images));
    auto tokens = tape.constant(std::move(batch.tokens));
    auto heads = model.forward(tape, images, tokens);
    const Tensor<T>& probs = tape.value(tape.softmax(heads.main_logits));
    const Tensor<T>& out = tape.value(tape.activation(*heads.vars_logits, Act::Sigmoid));
    for (int64_t r = 0; r < static_cast<int64_t>(end - begin); ++r) {
      main_correct += detail::argmax_row(probs.data() + r * 3, 3) ==
                      scenes[begin + static_cast<size_t>(r)].odd;
      vars_correct += vars::topn_match(out.data() + r * sim2::kVarsWidth, sim2::kVarsWidth,
                                       batch.vars_targets.data() + r * sim2::kVarsWidth,
                                       sim2::kVarsWidth);
    }
  }
  return {static_cast<double>(main_correct) / static_cast<double>(scenes.size()),
          static_cast<double>(vars_correct) / static_cast<double>(scenes.size())};
}

template <typename T>
RunResult train_sim2(const RunConfig& cfg, bool verbose) {
  RunResult res;
  res.seed = cfg.seed;
  Rng rng(cfg.seed);

  const bool with_tokens = cfg.condition != Condition::Plain;
  const bool with_binding = cfg.condition == Condition::Vars;
  auto split = sim2::split();

  nn::Sim2Model<T> model;
  nn::Sim2Config mc;
  mc.with_vars = with_tokens;
  mc.channels[0] = cfg.conv_channels[0];
  mc.channels[1] = cfg.conv_channels[1];
  mc.channels[2] = cfg.conv_channels[2];
  mc.fc1 = cfg.fc1;
  mc.fc2 = cfg.fc2;
  model.init(mc, rng);
  auto params = model.params();
  nn::RmspropState<T> opt;
  opt.init(params, {.lr = static_cast<T>(cfg.learning_rate)});

  const auto train_eval_set = eval_subset(split.train, cfg.eval_train_sample, rng);

  const int B = cfg.batch_size;
  uint64_t stream_hash = io::fnv1a_init();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      Tensor<T> images({B, sim2::kImage, sim2::kImage, 3});
      Tensor<T> tokens;
      Tensor<T> vars_targets;
      Tensor<T> main_targets({B, sim2::kNumPositions});
      if (with_tokens) {
        tokens = Tensor<T>({B, sim2::kNumSymbols});
        vars_targets = Tensor<T>({B, sim2::kVarsWidth});
      }
      for (int i = 0; i < B; ++i) {
        const int idx = rng.below(static_cast<int>(split.train.size()));
        const sim2::Scene& scene = split.train[static_cast<size_t>(idx)];
        stream_hash = io::fnv1a_mix(stream_hash, static_cast<uint64_t>(idx));
        sim2::render_into(scene, images.data() + static_cast<int64_t>(i) * sim2::kImage * sim2::kImage * 3);
        sim2::main_target_into(scene, main_targets.data() + static_cast<int64_t>(i) * sim2::kNumPositions);
        if (with_tokens) {
          std::array<int, sim2::kNumSymbols> tok;
          auto perm = rng.permutation(sim2::kNumSlots);
          std::copy(perm.begin(), perm.end(), tok.begin());
          for (int x : tok) stream_hash = io::fnv1a_mix(stream_hash, static_cast<uint64_t>(x));
          sim2::token_input_into(tok, tokens.data() + static_cast<int64_t>(i) * sim2::kNumSymbols);
          sim2::vars_target_into(scene, tok, with_binding,
                                 vars_targets.data() + static_cast<int64_t>(i) * sim2::kVarsWidth);
        }
      }
      res.presentations += B;

      Tape<T> tape;
      auto image_id = tape.constant(std::move(images));
      std::optional<typename Tape<T>::NodeId> token_id;
      if (with_tokens) token_id = tape.constant(std::move(tokens));
      auto heads = model.forward(tape, image_id, token_id);
      auto loss = tape.softmax_cross_entropy(heads.main_logits, tape.constant(std::move(main_targets)));
      if (with_tokens) {
        loss = tape.add(loss, tape.sigmoid_binary_cross_entropy(
                                  *heads.vars_logits, tape.constant(std::move(vars_targets))));
      }
      const double loss_value = static_cast<double>(tape.value(loss).item());
      if (!std::isfinite(loss_value)) {
        res.failed = true;
        res.fail_reason = "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                          std::to_string(b) + " (" + std::to_string(loss_value) + ")";
        res.epochs_trained = epoch;
        res.train_stream_hash = stream_hash;
        return res;
      }
      tape.backward(loss);
      rmsprop_step(opt, params, collect_grads(tape, params));
    }

    const bool last_epoch = epoch + 1 == cfg.max_epochs;
    const double train_acc =
        evaluate_sim2_main(model, last_epoch ? split.train : train_eval_set, rng, B);
    double test_main = 0;
    if (with_tokens) {
      auto [m, v] = evaluate_sim2_both(model, split.test, with_binding, rng, B);
      test_main = m;
      res.test_vars_acc_by_epoch.push_back(v);
    } else {
      test_main = evaluate_sim2_main(model, split.test, rng, B);
    }
    res.train_acc_by_epoch.push_back(train_acc);
    res.test_main_acc_by_epoch.push_back(test_main);
    res.epochs_trained = epoch + 1;
    if (verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::string vars_note =
          with_tokens ? " vars " + std::to_string(res.test_vars_acc_by_epoch.back()) : "";
      std::fprintf(stderr, "[sim2 seed %llu] epoch %d train %.4f test %.4f%s (%.1fs)\n",
                   static_cast<unsigned long long>(cfg.seed), epoch + 1, train_acc, test_main,
                   vars_note.c_str(), secs);
    }
  }

  res.final_main_acc = res.test_main_acc_by_epoch.back();
  if (with_tokens) res.final_vars_acc = res.test_vars_acc_by_epoch.back();
  res.max_main_acc = *std::max_element(res.test_main_acc_by_epoch.begin(),
                                       res.test_main_acc_by_epoch.end());
  res.final_train_acc = res.train_acc_by_epoch.back();
  res.train_stream_hash = stream_hash;
  return res;
}

}  // namespace

RunResult train_run(const RunConfig& config, bool verbose) {
  config.validate();
  if (config.sim == 1) {
    return config.precision == Precision::F32 ? train_sim1<float>(config, verbose)
                                              : train_sim1<double>(config, verbose);
  }
  return config.precision == Precision::F32 ? train_sim2<float>(config, verbose)
                                            : train_sim2<double>(config, verbose);
}

std::vector<RunResult> replicate(const RunConfig& base, const std::vector<uint64_t>& seeds,
                                 int jobs,
                                 const std::function<void(size_t, const RunResult&)>& on_done) {
  base.validate();
  if (seeds.empty()) throw std::invalid_argument("replicate: no seeds");
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));

  std::vector<RunResult> results(seeds.size());
  std::atomic<size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      RunConfig cfg = base;
      cfg.seed = seeds[i];
      RunResult r = train_run(cfg);
      {
        std::lock_guard<std::mutex> lock(done_mutex);
        results[i] = std::move(r);
        if (on_done) on_done(i, results[i]);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace varsnn::exp
