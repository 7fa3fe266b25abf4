#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/datagen.hpp"
#include "iirc/evaluation.hpp"
#include "iirc/hierarchy.hpp"
#include "iirc/io.hpp"
#include "iirc/losses.hpp"
#include "iirc/net.hpp"
#include "iirc/rehearsal.hpp"
#include "iirc/rng.hpp"

namespace iirc {

enum class Method { finetune, baseline_kd, mtkd };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::finetune: return "finetune";
    case Method::baseline_kd: return "baseline-kd";
    case Method::mtkd: return "mtkd";
  }
  throw std::logic_error("unreachable");
}

inline Method method_from_string(const std::string& s) {
  if (s == "finetune") return Method::finetune;
  if (s == "baseline-kd") return Method::baseline_kd;
  if (s == "mtkd") return Method::mtkd;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct TrainConfig {
  Method method = Method::mtkd;
  int epochs = 100;
  int batch_size = 32;
  double lr = 0.1;  // the de-facto stable rate for this net; 1.0 diverges here
  int patience = 10;
  double decay = 0.1;
  LossWeights weights;  // λ = μ = 0.5, T = 2
  SelectionStrategy selection = SelectionStrategy::herding;
  bool normalize_features = false;
  int buffer_budget = 20;
  PredictionMode mode = PredictionMode::threshold;
  int k = 2;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (patience < 1) throw std::invalid_argument("patience must be at least 1");
    if (decay <= 0.0 || decay >= 1.0) throw std::invalid_argument("decay must be in (0,1)");
    if (buffer_budget < 1) throw std::invalid_argument("exemplar budget must be positive");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    weights.validate();
  }

  json to_json() const {
    return json{{"method", to_string(method)},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lr", lr},
                {"patience", patience},
                {"decay", decay},
                {"lambda", weights.lambda},
                {"mu", weights.mu},
                {"temperature", weights.temperature},
                {"selection", to_string(selection)},
                {"normalize_features", normalize_features},
                {"buffer_budget", buffer_budget},
                {"mode", to_string(mode)},
                {"k", k},
                {"hidden", hidden},
                {"seed", seed}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.patience = j.at("patience").get<int>();
    c.decay = j.at("decay").get<double>();
    c.weights.lambda = j.at("lambda").get<double>();
    c.weights.mu = j.at("mu").get<double>();
    c.weights.temperature = j.at("temperature").get<double>();
    c.selection = selection_from_string(j.at("selection").get<std::string>());
    c.normalize_features = j.at("normalize_features").get<bool>();
    c.buffer_budget = j.at("buffer_budget").get<int>();
    c.mode = prediction_mode_from_string(j.at("mode").get<std::string>());
    c.k = j.at("k").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

struct LossBreakdown {
  double total = 0.0;
  double bce = 0.0;
  double distill = 0.0;

  json to_json() const {
    return json{{"total", total}, {"bce", bce}, {"distill", distill}};
  }
  static LossBreakdown from_json(const json& j) {
    return {j.at("total").get<double>(), j.at("bce").get<double>(),
            j.at("distill").get<double>()};
  }
  bool operator==(const LossBreakdown&) const = default;
};

/// Everything recorded for one completed incremental step.
struct StepRecord {
  int step = 0;
  int classes_seen = 0;
  int epochs_run = 0;
  double final_lr = 0.0;
  LossBreakdown final_loss;  // mean over the last epoch
  MetricReport report;

  json to_json() const {
    return json{{"step", step},
                {"classes_seen", classes_seen},
                {"epochs_run", epochs_run},
                {"final_lr", final_lr},
                {"final_loss", final_loss.to_json()},
                {"report", report.to_json()}};
  }
  static StepRecord from_json(const json& j) {
    StepRecord r;
    r.step = j.at("step").get<int>();
    r.classes_seen = j.at("classes_seen").get<int>();
    r.epochs_run = j.at("epochs_run").get<int>();
    r.final_lr = j.at("final_lr").get<double>();
    r.final_loss = LossBreakdown::from_json(j.at("final_loss"));
    r.report = MetricReport::from_json(j.at("report"));
    return r;
  }
  bool operator==(const StepRecord&) const = default;
};

struct RunLog {
  json config;  // echo of the TrainConfig
  bool complete = false;
  std::vector<StepRecord> entries;

  json to_json() const {
    json steps = json::array();
    for (const auto& e : entries) steps.push_back(e.to_json());
    return json{{"config", config}, {"complete", complete}, {"entries", steps}};
  }
  static RunLog from_json(const json& j) {
    RunLog log;
    log.config = j.at("config");
    log.complete = j.at("complete").get<bool>();
    for (const auto& je : j.at("entries")) log.entries.push_back(StepRecord::from_json(je));
    return log;
  }
  bool operator==(const RunLog&) const = default;
};

/// Thrown when training hits a non-finite loss or gradient. Carries the
/// progress made so far so callers can persist a partial log.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int step, int epoch, const std::string& what, RunLog partial)
      : std::runtime_error("step " + std::to_string(step) + ", epoch " +
                           std::to_string(epoch) + ": " + what),
        step_(step),
        epoch_(epoch),
        partial_(std::move(partial)) {}

  int step() const { return step_; }
  int epoch() const { return epoch_; }
  const RunLog& partial_log() const { return partial_; }

 private:
  int step_;
  int epoch_;
  RunLog partial_;
};

/// Mutable state between steps; checkpoints serialize exactly this. All
/// randomness is re-derived per step from (seed, substream, step), so a
/// state resumed at a step boundary replays the identical run.
struct RunState {
  int next_step = 0;
  Net net;
  std::optional<Snapshot> super_teacher;  // frozen after the initial step, forever
  ExemplarStore store;
  RunLog log;
};

using StepCallback = std::function<void(const RunState&, int step)>;

namespace detail {

struct EpochOutcome {
  LossBreakdown final_loss;
  double final_lr = 0.0;
  int epochs_run = 0;
};

/// Per-sample objective: fills grad (d/dlogits) and returns the breakdown.
using SampleLoss = std::function<LossBreakdown(
    const LabeledExample&, const std::vector<double>& logits, std::vector<double>& grad)>;

/// Epoch loop with reduce-on-plateau: when the epoch-mean loss fails to
/// improve on the best seen by at least 1e-4 for `patience` consecutive
/// epochs, the learning rate is multiplied by `decay` and the stall count
/// restarts. Throws on any non-finite loss or gradient.
inline EpochOutcome train_epochs(Net& net, const std::vector<LabeledExample>& pool,
                                 const SampleLoss& loss, const TrainConfig& cfg,
                                 std::mt19937_64& shuffle_rng, int step,
                                 const RunLog& progress) {
  if (pool.empty()) return {};
  constexpr double kMinImprovement = 1e-4;

  EpochOutcome out;
  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<int> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto grads = net.zero_gradients();
      std::vector<double> dlogits;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledExample& ex = pool[order[i]];
        auto cache = net.forward(ex.features);
        auto breakdown = loss(ex, cache.logits, dlogits);
        if (!std::isfinite(breakdown.total))
          throw TrainingError(step, epoch, "non-finite training loss", progress);
        epoch_sum.total += breakdown.total;
        epoch_sum.bce += breakdown.bce;
        epoch_sum.distill += breakdown.distill;
        net.backward(cache, dlogits, grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      if (!grads.finite())
        throw TrainingError(step, epoch, "non-finite gradient", progress);
      net.sgd_step(grads, lr);
    }

    const double n = static_cast<double>(pool.size());
    out.final_loss = {epoch_sum.total / n, epoch_sum.bce / n, epoch_sum.distill / n};
    out.final_lr = lr;
    out.epochs_run = epoch + 1;

    if (out.final_loss.total < best - kMinImprovement) {
      best = out.final_loss.total;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      lr *= cfg.decay;
      stall = 0;
    }
  }
  return out;
}

inline std::vector<double> one_hot(int label, int classes) {
  std::vector<double> y(classes, 0.0);
  y.at(label) = 1.0;
  return y;
}

}  // namespace detail

/// Runs incremental steps [state.next_step, end) in place. The general
/// teacher is re-frozen from the live net at the top of every step t >= 1
/// (before output expansion); the superclass teacher is frozen once, at the
/// top of step 1 — so a single-step schedule never creates a teacher.
inline RunLog advance_run(RunState& state, const Dataset& ds, const TaskSchedule& schedule,
                          const TrainConfig& cfg, const StepCallback& on_step = {}) {
  cfg.validate();
  {
    auto violations = validate_schedule(ds.hierarchy, schedule);
    if (!violations.empty())
      throw std::invalid_argument("invalid schedule: " + violations.front());
  }

  for (int t = state.next_step; t < schedule.step_count(); ++t) {
    const int new_classes = static_cast<int>(schedule.steps[t].size());
    const int n_seen = schedule.n_through(t);
    const int n_old = n_seen - new_classes;
    const int n0 = schedule.n0();

    std::optional<Snapshot> general;
    if (t == 0) {
      auto init_rng = make_engine(cfg.seed, "init", 0);
      state.net = Net(ds.dim, cfg.hidden, new_classes, init_rng);
    } else {
      general.emplace(state.net, t - 1);
      if (t == 1) state.super_teacher.emplace(state.net, 0);
      auto init_rng = make_engine(cfg.seed, "init", static_cast<std::uint64_t>(t));
      state.net.expand_outputs(new_classes, init_rng);
    }

    const auto fresh = split_for_step(ds, schedule, t);
    auto pool = fresh;
    {
      auto rehearsal = state.store.rehearsal_pool();
      pool.insert(pool.end(), rehearsal.begin(), rehearsal.end());
    }

    const bool distilling = t > 0 && cfg.method != Method::finetune;
    detail::SampleLoss sample_loss = [&](const LabeledExample& ex,
                                         const std::vector<double>& logits,
                                         std::vector<double>& grad) -> LossBreakdown {
      auto y = detail::one_hot(ex.label, n_seen);
      if (!distilling) {
        auto r = bce(logits, y);
        grad = std::move(r.grad);
        return {r.loss, r.loss, 0.0};
      }
      if (cfg.method == Method::baseline_kd) {
        auto b = bce(logits, y);
        auto teacher = general->scores(ex.features);
        std::vector<double> old_slice(logits.begin(), logits.begin() + n_old);
        auto kd = sigmoid_kd(old_slice, teacher);
        grad = std::move(b.grad);
        for (int i = 0; i < n_old; ++i) grad[i] += cfg.weights.lambda * kd.grad[i];
        const double distill = cfg.weights.lambda * kd.loss;
        return {b.loss + distill, b.loss, distill};
      }
      auto general_scores = general->scores(ex.features);
      auto super_scores = state.super_teacher->scores(ex.features);
      auto r = mtkd_loss(logits, y, &general_scores, &super_scores, n0, n_old, cfg.weights);
      grad = std::move(r.grad);
      return {r.total, r.bce,
              cfg.weights.lambda * r.general_kd + cfg.weights.mu * r.super_kd};
    };

    auto shuffle_rng = make_engine(cfg.seed, "shuffle", static_cast<std::uint64_t>(t));
    auto outcome =
        detail::train_epochs(state.net, pool, sample_loss, cfg, shuffle_rng, t, state.log);

    auto selection_rng = make_engine(cfg.seed, "selection", static_cast<std::uint64_t>(t));
    ingest(state.store, schedule.steps[t], fresh, cfg.selection, state.net,
           cfg.normalize_features, selection_rng);

    StepRecord record;
    record.step = t;
    record.classes_seen = n_seen;
    record.epochs_run = outcome.epochs_run;
    record.final_lr = outcome.final_lr;
    record.final_loss = outcome.final_loss;
    record.report = evaluate(state.net, ds, schedule, n_seen, cfg.mode, cfg.k);
    state.log.entries.push_back(std::move(record));
    state.next_step = t + 1;

    if (on_step) on_step(state, t);
  }
  state.log.complete = true;
  return state.log;
}

inline RunLog run_incremental(const Dataset& ds, const TaskSchedule& schedule,
                              const TrainConfig& cfg, const StepCallback& on_step = {}) {
  RunState state;
  state.store = ExemplarStore(cfg.buffer_budget);
  state.log.config = cfg.to_json();
  return advance_run(state, ds, schedule, cfg, on_step);
}

inline void write_checkpoint(const std::string& path, const RunState& state) {
  if (state.next_step < 1)
    throw std::invalid_argument("nothing to checkpoint before the first step completes");
  json j{{"next_step", state.next_step},
         {"net", state.net.to_json()},
         {"super_teacher",
          state.super_teacher ? state.super_teacher->to_json() : json(nullptr)},
         {"store", state.store.to_json()},
         {"log", state.log.to_json()}};
  write_json_file(path, j);
}

inline RunState resume_checkpoint(const std::string& path) {
  json j = read_json_file(path);
  RunState state;
  try {
    state.next_step = j.at("next_step").get<int>();
    state.net = Net::from_json(j.at("net"));
    if (!j.at("super_teacher").is_null())
      state.super_teacher = Snapshot::from_json(j.at("super_teacher"));
    state.store = ExemplarStore::from_json(j.at("store"));
    state.log = RunLog::from_json(j.at("log"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  return state;
}

/// Continues a checkpointed run. The config must match the one the
/// checkpoint was created under — resuming under different settings would
/// silently produce a run that matches neither.
inline RunLog resume_incremental(RunState state, const Dataset& ds,
                                 const TaskSchedule& schedule, const TrainConfig& cfg,
                                 const StepCallback& on_step = {}) {
  if (state.log.config != cfg.to_json())
    throw std::invalid_argument("checkpoint was created under a different config");
  return advance_run(state, ds, schedule, cfg, on_step);
}

}  // namespace iirc
