#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/datagen.hpp"
#include "iirc/hierarchy.hpp"
#include "iirc/io.hpp"
#include "iirc/net.hpp"

namespace iirc {

enum class PredictionMode { threshold, topk };

inline std::string to_string(PredictionMode m) {
  return m == PredictionMode::threshold ? "threshold" : "topk";
}

inline PredictionMode prediction_mode_from_string(const std::string& s) {
  if (s == "threshold") return PredictionMode::threshold;
  if (s == "topk") return PredictionMode::topk;
  throw std::invalid_argument("unknown prediction mode '" + s + "'");
}

/// Classes whose score strictly exceeds the threshold. A score exactly at
/// the threshold stays off.
inline std::set<int> activate(const std::vector<double>& scores, double threshold = 0.5) {
  std::set<int> on;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > threshold) on.insert(static_cast<int>(i));
  return on;
}

/// Keep only the k highest scores (ties resolved toward the lower class
/// index), then threshold. At most k classes come back.
inline std::set<int> topk_activate(const std::vector<double>& scores, int k,
                                   double threshold = 0.5) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::set<int> on;
  for (std::size_t r = 0; r < order.size() && r < static_cast<std::size_t>(k); ++r)
    if (scores[order[r]] > threshold) on.insert(order[r]);
  return on;
}

/// Jaccard overlap of truth and prediction, additionally scaled by the
/// prediction's precision: (|Y∩Ŷ|/|Y∪Ŷ|)·(|Y∩Ŷ|/|Ŷ|). An empty prediction
/// scores 0; an empty truth set is a caller bug.
inline double pw_js_sample(const std::set<int>& truth, const std::set<int>& predicted) {
  if (truth.empty()) throw std::invalid_argument("truth label set must not be empty");
  if (predicted.empty()) return 0.0;
  std::vector<int> inter;
  std::set_intersection(truth.begin(), truth.end(), predicted.begin(), predicted.end(),
                        std::back_inserter(inter));
  const double i = static_cast<double>(inter.size());
  const double u = static_cast<double>(truth.size() + predicted.size() - inter.size());
  const double p = static_cast<double>(predicted.size());
  return (i / u) * (i / p);
}

struct Prediction {
  int sample_index = 0;
  std::set<int> activated;
  std::vector<double> scores;
};

inline Prediction predict(const Net& net, const std::vector<double>& x, int n_seen,
                          PredictionMode mode, int k) {
  if (n_seen < 1 || n_seen > net.output_count())
    throw std::invalid_argument("seen class count must be within the net's outputs");
  auto all = net.scores(x);
  Prediction p;
  p.scores.assign(all.begin(), all.begin() + n_seen);
  p.activated = mode == PredictionMode::topk ? topk_activate(p.scores, k)
                                             : activate(p.scores);
  return p;
}

/// Everything the experiment logs per step. Per-introduction-step values sit
/// at their step index; steps without evaluated samples hold 0 with a 0
/// sample count. The confusion matrix is square over all class ids — row =
/// the sample's leaf class, column = an activated class.
struct MetricReport {
  double pw_js = 0.0;
  std::vector<double> pw_js_per_step;
  std::vector<int> samples_per_step;
  double superclass_pw_js = 0.0;
  int superclass_samples = 0;
  double mean_predictions_per_image = 0.0;
  double superclass_activation_rate = 0.0;
  int n_eval_samples = 0;
  std::vector<std::vector<int>> confusion;

  json to_json() const {
    return json{{"pw_js", pw_js},
                {"pw_js_per_step", pw_js_per_step},
                {"samples_per_step", samples_per_step},
                {"superclass_pw_js", superclass_pw_js},
                {"superclass_samples", superclass_samples},
                {"mean_predictions_per_image", mean_predictions_per_image},
                {"superclass_activation_rate", superclass_activation_rate},
                {"n_eval_samples", n_eval_samples},
                {"confusion", confusion}};
  }

  static MetricReport from_json(const json& j) {
    MetricReport r;
    r.pw_js = j.at("pw_js").get<double>();
    r.pw_js_per_step = j.at("pw_js_per_step").get<std::vector<double>>();
    r.samples_per_step = j.at("samples_per_step").get<std::vector<int>>();
    r.superclass_pw_js = j.at("superclass_pw_js").get<double>();
    r.superclass_samples = j.at("superclass_samples").get<int>();
    r.mean_predictions_per_image = j.at("mean_predictions_per_image").get<double>();
    r.superclass_activation_rate = j.at("superclass_activation_rate").get<double>();
    r.n_eval_samples = j.at("n_eval_samples").get<int>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<int>>>();
    return r;
  }

  bool operator==(const MetricReport&) const = default;
};

/// Scores every test sample whose truth is non-empty under the first n_seen
/// classes. A sample joins the per-step group of its finest seen true label
/// (the label introduced last). Superclass metrics restrict both sets to
/// superclasses and skip samples with no superclass truth.
inline MetricReport evaluate(const Net& net, const Dataset& ds, const TaskSchedule& schedule,
                             int n_seen, PredictionMode mode, int k = 2) {
  const Hierarchy& h = ds.hierarchy;
  if (n_seen < 1 || n_seen > h.size())
    throw std::invalid_argument("seen class count out of range");

  std::set<int> seen;
  for (int c = 0; c < n_seen; ++c) seen.insert(c);
  const auto supers = h.superclass_ids();

  MetricReport r;
  r.pw_js_per_step.assign(schedule.step_count(), 0.0);
  r.samples_per_step.assign(schedule.step_count(), 0);
  r.confusion.assign(h.size(), std::vector<int>(h.size(), 0));

  double js_sum = 0.0, super_sum = 0.0, pred_count_sum = 0.0;
  std::vector<double> step_sum(schedule.step_count(), 0.0);
  int super_hits = 0;

  for (const auto& s : ds.samples) {
    if (s.split != Split::test) continue;
    const auto truth = eval_truth(h, s.leaf, seen);
    if (truth.empty()) continue;

    auto pred = predict(net, s.features, n_seen, mode, k);
    const double v = pw_js_sample(truth, pred.activated);

    js_sum += v;
    r.n_eval_samples += 1;
    pred_count_sum += static_cast<double>(pred.activated.size());

    int finest_step = 0;
    for (int label : truth) finest_step = std::max(finest_step, schedule.step_of(label));
    step_sum[finest_step] += v;
    r.samples_per_step[finest_step] += 1;

    std::set<int> super_truth, super_pred;
    std::set_intersection(truth.begin(), truth.end(), supers.begin(), supers.end(),
                          std::inserter(super_truth, super_truth.end()));
    std::set_intersection(pred.activated.begin(), pred.activated.end(), supers.begin(),
                          supers.end(), std::inserter(super_pred, super_pred.end()));
    if (!super_truth.empty()) {
      super_sum += pw_js_sample(super_truth, super_pred);
      r.superclass_samples += 1;
    }
    if (!super_pred.empty()) super_hits += 1;

    for (int c : pred.activated) r.confusion[s.leaf][c] += 1;
  }

  if (r.n_eval_samples > 0) {
    r.pw_js = js_sum / r.n_eval_samples;
    r.mean_predictions_per_image = pred_count_sum / r.n_eval_samples;
    r.superclass_activation_rate = static_cast<double>(super_hits) / r.n_eval_samples;
  }
  for (int t = 0; t < schedule.step_count(); ++t)
    if (r.samples_per_step[t] > 0) r.pw_js_per_step[t] = step_sum[t] / r.samples_per_step[t];
  if (r.superclass_samples > 0) r.superclass_pw_js = super_sum / r.superclass_samples;
  return r;
}

/// Confusion matrix as CSV: header row of class names, one row per leaf
/// class (row label first).
inline std::string confusion_csv(const MetricReport& r, const Hierarchy& h) {
  std::string out = "true_leaf";
  for (int c = 0; c < h.size(); ++c) out += "," + h.name(c);
  out += "\n";
  for (int leaf : h.leaf_ids()) {
    out += h.name(leaf);
    for (int c = 0; c < h.size(); ++c) out += "," + std::to_string(r.confusion[leaf][c]);
    out += "\n";
  }
  return out;
}

}  // namespace iirc
