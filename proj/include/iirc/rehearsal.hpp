#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/datagen.hpp"
#include "iirc/io.hpp"
#include "iirc/mathutil.hpp"
#include "iirc/net.hpp"

namespace iirc {

enum class SelectionStrategy { herding, random };

inline std::string to_string(SelectionStrategy s) {
  return s == SelectionStrategy::herding ? "herding" : "random";
}

inline SelectionStrategy selection_from_string(const std::string& s) {
  if (s == "herding") return SelectionStrategy::herding;
  if (s == "random") return SelectionStrategy::random;
  throw std::invalid_argument("unknown selection strategy '" + s + "'");
}

/// Greedy prototype selection: repeatedly add the candidate that keeps the
/// running mean of the chosen set closest (L2) to the full candidate mean.
/// Deterministic — exact ties go to the lowest index. Returns picks in
/// greedy order, min(budget, count) of them.
inline std::vector<int> select_herding(const std::vector<std::vector<double>>& features,
                                       int budget, bool normalize = false) {
  if (features.empty()) throw std::invalid_argument("no candidates to select from");
  if (budget < 0) throw std::invalid_argument("budget must be non-negative");
  const int n = static_cast<int>(features.size());
  const std::size_t d = features[0].size();
  for (const auto& f : features)
    if (f.size() != d) throw std::invalid_argument("candidate feature widths differ");

  std::vector<std::vector<double>> feats = features;
  if (normalize) {
    for (auto& f : feats) {
      double norm = l2_norm(f);
      if (norm > 0.0)
        for (double& v : f) v /= norm;
    }
  }

  std::vector<double> mu(d, 0.0);
  for (const auto& f : feats)
    for (std::size_t i = 0; i < d; ++i) mu[i] += f[i];
  for (double& v : mu) v /= n;

  const int want = std::min(budget, n);
  std::vector<int> chosen;
  std::vector<bool> used(n, false);
  std::vector<double> sum(d, 0.0);
  for (int k = 1; k <= want; ++k) {
    int best = -1;
    double best_err = 0.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      double err = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = mu[j] - (sum[j] + feats[i][j]) / k;
        err += diff * diff;
      }
      if (best < 0 || err < best_err) {
        best = i;
        best_err = err;
      }
    }
    used[best] = true;
    chosen.push_back(best);
    for (std::size_t j = 0; j < d; ++j) sum[j] += feats[best][j];
  }
  return chosen;
}

/// Uniform sample of min(budget, n) distinct indices, in draw order.
inline std::vector<int> select_random(int n, int budget, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("no candidates to select from");
  if (budget < 0) throw std::invalid_argument("budget must be non-negative");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(budget, n));
  return idx;
}

/// Bounded per-class rehearsal memory. An exemplar keeps the label it was
/// trained under forever, even after a finer label for the same sample's
/// leaf becomes available — that label is simply the class bucket it sits in.
class ExemplarStore {
 public:
  ExemplarStore() = default;
  explicit ExemplarStore(int budget) : budget_(budget) {
    if (budget < 1) throw std::invalid_argument("exemplar budget must be positive");
  }

  int budget() const { return budget_; }
  bool has_class(int label) const { return store_.count(label) > 0; }
  int class_count() const { return static_cast<int>(store_.size()); }

  int size() const {
    int n = 0;
    for (const auto& [label, xs] : store_) n += static_cast<int>(xs.size());
    return n;
  }

  const std::vector<std::vector<double>>& exemplars(int label) const {
    auto it = store_.find(label);
    if (it == store_.end())
      throw std::out_of_range("no exemplars stored for class " + std::to_string(label));
    return it->second;
  }

  /// Selects and stores exemplars for `label` from the given candidates
  /// (raw inputs). Selection runs in the net's feature space; storage keeps
  /// the raw inputs so they can be replayed as training data. A class that
  /// already has exemplars is left untouched.
  void ingest_class(int label, const std::vector<std::vector<double>>& candidates,
                    SelectionStrategy strategy, const Net& net, bool normalize,
                    std::mt19937_64& rng) {
    if (store_.count(label)) return;
    if (candidates.empty())
      throw std::invalid_argument("no candidates for class " + std::to_string(label));
    std::vector<int> picks;
    if (strategy == SelectionStrategy::herding) {
      std::vector<std::vector<double>> feats;
      feats.reserve(candidates.size());
      for (const auto& x : candidates) feats.push_back(net.features(x));
      picks = select_herding(feats, budget_, normalize);
    } else {
      picks = select_random(static_cast<int>(candidates.size()), budget_, rng);
    }
    auto& bucket = store_[label];
    for (int i : picks) bucket.push_back(candidates[i]);
  }

  /// Flat (input, frozen label) view in ascending class order, insertion
  /// order within a class.
  std::vector<LabeledExample> rehearsal_pool() const {
    std::vector<LabeledExample> pool;
    for (const auto& [label, xs] : store_)
      for (const auto& x : xs) pool.push_back({x, label});
    return pool;
  }

  json to_json() const {
    json classes = json::array();
    for (const auto& [label, xs] : store_)
      classes.push_back(json{{"label", label}, {"exemplars", xs}});
    return json{{"budget", budget_}, {"classes", classes}};
  }

  static ExemplarStore from_json(const json& j) {
    ExemplarStore s(j.at("budget").get<int>());
    for (const auto& jc : j.at("classes")) {
      int label = jc.at("label").get<int>();
      auto& bucket = s.store_[label];
      for (const auto& jx : jc.at("exemplars"))
        bucket.push_back(jx.get<std::vector<double>>());
      if (static_cast<int>(bucket.size()) > s.budget_)
        throw std::runtime_error("stored exemplars exceed the budget for class " +
                                 std::to_string(label));
    }
    return s;
  }

  bool operator==(const ExemplarStore&) const = default;

 private:
  int budget_ = 20;
  std::map<int, std::vector<std::vector<double>>> store_;
};

/// Post-training ingestion for one step: every class introduced at this step
/// collects exemplars from its slice of the step's new-data pool, labeled
/// with the training-time label (the pool's label).
inline void ingest(ExemplarStore& store, const std::vector<ScheduledClass>& step_classes,
                   const std::vector<LabeledExample>& pool, SelectionStrategy strategy,
                   const Net& net, bool normalize, std::mt19937_64& rng) {
  for (const auto& sc : step_classes) {
    if (store.has_class(sc.class_id)) continue;
    std::vector<std::vector<double>> candidates;
    for (const auto& ex : pool)
      if (ex.label == sc.class_id) candidates.push_back(ex.features);
    store.ingest_class(sc.class_id, candidates, strategy, net, normalize, rng);
  }
}

}  // namespace iirc
