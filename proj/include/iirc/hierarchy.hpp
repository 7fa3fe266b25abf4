#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/io.hpp"

namespace iirc {

/// Raw node as it appears in a hierarchy description. Multiple entries with
/// the same id encode an (invalid) multi-parent node, which validation must
/// be able to report rather than silently collapse.
struct NodeSpec {
  int id = 0;
  std::string name;
  std::optional<int> parent;
};

/// Checks the two-level taxonomy rules. Violations are data, not faults:
/// every broken rule is reported, and an empty list means the nodes are valid.
inline std::vector<std::string> validate_hierarchy(const std::vector<NodeSpec>& nodes) {
  std::vector<std::string> violations;
  std::map<int, const NodeSpec*> by_id;
  std::set<std::string> names;
  for (const auto& n : nodes) {
    auto [it, fresh] = by_id.emplace(n.id, &n);
    if (!fresh) {
      if (it->second->parent != n.parent)
        violations.push_back("class '" + n.name + "' (id " + std::to_string(n.id) +
                             ") has more than one parent");
      else
        violations.push_back("duplicate node id " + std::to_string(n.id));
    }
    if (!names.insert(n.name).second)
      violations.push_back("duplicate class name '" + n.name + "'");
  }
  for (int i = 0; i < static_cast<int>(by_id.size()); ++i)
    if (!by_id.count(i)) {
      violations.push_back("class ids are not contiguous from 0");
      break;
    }
  for (const auto& [id, n] : by_id) {
    if (!n->parent) continue;
    if (*n->parent == id) {
      violations.push_back("class '" + n->name + "' is its own parent");
      continue;
    }
    auto p = by_id.find(*n->parent);
    if (p == by_id.end()) {
      violations.push_back("class '" + n->name + "' has unknown parent id " +
                           std::to_string(*n->parent));
      continue;
    }
    if (p->second->parent)
      violations.push_back("three levels: '" + p->second->name + "' -> '" + n->name +
                           "' but '" + p->second->name + "' already has a parent");
  }
  return violations;
}

/// Two-level class taxonomy. Ids are dense and, in a generated benchmark,
/// ordered by introduction step (earlier class = smaller id).
class Hierarchy {
 public:
  Hierarchy() = default;

  static Hierarchy build(const std::vector<NodeSpec>& nodes) {
    auto violations = validate_hierarchy(nodes);
    if (!violations.empty()) {
      std::string msg = "invalid hierarchy:";
      for (const auto& v : violations) msg += "\n  - " + v;
      throw std::invalid_argument(msg);
    }
    Hierarchy h;
    h.names_.resize(nodes.size());
    h.parents_.resize(nodes.size());
    h.children_.resize(nodes.size());
    for (const auto& n : nodes) {
      h.names_[n.id] = n.name;
      h.parents_[n.id] = n.parent;
    }
    for (const auto& n : nodes)
      if (n.parent) h.children_[*n.parent].push_back(n.id);
    for (auto& c : h.children_) std::sort(c.begin(), c.end());
    return h;
  }

  int size() const { return static_cast<int>(names_.size()); }

  const std::string& name(int id) const {
    check(id);
    return names_[id];
  }

  std::optional<int> parent(int id) const {
    check(id);
    return parents_[id];
  }

  const std::vector<int>& children(int id) const {
    check(id);
    return children_[id];
  }

  bool is_superclass(int id) const { return !children(id).empty(); }
  bool is_leaf(int id) const { return !is_superclass(id); }
  bool is_orphan(int id) const { return is_leaf(id) && !parents_[id]; }

  std::optional<int> id_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  std::set<int> superclass_ids() const {
    std::set<int> s;
    for (int i = 0; i < size(); ++i)
      if (is_superclass(i)) s.insert(i);
    return s;
  }

  std::vector<int> leaf_ids() const {
    std::vector<int> v;
    for (int i = 0; i < size(); ++i)
      if (is_leaf(i)) v.push_back(i);
    return v;
  }

  json to_json() const {
    json nodes = json::array();
    for (int i = 0; i < size(); ++i) {
      json n;
      n["id"] = i;
      n["name"] = names_[i];
      if (parents_[i])
        n["parent"] = *parents_[i];
      else
        n["parent"] = nullptr;
      nodes.push_back(n);
    }
    return json{{"nodes", nodes}};
  }

  static Hierarchy from_json(const json& j) {
    std::vector<NodeSpec> specs;
    for (const auto& n : j.at("nodes")) {
      NodeSpec s;
      s.id = n.at("id").get<int>();
      s.name = n.at("name").get<std::string>();
      if (!n.at("parent").is_null()) s.parent = n.at("parent").get<int>();
      specs.push_back(std::move(s));
    }
    return build(specs);
  }

  bool operator==(const Hierarchy& o) const {
    return names_ == o.names_ && parents_ == o.parents_;
  }

 private:
  void check(int id) const {
    if (id < 0 || id >= size())
      throw std::out_of_range("unknown class id " + std::to_string(id));
  }

  std::vector<std::string> names_;
  std::vector<std::optional<int>> parents_;
  std::vector<std::vector<int>> children_;
};

/// All labels a sample with the given leaf class can carry: the leaf plus its
/// parent when one exists.
inline std::set<int> full_labels(const Hierarchy& h, int leaf) {
  std::set<int> labels{leaf};
  if (auto p = h.parent(leaf)) labels.insert(*p);
  h.name(leaf);  // bounds check with a friendly error
  return labels;
}

/// Ground truth at test time: all correct labels among the classes seen so
/// far. Never empty when the leaf itself has been seen.
inline std::set<int> eval_truth(const Hierarchy& h, int leaf, const std::set<int>& seen) {
  std::set<int> out;
  for (int c : full_labels(h, leaf))
    if (seen.count(c)) out.insert(c);
  return out;
}

struct ScheduledClass {
  int class_id = 0;
  int budget = 0;
  bool operator==(const ScheduledClass&) const = default;
};

/// Ordered incremental steps; each step lists the classes it introduces with
/// their training-sample budgets.
struct TaskSchedule {
  std::vector<std::vector<ScheduledClass>> steps;

  int step_count() const { return static_cast<int>(steps.size()); }

  /// Number of classes introduced through step t inclusive.
  int n_through(int t) const {
    int n = 0;
    for (int s = 0; s <= t; ++s) n += static_cast<int>(steps.at(s).size());
    return n;
  }

  int n0() const { return static_cast<int>(steps.at(0).size()); }

  int total_classes() const { return n_through(step_count() - 1); }

  int step_of(int class_id) const {
    for (int s = 0; s < step_count(); ++s)
      for (const auto& sc : steps[s])
        if (sc.class_id == class_id) return s;
    throw std::out_of_range("class " + std::to_string(class_id) + " not in schedule");
  }

  int budget_of(int class_id) const {
    for (const auto& step : steps)
      for (const auto& sc : step)
        if (sc.class_id == class_id) return sc.budget;
    throw std::out_of_range("class " + std::to_string(class_id) + " not in schedule");
  }

  std::set<int> seen_through(int t) const {
    std::set<int> seen;
    for (int s = 0; s <= t && s < step_count(); ++s)
      for (const auto& sc : steps[s]) seen.insert(sc.class_id);
    return seen;
  }

  json to_json() const {
    json out = json::array();
    for (const auto& step : steps) {
      json js = json::array();
      for (const auto& sc : step) js.push_back(json{{"class", sc.class_id}, {"budget", sc.budget}});
      out.push_back(js);
    }
    return json{{"steps", out}};
  }

  static TaskSchedule from_json(const json& j) {
    TaskSchedule sched;
    for (const auto& js : j.at("steps")) {
      std::vector<ScheduledClass> step;
      for (const auto& sc : js)
        step.push_back({sc.at("class").get<int>(), sc.at("budget").get<int>()});
      sched.steps.push_back(std::move(step));
    }
    return sched;
  }

  bool operator==(const TaskSchedule&) const = default;
};

/// Schedule-level invariants, checkable against an arbitrary hierarchy.
inline std::vector<std::string> validate_schedule(const Hierarchy& h, const TaskSchedule& s) {
  std::vector<std::string> violations;
  std::map<int, int> step_of;
  for (int t = 0; t < s.step_count(); ++t)
    for (const auto& sc : s.steps[t])
      if (!step_of.emplace(sc.class_id, t).second)
        violations.push_back("class " + std::to_string(sc.class_id) + " appears in two steps");
  if (static_cast<int>(step_of.size()) != h.size())
    violations.push_back("schedule does not cover every class exactly once");
  for (int c = 0; c < h.size(); ++c) {
    auto p = h.parent(c);
    if (!p || !step_of.count(c) || !step_of.count(*p)) continue;
    if (step_of[*p] >= step_of[c])
      violations.push_back("superclass '" + h.name(*p) + "' not introduced before '" +
                           h.name(c) + "'");
    if (s.budget_of(*p) <= s.budget_of(c))
      violations.push_back("superclass '" + h.name(*p) + "' budget not above subclass '" +
                           h.name(c) + "'");
  }
  bool ordered = true;
  for (const auto& [c, t] : step_of)
    for (const auto& [c2, t2] : step_of)
      if (c < c2 && t > t2) ordered = false;
  if (!ordered) violations.push_back("class ids are not ordered by introduction step");
  return violations;
}

struct ScheduleConfig {
  int steps = 7;
  int classes_per_step = 2;  // steps 1..T; step 0 takes the remainder
  int super_budget = 150;
  int sub_budget = 100;
  int orphan_budget = 100;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
    if (steps > 1 && classes_per_step < 1)
      throw std::invalid_argument("classes_per_step must be >= 1");
    if (super_budget <= 0 || sub_budget <= 0 || orphan_budget <= 0)
      throw std::invalid_argument("budgets must be positive");
    if (super_budget <= sub_budget)
      throw std::invalid_argument("superclass budget must exceed subclass budget");
  }
};

/// A hierarchy together with its schedule, ids relabeled canonically so that
/// earlier-introduced classes have smaller ids.
struct Benchmark {
  Hierarchy hierarchy;
  TaskSchedule schedule;
};

/// Lays classes out into steps: superclasses greedily into the earliest free
/// slots, then the remaining classes most-constrained first, each placed
/// uniformly at random among its legal slots (strictly after its parent).
/// Ids are reassigned in introduction order.
inline Benchmark build_schedule(const Hierarchy& h, const ScheduleConfig& cfg,
                                std::mt19937_64& rng) {
  cfg.validate();
  const int total = h.size();
  const int n0 = total - (cfg.steps - 1) * cfg.classes_per_step;
  if (n0 < 1)
    throw std::invalid_argument("infeasible layout: step 0 would hold " + std::to_string(n0) +
                                " classes");

  std::vector<int> capacity(cfg.steps, cfg.classes_per_step);
  capacity[0] = n0;

  std::vector<int> supers, rest;
  for (int c = 0; c < total; ++c) (h.is_superclass(c) ? supers : rest).push_back(c);

  std::shuffle(supers.begin(), supers.end(), rng);
  std::shuffle(rest.begin(), rest.end(), rng);

  std::vector<std::vector<int>> placed(cfg.steps);
  std::vector<int> step_of(total, -1);

  int cursor = 0;
  for (int c : supers) {
    while (cursor < cfg.steps && static_cast<int>(placed[cursor].size()) == capacity[cursor])
      ++cursor;
    if (cursor == cfg.steps)
      throw std::invalid_argument("infeasible layout: no slot left for superclass '" +
                                  h.name(c) + "'");
    placed[cursor].push_back(c);
    step_of[c] = cursor;
  }

  // Most-constrained first: subclasses of late superclasses before the rest,
  // orphans last. Ties keep the shuffled order.
  auto constraint = [&](int c) {
    auto p = h.parent(c);
    return p ? step_of[*p] : -1;
  };
  std::stable_sort(rest.begin(), rest.end(),
                   [&](int a, int b) { return constraint(a) > constraint(b); });

  for (int c : rest) {
    const int min_step = constraint(c) + 1;
    std::vector<int> slots;  // one entry per free slot
    for (int s = min_step; s < cfg.steps; ++s)
      for (int k = static_cast<int>(placed[s].size()); k < capacity[s]; ++k) slots.push_back(s);
    if (slots.empty())
      throw std::invalid_argument("infeasible layout: no legal slot for class '" + h.name(c) +
                                  "'");
    std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
    const int s = slots[pick(rng)];
    placed[s].push_back(c);
    step_of[c] = s;
  }

  // Relabel in introduction order.
  std::vector<int> new_id(total, -1);
  int next = 0;
  for (const auto& step : placed)
    for (int c : step) new_id[c] = next++;

  std::vector<NodeSpec> specs(total);
  for (int c = 0; c < total; ++c) {
    NodeSpec n;
    n.id = new_id[c];
    n.name = h.name(c);
    if (auto p = h.parent(c)) n.parent = new_id[*p];
    specs[new_id[c]] = std::move(n);
  }

  Benchmark bench;
  bench.hierarchy = Hierarchy::build(specs);
  bench.schedule.steps.resize(cfg.steps);
  for (int s = 0; s < cfg.steps; ++s)
    for (int c : placed[s]) {
      int budget = h.is_superclass(c) ? cfg.super_budget
                 : h.is_orphan(c)     ? cfg.orphan_budget
                                      : cfg.sub_budget;
      bench.schedule.steps[s].push_back({new_id[c], budget});
    }
  return bench;
}

/// The single label a sample is presented under while training at this step:
/// the step class matching the sample's leaf or the leaf's parent.
inline int training_label(const TaskSchedule& schedule, int step, const Hierarchy& h,
                          int leaf) {
  const auto& classes = schedule.steps.at(step);
  auto parent = h.parent(leaf);
  for (const auto& sc : classes) {
    if (sc.class_id == leaf) return leaf;
    if (parent && sc.class_id == *parent) return *parent;
  }
  throw std::invalid_argument("class '" + h.name(leaf) + "' is not trained at step " +
                              std::to_string(step));
}

}  // namespace iirc
