#pragma once

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/hierarchy.hpp"
#include "iirc/io.hpp"
#include "iirc/rng.hpp"

namespace iirc {

enum class Split { train, test };

/// One observation. The stored class is always leaf-level; the label a
/// trainer sees is derived (training_label), and the labels an evaluator
/// scores against are derived too (eval_truth).
struct Sample {
  std::vector<double> features;
  int leaf = 0;
  Split split = Split::train;

  bool operator==(const Sample&) const = default;
};

struct GenConfig {
  int dim = 16;
  double mean_spread = 3.0;  // stddev of cluster-mean placement
  double stddev = 1.0;       // within-cluster stddev
  int test_per_leaf = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw std::invalid_argument("feature dimension must be positive");
    if (mean_spread <= 0.0) throw std::invalid_argument("mean spread must be positive");
    if (stddev < 0.0) throw std::invalid_argument("stddev must be non-negative");
    if (test_per_leaf < 1) throw std::invalid_argument("test count must be positive");
  }
};

/// Immutable collection of samples plus the taxonomy they refer to.
/// Training rows are laid out in schedule order (step, then class within the
/// step), which is what lets split_for_step recover each step's allocation
/// by a plain scan.
struct Dataset {
  Hierarchy hierarchy;
  int dim = 0;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline std::vector<double> draw_point(const std::vector<double>& mean, double stddev,
                                      std::mt19937_64& rng) {
  std::vector<double> x(mean.size());
  if (stddev == 0.0) return mean;
  std::normal_distribution<double> noise(0.0, stddev);
  for (std::size_t i = 0; i < mean.size(); ++i) x[i] = mean[i] + noise(rng);
  return x;
}

}  // namespace detail

/// Draws one Gaussian cluster per leaf class and materializes every step's
/// training budget plus a per-leaf test split. A superclass budget is filled
/// by sampling a child uniformly, then drawing from that child's cluster, so
/// superclass data is literally subclass data.
inline Dataset generate(const Hierarchy& h, const TaskSchedule& schedule,
                        const GenConfig& cfg) {
  cfg.validate();
  for (const auto& step : schedule.steps)
    for (const auto& sc : step)
      if (sc.class_id < 0 || sc.class_id >= h.size())
        throw std::invalid_argument("scheduled class " + std::to_string(sc.class_id) +
                                    " does not exist in the hierarchy");

  auto rng = make_engine(cfg.seed, "data");

  // Cluster means, one per leaf, in id order.
  std::vector<std::vector<double>> means(h.size());
  std::normal_distribution<double> spread(0.0, cfg.mean_spread);
  for (int c = 0; c < h.size(); ++c) {
    if (!h.is_leaf(c)) continue;
    means[c].resize(cfg.dim);
    for (double& m : means[c]) m = spread(rng);
  }

  Dataset ds;
  ds.hierarchy = h;
  ds.dim = cfg.dim;

  for (const auto& step : schedule.steps) {
    for (const auto& sc : step) {
      const int c = sc.class_id;
      if (h.is_superclass(c)) {
        const auto& kids = h.children(c);
        std::uniform_int_distribution<std::size_t> pick(0, kids.size() - 1);
        for (int i = 0; i < sc.budget; ++i) {
          int leaf = kids[pick(rng)];
          ds.samples.push_back({detail::draw_point(means[leaf], cfg.stddev, rng), leaf,
                                Split::train});
        }
      } else {
        for (int i = 0; i < sc.budget; ++i)
          ds.samples.push_back(
              {detail::draw_point(means[c], cfg.stddev, rng), c, Split::train});
      }
    }
  }

  for (int c = 0; c < h.size(); ++c) {
    if (!h.is_leaf(c)) continue;
    for (int i = 0; i < cfg.test_per_leaf; ++i)
      ds.samples.push_back({detail::draw_point(means[c], cfg.stddev, rng), c, Split::test});
  }
  return ds;
}

/// The new-data training pool for one step: (features, single visible label)
/// pairs. Each scheduled class claims its budget of still-unclaimed training
/// rows whose leaf is the class itself or one of its children, scanning in
/// row order; earlier steps claim first so the allocation is unambiguous.
struct LabeledExample {
  std::vector<double> features;
  int label = 0;
};

inline std::vector<LabeledExample> split_for_step(const Dataset& ds,
                                                  const TaskSchedule& schedule, int step) {
  if (step < 0 || step >= schedule.step_count())
    throw std::out_of_range("step " + std::to_string(step) + " out of range");
  const Hierarchy& h = ds.hierarchy;

  std::vector<bool> claimed(ds.samples.size(), false);
  std::vector<LabeledExample> pool;
  for (int t = 0; t <= step; ++t) {
    for (const auto& sc : schedule.steps[t]) {
      int want = sc.budget;
      for (std::size_t i = 0; i < ds.samples.size() && want > 0; ++i) {
        const Sample& s = ds.samples[i];
        if (claimed[i] || s.split != Split::train) continue;
        bool match = s.leaf == sc.class_id ||
                     (h.parent(s.leaf) && *h.parent(s.leaf) == sc.class_id);
        if (!match) continue;
        claimed[i] = true;
        --want;
        if (t == step) pool.push_back({ds.samples[i].features, sc.class_id});
      }
    }
  }
  return pool;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::string out;
  for (int i = 0; i < ds.dim; ++i) out += "f" + std::to_string(i) + ",";
  out += "leaf,split\n";
  for (const auto& s : ds.samples) {
    for (double f : s.features) out += format_double(f) + ",";
    out += ds.hierarchy.name(s.leaf);
    out += s.split == Split::train ? ",train\n" : ",test\n";
  }
  write_text_file(path, out);
}

inline Dataset load_csv(const std::string& path, const Hierarchy& h) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");

  auto split_fields = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    fields.push_back(cur);
    return fields;
  };

  auto header = split_fields(line);
  if (header.size() < 3 || header[header.size() - 2] != "leaf" || header.back() != "split")
    throw std::runtime_error(path + ": header must be f0,...,leaf,split");
  const int dim = static_cast<int>(header.size()) - 2;
  for (int i = 0; i < dim; ++i)
    if (header[i] != "f" + std::to_string(i))
      throw std::runtime_error(path + ": unexpected feature column '" + header[i] + "'");

  Dataset ds;
  ds.hierarchy = h;
  ds.dim = dim;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    const std::string where = path + " row " + std::to_string(row);
    if (static_cast<int>(fields.size()) != dim + 2)
      throw std::runtime_error(where + ": expected " + std::to_string(dim + 2) +
                               " columns, got " + std::to_string(fields.size()));
    Sample s;
    s.features.resize(dim);
    for (int i = 0; i < dim; ++i) {
      try {
        s.features[i] = parse_double(fields[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
    }
    auto id = h.id_of(fields[dim]);
    if (!id) throw std::runtime_error(where + ": unknown class '" + fields[dim] + "'");
    if (h.is_superclass(*id))
      throw std::runtime_error(where + ": '" + fields[dim] + "' is a superclass; rows must carry leaf classes");
    s.leaf = *id;
    if (fields[dim + 1] == "train")
      s.split = Split::train;
    else if (fields[dim + 1] == "test")
      s.split = Split::test;
    else
      throw std::runtime_error(where + ": split must be 'train' or 'test', got '" +
                               fields[dim + 1] + "'");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace iirc
