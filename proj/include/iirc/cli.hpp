#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "iirc/datagen.hpp"
#include "iirc/hierarchy.hpp"
#include "iirc/io.hpp"
#include "iirc/trainer.hpp"

namespace iirc {

/// Shape of the synthetic class tree: a row of superclasses with a fixed
/// number of subclasses each, plus standalone orphan leaves.
struct HierarchyShape {
  int superclasses = 4;
  int subclasses_per_super = 2;
  int orphans = 3;

  void validate() const {
    if (superclasses < 0 || orphans < 0)
      throw std::invalid_argument("class counts cannot be negative");
    if (superclasses > 0 && subclasses_per_super < 1)
      throw std::invalid_argument("superclasses need at least one subclass");
    if (superclasses + orphans < 1) throw std::invalid_argument("hierarchy is empty");
  }

  int total() const { return superclasses * (1 + subclasses_per_super) + orphans; }

  json to_json() const {
    return json{{"superclasses", superclasses},
                {"subclasses_per_super", subclasses_per_super},
                {"orphans", orphans}};
  }
};

inline Hierarchy build_hierarchy(const HierarchyShape& shape) {
  shape.validate();
  std::vector<NodeSpec> nodes;
  int id = 0;
  for (int s = 0; s < shape.superclasses; ++s)
    nodes.push_back({id++, "S" + std::to_string(s), std::nullopt});
  for (int s = 0; s < shape.superclasses; ++s)
    for (int c = 0; c < shape.subclasses_per_super; ++c)
      nodes.push_back({id++, "S" + std::to_string(s) + "." + std::to_string(c), s});
  for (int o = 0; o < shape.orphans; ++o)
    nodes.push_back({id++, "O" + std::to_string(o), std::nullopt});
  return Hierarchy::build(nodes);
}

/// One requested training run: a method name as given on the command line
/// (a "k-" prefix selects top-k restricted prediction) plus a seed.
struct RunSpec {
  std::string label;
  Method method = Method::mtkd;
  PredictionMode mode = PredictionMode::threshold;
  std::uint64_t seed = 0;
};

inline std::pair<Method, PredictionMode> parse_method_spec(const std::string& s) {
  if (s.rfind("k-", 0) == 0)
    return {method_from_string(s.substr(2)), PredictionMode::topk};
  return {method_from_string(s), PredictionMode::threshold};
}

struct ExperimentConfig {
  HierarchyShape shape;
  ScheduleConfig schedule;
  GenConfig gen;  // per-run seed is filled in from the run's seed
  TrainConfig train;
  std::vector<std::string> methods = {"mtkd"};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<int> buffers = {5, 20, 80};

  void validate() const {
    shape.validate();
    schedule.validate();
    gen.validate();
    train.validate();
    if (methods.empty()) throw std::invalid_argument("at least one method is required");
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    for (const auto& m : methods) parse_method_spec(m);
  }

  json to_json() const {
    return json{{"hierarchy", shape.to_json()},
                {"schedule",
                 json{{"steps", schedule.steps},
                      {"classes_per_step", schedule.classes_per_step},
                      {"super_budget", schedule.super_budget},
                      {"sub_budget", schedule.sub_budget},
                      {"orphan_budget", schedule.orphan_budget}}},
                {"data",
                 json{{"dim", gen.dim},
                      {"mean_spread", gen.mean_spread},
                      {"stddev", gen.stddev},
                      {"test_per_leaf", gen.test_per_leaf}}},
                {"train", train.to_json()},
                {"methods", methods},
                {"seeds", seeds},
                {"buffers", buffers}};
  }

  /// Overlays the fields present in `j` onto this config; anything absent
  /// keeps its current value, so partial config files compose with defaults.
  void apply(const json& j) {
    auto maybe = [](const json& obj, const char* key, auto& out) {
      if (obj.contains(key)) out = obj.at(key).get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("hierarchy")) {
      const auto& h = j.at("hierarchy");
      maybe(h, "superclasses", shape.superclasses);
      maybe(h, "subclasses_per_super", shape.subclasses_per_super);
      maybe(h, "orphans", shape.orphans);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      maybe(s, "steps", schedule.steps);
      maybe(s, "classes_per_step", schedule.classes_per_step);
      maybe(s, "super_budget", schedule.super_budget);
      maybe(s, "sub_budget", schedule.sub_budget);
      maybe(s, "orphan_budget", schedule.orphan_budget);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      maybe(d, "dim", gen.dim);
      maybe(d, "mean_spread", gen.mean_spread);
      maybe(d, "stddev", gen.stddev);
      maybe(d, "test_per_leaf", gen.test_per_leaf);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      maybe(t, "epochs", train.epochs);
      maybe(t, "batch_size", train.batch_size);
      maybe(t, "lr", train.lr);
      maybe(t, "patience", train.patience);
      maybe(t, "decay", train.decay);
      maybe(t, "lambda", train.weights.lambda);
      maybe(t, "mu", train.weights.mu);
      maybe(t, "temperature", train.weights.temperature);
      maybe(t, "normalize_features", train.normalize_features);
      maybe(t, "buffer_budget", train.buffer_budget);
      maybe(t, "k", train.k);
      maybe(t, "hidden", train.hidden);
      if (t.contains("selection"))
        train.selection = selection_from_string(t.at("selection").get<std::string>());
    }
    maybe(j, "methods", methods);
    maybe(j, "seeds", seeds);
    maybe(j, "buffers", buffers);
  }

  static ExperimentConfig load(const std::string& path) {
    ExperimentConfig cfg;
    cfg.apply(read_json_file(path));
    return cfg;
  }
};

inline std::vector<RunSpec> resolve_runs(const ExperimentConfig& cfg) {
  std::vector<RunSpec> runs;
  for (const auto& m : cfg.methods) {
    auto [method, mode] = parse_method_spec(m);
    for (auto seed : cfg.seeds) runs.push_back({m, method, mode, seed});
  }
  return runs;
}

/// The synthetic world for one seed: the task order and every sample depend
/// on it, so different seeds are fully independent trials.
struct SeededBenchmark {
  Benchmark bench;
  Dataset ds;
};

inline SeededBenchmark benchmark_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto h = build_hierarchy(cfg.shape);
  auto layout_rng = make_engine(seed, "layout");
  auto bench = build_schedule(h, cfg.schedule, layout_rng);
  GenConfig g = cfg.gen;
  g.seed = seed;
  auto ds = generate(bench.hierarchy, bench.schedule, g);
  return {std::move(bench), std::move(ds)};
}

inline TrainConfig train_config_for(const ExperimentConfig& cfg, const RunSpec& spec) {
  TrainConfig t = cfg.train;
  t.method = spec.method;
  t.mode = spec.mode;
  t.seed = spec.seed;
  return t;
}

namespace detail {

inline int thread_cap() {
  if (const char* env = std::getenv("IIRC_LAB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Runs the jobs at most `thread_cap()` at a time. Results land by index,
/// so output order never depends on scheduling.
inline void run_in_waves(std::vector<std::function<void()>>& jobs) {
  const std::size_t cap = static_cast<std::size_t>(thread_cap());
  if (cap <= 1 || jobs.size() <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  for (std::size_t base = 0; base < jobs.size(); base += cap) {
    std::vector<std::future<void>> wave;
    const std::size_t end = std::min(jobs.size(), base + cap);
    for (std::size_t i = base; i < end; ++i)
      wave.push_back(std::async(std::launch::async, jobs[i]));
    for (auto& f : wave) f.get();
  }
}

inline std::string run_suffix(const ExperimentConfig& cfg, const RunSpec& spec) {
  if (cfg.methods.size() == 1 && cfg.seeds.size() == 1) return "";
  return "_" + spec.label + "_seed" + std::to_string(spec.seed);
}

inline std::string method_label(const json& train_config) {
  std::string label = train_config.at("method").get<std::string>();
  if (train_config.at("mode").get<std::string>() == "topk") label = "k-" + label;
  return label;
}

}  // namespace detail

inline int cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  auto world = benchmark_for_seed(cfg, cfg.seeds.front());
  write_json_file(out_dir + "/hierarchy.json", world.bench.hierarchy.to_json());
  write_json_file(out_dir + "/schedule.json", world.bench.schedule.to_json());
  save_csv(world.ds, out_dir + "/dataset.csv");
  return 0;
}

inline int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir,
                   const std::string& resume_path = "") {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto runs = resolve_runs(cfg);
  if (!resume_path.empty() && runs.size() != 1)
    throw std::invalid_argument("--resume requires exactly one method and one seed");

  struct Outcome {
    RunLog log;
    json report;  // the final step's metrics
    std::vector<std::string> confusion_files;
    bool failed = false;
  };
  std::vector<Outcome> outcomes(runs.size());

  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    jobs.push_back([&, i] {
      const RunSpec& spec = runs[i];
      auto world = benchmark_for_seed(cfg, spec.seed);
      auto train_cfg = train_config_for(cfg, spec);
      const std::string suffix = detail::run_suffix(cfg, spec);
      const std::string ckpt = out_dir + "/checkpoint" + suffix + ".json";
      StepCallback checkpoint = [&](const RunState& st, int) { write_checkpoint(ckpt, st); };

      Outcome& out = outcomes[i];
      try {
        if (!resume_path.empty())
          out.log = resume_incremental(resume_checkpoint(resume_path), world.ds,
                                       world.bench.schedule, train_cfg, checkpoint);
        else
          out.log = run_incremental(world.ds, world.bench.schedule, train_cfg, checkpoint);
      } catch (const TrainingError& e) {
        out.log = e.partial_log();
        out.failed = true;
      }

      for (const auto& e : out.log.entries) {
        const std::string name =
            "confusion_step" + std::to_string(e.step) + suffix + ".csv";
        write_text_file(out_dir + "/" + name,
                        confusion_csv(e.report, world.bench.hierarchy));
        out.confusion_files.push_back(name);
      }
      if (!out.log.entries.empty()) {
        const auto& last = out.log.entries.back();
        out.report = json{{"method", spec.label},
                          {"seed", spec.seed},
                          {"final_step", last.step},
                          {"classes_seen", last.classes_seen},
                          {"metrics", last.report.to_json()}};
      }
    });
  }
  detail::run_in_waves(jobs);

  std::string curves = "method,seed,step,pw_js,superclass_pw_js,mean_predictions_per_image\n";
  bool all_ok = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunSpec& spec = runs[i];
    const Outcome& out = outcomes[i];
    const std::string suffix = detail::run_suffix(cfg, spec);
    write_json_file(out_dir + "/runlog" + suffix + ".json", out.log.to_json());
    if (!out.report.is_null())
      write_json_file(out_dir + "/report" + suffix + ".json", out.report);
    for (const auto& e : out.log.entries)
      curves += spec.label + "," + std::to_string(spec.seed) + "," +
                std::to_string(e.step) + "," + format_double(e.report.pw_js) + "," +
                format_double(e.report.superclass_pw_js) + "," +
                format_double(e.report.mean_predictions_per_image) + "\n";
    all_ok = all_ok && !out.failed;
  }
  write_text_file(out_dir + "/curves.csv", curves);
  return all_ok ? 0 : 1;
}

inline int cmd_sweep_buffer(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.buffers.empty()) throw std::invalid_argument("no buffer sizes to sweep");
  std::filesystem::create_directories(out_dir);

  struct Point {
    std::string method;
    int buffer = 0;
    std::uint64_t seed = 0;
    std::optional<double> final_pw_js;
  };
  std::vector<Point> points;
  for (const auto& m : cfg.methods)
    for (int b : cfg.buffers)
      for (auto seed : cfg.seeds) points.push_back({m, b, seed, std::nullopt});

  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    jobs.push_back([&, i] {
      Point& p = points[i];
      auto [method, mode] = parse_method_spec(p.method);
      RunSpec spec{p.method, method, mode, p.seed};
      auto world = benchmark_for_seed(cfg, p.seed);
      auto train_cfg = train_config_for(cfg, spec);
      train_cfg.buffer_budget = p.buffer;
      try {
        auto log = run_incremental(world.ds, world.bench.schedule, train_cfg);
        p.final_pw_js = log.entries.back().report.pw_js;
      } catch (const TrainingError&) {
      }
    });
  }
  detail::run_in_waves(jobs);

  std::string csv = "method,budget,seed,final_pw_js\n";
  bool all_ok = true;
  for (const auto& p : points) {
    if (p.final_pw_js)
      csv += p.method + "," + std::to_string(p.buffer) + "," + std::to_string(p.seed) +
             "," + format_double(*p.final_pw_js) + "\n";
    else
      all_ok = false;
  }
  write_text_file(out_dir + "/sweep.csv", csv);
  return all_ok ? 0 : 1;
}

/// Aggregates every runlog*.json in the directory into per-method means and
/// population standard deviations, step by step.
inline int cmd_report(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("runlog", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".json")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no runlog files in " + dir);

  std::map<std::string, std::vector<RunLog>> by_method;
  for (const auto& f : files) {
    auto log = RunLog::from_json(read_json_file(f));
    by_method[detail::method_label(log.config)].push_back(std::move(log));
  }

  auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  json methods = json::array();
  for (const auto& [label, logs] : by_method) {
    const std::size_t steps = logs.front().entries.size();
    for (const auto& log : logs)
      if (log.entries.size() != steps)
        throw std::runtime_error("runs for method '" + label +
                                 "' cover different step counts");
    json per_step = json::array();
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<double> js, super_js;
      for (const auto& log : logs) {
        js.push_back(log.entries[t].report.pw_js);
        super_js.push_back(log.entries[t].report.superclass_pw_js);
      }
      auto [jm, js_std] = stats(js);
      auto [sm, ss_std] = stats(super_js);
      per_step.push_back(json{{"step", t},
                              {"pw_js_mean", jm},
                              {"pw_js_std", js_std},
                              {"superclass_pw_js_mean", sm},
                              {"superclass_pw_js_std", ss_std}});
    }
    methods.push_back(json{{"method", label},
                           {"runs", logs.size()},
                           {"steps", per_step}});
  }
  write_json_file(dir + "/aggregate.json", json{{"methods", methods}});
  return 0;
}

}  // namespace iirc
