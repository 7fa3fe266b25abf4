#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iirc/cli.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string out_dir = ".";
  std::string resume_path;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
  std::vector<int> buffers;
  std::optional<int> k;
  std::optional<double> lambda;
  std::optional<double> mu;
};

iirc::ExperimentConfig assemble(const Flags& f) {
  iirc::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg.apply(iirc::read_json_file(f.config_path));
  // command-line flags win over the config file
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.methods.empty()) cfg.methods = f.methods;
  if (!f.buffers.empty()) cfg.buffers = f.buffers;
  if (f.k) cfg.train.k = *f.k;
  if (f.lambda) cfg.train.weights.lambda = *f.lambda;
  if (f.mu) cfg.train.weights.mu = *f.mu;
  cfg.validate();
  return cfg;
}

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seeds, "seed (repeatable)");
  cmd->add_option("--method", f.methods,
                  "method: finetune | baseline-kd | mtkd, with an optional k- "
                  "prefix for top-k prediction (repeatable or comma separated)")
      ->delimiter(',');
  cmd->add_option("--k", f.k, "predictions kept per image in top-k mode");
  cmd->add_option("--lambda", f.lambda, "general distillation weight");
  cmd->add_option("--mu", f.mu, "superclass distillation weight");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental-learning lab for hierarchical label discovery"};
  app.require_subcommand(1);

  Flags f;
  auto* gen = app.add_subcommand("gen", "generate a benchmark: hierarchy, schedule, data");
  auto* run = app.add_subcommand("run", "train incrementally and write logs and metrics");
  auto* sweep = app.add_subcommand("sweep-buffer", "re-run across exemplar buffer sizes");
  auto* report = app.add_subcommand("report", "aggregate runlog files into one summary");
  for (auto* cmd : {gen, run, sweep}) add_common_flags(cmd, f);
  run->add_option("--resume", f.resume_path, "checkpoint to continue from")
      ->check(CLI::ExistingFile);
  sweep->add_option("--buffer", f.buffers, "buffer size to sweep (repeatable)");
  report->add_option("--out", f.out_dir, "directory holding runlog*.json files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return iirc::cmd_gen(assemble(f), f.out_dir);
    if (run->parsed()) return iirc::cmd_run(assemble(f), f.out_dir, f.resume_path);
    if (sweep->parsed()) return iirc::cmd_sweep_buffer(assemble(f), f.out_dir);
    return iirc::cmd_report(f.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
