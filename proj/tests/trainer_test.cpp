#include "iirc/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "iirc/datagen.hpp"
#include "iirc/hierarchy.hpp"
#include "support/generators.hpp"

using namespace iirc;

namespace {

// Two superclasses with two subclasses each, plus one orphan, spread over
// three steps. Small budgets keep each full run in the low milliseconds.
struct SmallBench {
  Hierarchy h;
  TaskSchedule sched;
  Dataset ds;

  SmallBench() {
    h = Hierarchy::build(std::vector<NodeSpec>{
        {0, "A", std::nullopt},
        {1, "B", std::nullopt},
        {2, "a1", 0},
        {3, "a2", 0},
        {4, "o", std::nullopt},
        {5, "b1", 1},
        {6, "b2", 1},
    });
    sched.steps = {{{0, 30}, {1, 30}}, {{2, 20}, {3, 20}, {4, 20}}, {{5, 20}, {6, 20}}};
    GenConfig g;
    g.dim = 4;
    g.mean_spread = 3.0;
    g.stddev = 0.5;
    g.test_per_leaf = 5;
    g.seed = 77;
    ds = generate(h, sched, g);
  }

  TrainConfig config(Method m) const {
    TrainConfig cfg;
    cfg.method = m;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.lr = 0.3;
    cfg.patience = 5;
    cfg.buffer_budget = 4;
    cfg.hidden = {8};
    cfg.seed = 5;
    return cfg;
  }
};

// Scripted per-call losses with zero gradient: the net never moves, so the
// scheduler sees exactly the trace we wrote.
detail::SampleLoss scripted(std::vector<double> script) {
  auto calls = std::make_shared<std::size_t>(0);
  return [script = std::move(script), calls](const LabeledExample&,
                                             const std::vector<double>& logits,
                                             std::vector<double>& grad) -> LossBreakdown {
    grad.assign(logits.size(), 0.0);
    double v = script.at((*calls)++);
    return {v, v, 0.0};
  };
}

struct ScriptRig {
  Net net;
  std::vector<LabeledExample> pool;
  TrainConfig cfg;
  std::mt19937_64 rng;

  ScriptRig() : rng(1) {
    auto init = make_engine(0, "init");
    net = Net(1, {}, 1, init);
    pool = {{{1.0}, 0}};
    cfg.batch_size = 1;
    cfg.lr = 0.5;
    cfg.patience = 3;
    cfg.decay = 0.1;
  }
};

TEST(Plateau, FlatForExactlyPatienceDecaysOnce) {
  ScriptRig rig;
  rig.cfg.epochs = 6;
  // best at epoch 0, three stalls, decay, then real improvement
  auto outcome = detail::train_epochs(rig.net, rig.pool,
                                      scripted({1.0, 1.0, 1.0, 1.0, 0.5, 0.4}), rig.cfg,
                                      rig.rng, 0, RunLog{});
  EXPECT_DOUBLE_EQ(outcome.final_lr, 0.5 * 0.1);
  EXPECT_EQ(outcome.epochs_run, 6);
  EXPECT_DOUBLE_EQ(outcome.final_loss.total, 0.4);
}

TEST(Plateau, ImprovementBeforePatienceNeverDecays) {
  ScriptRig rig;
  rig.cfg.epochs = 6;
  // two stalls, then improvement one epoch before the window fills
  auto outcome = detail::train_epochs(rig.net, rig.pool,
                                      scripted({1.0, 1.0, 1.0, 0.5, 0.45, 0.4}), rig.cfg,
                                      rig.rng, 0, RunLog{});
  EXPECT_DOUBLE_EQ(outcome.final_lr, 0.5);
}

TEST(Plateau, PersistentFlatlineKeepsDecaying) {
  ScriptRig rig;
  rig.cfg.epochs = 7;
  auto outcome = detail::train_epochs(rig.net, rig.pool,
                                      scripted({1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}),
                                      rig.cfg, rig.rng, 0, RunLog{});
  // stall windows [1,3] and [4,6]: the second decay lands on the last epoch,
  // after that epoch's lr was already recorded
  EXPECT_DOUBLE_EQ(outcome.final_lr, 0.5 * 0.1);
}

TEST(Plateau, SubThresholdImprovementCountsAsStall) {
  ScriptRig rig;
  rig.cfg.epochs = 3;
  rig.cfg.patience = 1;
  auto outcome = detail::train_epochs(
      rig.net, rig.pool, scripted({1.0, 1.0 - 5e-5, 0.5}), rig.cfg, rig.rng, 0, RunLog{});
  EXPECT_DOUBLE_EQ(outcome.final_lr, 0.5 * 0.1);
}

TEST(Plateau, EmptyPoolIsANoop) {
  ScriptRig rig;
  auto outcome =
      detail::train_epochs(rig.net, rig.pool = {}, scripted({}), rig.cfg, rig.rng, 0, RunLog{});
  EXPECT_EQ(outcome.epochs_run, 0);
}

TEST(TrainEpochs, NonFiniteLossAbortsWithContext) {
  ScriptRig rig;
  rig.cfg.epochs = 5;
  RunLog progress;
  progress.entries.push_back(StepRecord{.step = 0});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    detail::train_epochs(rig.net, rig.pool, scripted({1.0, 1.0, nan}), rig.cfg, rig.rng,
                         3, progress);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 3);
    EXPECT_EQ(e.epoch(), 2);
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos);
    ASSERT_EQ(e.partial_log().entries.size(), 1u);
    EXPECT_FALSE(e.partial_log().complete);
  }
}

TEST(TrainEpochs, SingleSampleLossDecreases) {
  auto rng = make_engine(9, "init");
  Net one_epoch(3, {6}, 2, rng);
  Net many_epochs = one_epoch;
  std::vector<LabeledExample> pool = {{{1.0, -0.5, 2.0}, 1}};
  TrainConfig cfg;
  cfg.batch_size = 4;  // larger than the pool on purpose
  cfg.lr = 0.5;

  detail::SampleLoss loss = [](const LabeledExample& ex, const std::vector<double>& logits,
                               std::vector<double>& grad) -> LossBreakdown {
    std::vector<double> y(logits.size(), 0.0);
    y[ex.label] = 1.0;
    auto r = bce(logits, y);
    grad = std::move(r.grad);
    return {r.loss, r.loss, 0.0};
  };

  cfg.epochs = 1;
  auto rng1 = make_engine(0, "shuffle");
  auto first = detail::train_epochs(one_epoch, pool, loss, cfg, rng1, 0, RunLog{});
  cfg.epochs = 50;
  auto rng2 = make_engine(0, "shuffle");
  auto last = detail::train_epochs(many_epochs, pool, loss, cfg, rng2, 0, RunLog{});
  EXPECT_LT(last.final_loss.total, first.final_loss.total);
  EXPECT_GT(first.final_loss.total, 0.0);
}

TEST(RunIncremental, ProducesOneEntryPerStepWithExpectedShapes) {
  SmallBench b;
  auto log = run_incremental(b.ds, b.sched, b.config(Method::mtkd));
  EXPECT_TRUE(log.complete);
  ASSERT_EQ(log.entries.size(), 3u);
  EXPECT_EQ(log.entries[0].classes_seen, 2);
  EXPECT_EQ(log.entries[1].classes_seen, 5);
  EXPECT_EQ(log.entries[2].classes_seen, 7);
  for (const auto& e : log.entries) {
    EXPECT_EQ(e.epochs_run, 20);
    EXPECT_GT(e.final_loss.total, 0.0);
    EXPECT_GT(e.report.n_eval_samples, 0);
  }
  EXPECT_EQ(log.entries[0].final_loss.distill, 0.0);  // no teacher yet
  EXPECT_GT(log.entries[1].final_loss.distill, 0.0);
  EXPECT_EQ(log.config, b.config(Method::mtkd).to_json());
}

TEST(RunIncremental, TrainingReducesLossOverEpochs) {
  SmallBench b;
  auto quick = b.config(Method::finetune);
  quick.epochs = 1;
  auto longer = b.config(Method::finetune);
  longer.epochs = 60;
  auto log1 = run_incremental(b.ds, b.sched, quick);
  auto log60 = run_incremental(b.ds, b.sched, longer);
  EXPECT_LT(log60.entries[0].final_loss.total, log1.entries[0].final_loss.total);
}

TEST(RunIncremental, SameConfigSameSeedIsBitIdentical) {
  SmallBench b;
  auto a = run_incremental(b.ds, b.sched, b.config(Method::mtkd));
  auto c = run_incremental(b.ds, b.sched, b.config(Method::mtkd));
  EXPECT_EQ(a, c);
  EXPECT_EQ(a.to_json().dump(2), c.to_json().dump(2));
}

TEST(RunIncremental, SeedChangesTheRun) {
  SmallBench b;
  auto cfg2 = b.config(Method::mtkd);
  cfg2.seed = 6;
  auto a = run_incremental(b.ds, b.sched, b.config(Method::mtkd));
  auto c = run_incremental(b.ds, b.sched, cfg2);
  EXPECT_NE(a.entries[0].final_loss.total, c.entries[0].final_loss.total);
}

TEST(RunIncremental, ZeroWeightsMakeMtkdMatchFinetune) {
  SmallBench b;
  auto ft = b.config(Method::finetune);
  ft.weights.lambda = 0.0;
  ft.weights.mu = 0.0;
  auto kd = b.config(Method::mtkd);
  kd.weights.lambda = 0.0;
  kd.weights.mu = 0.0;
  auto a = run_incremental(b.ds, b.sched, ft);
  auto c = run_incremental(b.ds, b.sched, kd);
  EXPECT_EQ(a.entries, c.entries);  // configs echo different method names
}

TEST(RunIncremental, MtkdAndBaselineAgreeThroughStepOne) {
  SmallBench b;
  auto a = run_incremental(b.ds, b.sched, b.config(Method::baseline_kd));
  auto c = run_incremental(b.ds, b.sched, b.config(Method::mtkd));
  // before step 2 there is only one teacher, and both objectives reduce to
  // the same weighted sum, bit for bit
  EXPECT_EQ(a.entries[0], c.entries[0]);
  EXPECT_EQ(a.entries[1], c.entries[1]);
  EXPECT_NE(a.entries[2].final_loss.total, c.entries[2].final_loss.total);
}

TEST(RunIncremental, SingleStepScheduleCreatesNoTeachers) {
  SmallBench b;
  // a one-step world can hold no subclasses: parents must land strictly
  // earlier, so only orphans qualify
  Hierarchy h = Hierarchy::build(std::vector<NodeSpec>{
      {0, "x", std::nullopt}, {1, "y", std::nullopt}, {2, "z", std::nullopt}});
  TaskSchedule flat;
  flat.steps = {{{0, 20}, {1, 20}, {2, 20}}};
  GenConfig g;
  g.dim = 4;
  g.stddev = 0.5;
  g.test_per_leaf = 5;
  g.seed = 3;
  auto ds = generate(h, flat, g);

  int calls = 0;
  auto log = run_incremental(ds, flat, b.config(Method::mtkd),
                             [&](const RunState& st, int step) {
                               ++calls;
                               EXPECT_EQ(step, 0);
                               EXPECT_FALSE(st.super_teacher.has_value());
                             });
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(log.entries.size(), 1u);
  EXPECT_TRUE(log.complete);
  EXPECT_EQ(log.entries[0].final_loss.distill, 0.0);
}

TEST(RunIncremental, CallbackSeesGrowingStateEachStep) {
  SmallBench b;
  int calls = 0;
  run_incremental(b.ds, b.sched, b.config(Method::mtkd),
                  [&](const RunState& st, int step) {
                    EXPECT_EQ(step, calls);
                    ++calls;
                    EXPECT_EQ(st.next_step, step + 1);
                    EXPECT_EQ(static_cast<int>(st.log.entries.size()), step + 1);
                    EXPECT_EQ(st.store.class_count(), b.sched.n_through(step));
                    EXPECT_EQ(st.super_teacher.has_value(), step >= 1);
                    EXPECT_EQ(st.net.output_count(), b.sched.n_through(step));
                  });
  EXPECT_EQ(calls, 3);
}

TEST(RunIncremental, RejectsInvalidScheduleAndConfig) {
  SmallBench b;
  TaskSchedule bad = b.sched;
  bad.steps[0] = {{2, 20}};  // subclass before its superclass
  EXPECT_THROW(run_incremental(b.ds, bad, b.config(Method::mtkd)), std::invalid_argument);

  auto cfg = b.config(Method::mtkd);
  cfg.decay = 1.0;
  EXPECT_THROW(run_incremental(b.ds, b.sched, cfg), std::invalid_argument);
}

TEST(RunIncremental, ExplodingRunThrowsTrainingErrorWithPartialLog) {
  SmallBench b;
  auto cfg = b.config(Method::finetune);
  cfg.lr = 1e160;
  try {
    run_incremental(b.ds, b.sched, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 0);
    EXPECT_FALSE(e.partial_log().complete);
    EXPECT_TRUE(e.partial_log().entries.empty());
  }
}

TEST(Checkpoint, ResumeAtBoundaryReproducesTheRunExactly) {
  SmallBench b;
  auto cfg = b.config(Method::mtkd);
  auto full = run_incremental(b.ds, b.sched, cfg);

  const std::string path = testing::TempDir() + "trainer_ckpt.json";
  run_incremental(b.ds, b.sched, cfg, [&](const RunState& st, int step) {
    if (step == 1) write_checkpoint(path, st);
  });

  auto resumed_state = resume_checkpoint(path);
  EXPECT_EQ(resumed_state.next_step, 2);
  ASSERT_TRUE(resumed_state.super_teacher.has_value());
  EXPECT_EQ(resumed_state.super_teacher->step(), 0);
  auto resumed = resume_incremental(std::move(resumed_state), b.ds, b.sched, cfg);
  EXPECT_EQ(full, resumed);
  EXPECT_EQ(full.to_json().dump(2), resumed.to_json().dump(2));
  std::remove(path.c_str());
}

TEST(Checkpoint, RoundTripsThroughDisk) {
  SmallBench b;
  auto cfg = b.config(Method::baseline_kd);
  const std::string p1 = testing::TempDir() + "trainer_ckpt_a.json";
  const std::string p2 = testing::TempDir() + "trainer_ckpt_b.json";
  run_incremental(b.ds, b.sched, cfg, [&](const RunState& st, int step) {
    if (step == 2) write_checkpoint(p1, st);
  });
  write_checkpoint(p2, resume_checkpoint(p1));
  EXPECT_EQ(read_text_file(p1), read_text_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST(Checkpoint, MismatchedConfigOrCorruptFileIsRejected) {
  SmallBench b;
  auto cfg = b.config(Method::mtkd);
  const std::string path = testing::TempDir() + "trainer_ckpt_c.json";
  run_incremental(b.ds, b.sched, cfg, [&](const RunState& st, int step) {
    if (step == 0) write_checkpoint(path, st);
  });

  auto other = cfg;
  other.lr = 0.123;
  EXPECT_THROW(resume_incremental(resume_checkpoint(path), b.ds, b.sched, other),
               std::invalid_argument);

  write_text_file(path, "{\"next_step\": 1}\n");
  EXPECT_THROW(resume_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(Checkpoint, RefusesToWriteBeforeAnyStepCompletes) {
  RunState empty;
  EXPECT_THROW(write_checkpoint(testing::TempDir() + "never.json", empty),
               std::invalid_argument);
}

TEST(TrainConfigJson, RoundTripsAndValidates) {
  TrainConfig cfg;
  cfg.method = Method::baseline_kd;
  cfg.epochs = 7;
  cfg.lr = 0.25;
  cfg.mode = PredictionMode::topk;
  cfg.k = 3;
  cfg.hidden = {5, 9};
  cfg.seed = 42;
  auto back = TrainConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());

  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.k = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.decay = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.lr = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(MethodNames, RoundTripAndReject) {
  for (auto m : {Method::finetune, Method::baseline_kd, Method::mtkd})
    EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW(method_from_string("sgd"), std::invalid_argument);
}

TEST(RunLogJson, RoundTripsExactly) {
  SmallBench b;
  auto cfg = b.config(Method::mtkd);
  cfg.epochs = 3;
  auto log = run_incremental(b.ds, b.sched, cfg);
  auto back = RunLog::from_json(log.to_json());
  EXPECT_EQ(back, log);
  EXPECT_EQ(back.to_json().dump(2), log.to_json().dump(2));
}

}  // namespace
