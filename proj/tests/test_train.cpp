#include "npt/experiment.hpp"
#include "npt/io.hpp"
#include "npt/train.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace npt;

namespace {

RunSetup default_setup(double tau, Method m, std::uint64_t seed) {
  ExperimentConfig c;
  RunSpec s;
  s.tau = tau;
  s.method = m;
  s.seed = seed;
  if (m == Method::Npt) s.weights = {0.3, 0.8};
  return prepare_run(c, s);
}

TrainResult run(const RunSetup& s, TrainConfig cfg) {
  return train(s.init, make_batch(s.train_set, s.split.base_ids), cfg);
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParameters) {
  const RunSetup s = default_setup(0.05, Method::Npt, 0);
  TrainConfig cfg = s.train;
  cfg.learning_rate = 0.0;
  cfg.steps = 30;
  cfg.record_every = 10;
  const TrainResult r = run(s, cfg);
  EXPECT_TRUE(bitwise_equal(r.params, s.init));
  ASSERT_EQ(r.trajectory.rows.size(), 4u);
  for (const auto& row : r.trajectory.rows) EXPECT_EQ(row.loss.total, r.trajectory.rows.front().loss.total);
}

TEST(Train, BitIdenticalOnRepeat) {
  const RunSetup s = default_setup(0.01, Method::Npt, 3);
  TrainConfig cfg = s.train;
  cfg.steps = 60;
  cfg.batch_size = 8;
  const TrainResult a = run(s, cfg), b = run(s, cfg);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
  std::ostringstream ta, tb;
  a.trajectory.write_csv(ta);
  b.trajectory.write_csv(tb);
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(Train, MinibatchOrderDependsOnSeed) {
  const RunSetup s = default_setup(1.0, Method::Baseline, 0);
  TrainConfig cfg = s.train;
  cfg.steps = 20;
  cfg.batch_size = 8;
  const TrainResult a = run(s, cfg);
  cfg.seed += 1;
  EXPECT_FALSE(bitwise_equal(a.params, run(s, cfg).params));
}

TEST(Train, FrozenFieldsUntouched) {
  const RunSetup s = default_setup(0.05, Method::Npt, 1);
  TrainConfig cfg = s.train;
  cfg.steps = 50;
  const TrainResult r = run(s, cfg);
  EXPECT_TRUE(frozen_equal(r.params, s.init));
  EXPECT_FALSE(r.params.context == s.init.context);
  EXPECT_FALSE(r.params.vision_prompt == s.init.vision_prompt);
}

TEST(Train, DisabledVisionPromptStaysPut) {
  RunSetup s = default_setup(1.0, Method::Npt, 2);
  s.init.config.vision_prompt_enabled = false;
  TrainConfig cfg = s.train;
  cfg.steps = 20;
  const TrainResult r = run(s, cfg);
  EXPECT_TRUE(r.params.vision_prompt == s.init.vision_prompt);
}

TEST(Train, ZeroWeightNptEqualsBaseline) {
  const RunSetup s = default_setup(0.01, Method::Npt, 4);
  TrainConfig npt = s.train, base = s.train;
  npt.steps = base.steps = 40;
  npt.weights.w1 = npt.weights.w2 = 0.0;
  base.method = Method::Baseline;
  base.weights = {0.3, 0.8};  // ignored by the baseline
  EXPECT_TRUE(bitwise_equal(run(s, npt).params, run(s, base).params));
}

TEST(Train, BaselineFitsBalancedBaseClasses) {
  const RunSetup s = default_setup(1.0, Method::Baseline, 0);
  ASSERT_EQ(s.split.base_ids.size(), 5u);
  ASSERT_EQ(s.train.steps, 500);
  EXPECT_GT(run(s, s.train).trajectory.rows.back().base_train_acc, 0.9);
}

TEST(Train, LossDecreasesOnEverySeed) {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (Method m : {Method::Baseline, Method::Npt}) {
      const RunSetup s = default_setup(0.01, m, seed);
      const Trajectory t = run(s, s.train).trajectory;
      EXPECT_LT(t.rows.back().loss.total, t.rows.front().loss.total) << "seed " << seed << " " << to_string(m);
    }
}

TEST(Train, TrajectoryCsvColumns) {
  const RunSetup s = default_setup(0.05, Method::Npt, 0);
  TrainConfig cfg = s.train;
  cfg.steps = 10;
  cfg.record_every = 5;
  std::ostringstream os;
  run(s, cfg).trajectory.write_csv(os);
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header,
            "step,loss_total,loss_clip,loss_lc,loss_mi,grad_norm,cohesion_0,cohesion_1,cohesion_2,cohesion_3,"
            "cohesion_4,repulsion_0,repulsion_1,repulsion_2,repulsion_3,repulsion_4,delta_lcd,mid_error,nc1,nc2,"
            "nc3,base_train_acc");
  const auto columns = std::count(header.begin(), header.end(), ',');
  int rows = 0;
  std::vector<std::string> steps;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), columns);
    steps.push_back(line.substr(0, line.find(',')));
    ++rows;
  }
  EXPECT_EQ(steps, (std::vector<std::string>{"0", "5", "10"}));
}

TEST(Train, NonFiniteAbortsWithStep) {
  RunSetup s = default_setup(1.0, Method::Npt, 0);
  TrainConfig cfg = s.train;
  cfg.learning_rate = 1e300;
  cfg.steps = 50;
  try {
    run(s, cfg);
    FAIL() << "expected a numerical abort";
  } catch (const NumericalAbort& e) {
    EXPECT_GE(e.step, 0);
    EXPECT_LT(e.step, 50);
    EXPECT_FALSE(std::string(e.what()).empty());
  }
}

TEST(Train, ConfigValidation) {
  const RunSetup s = default_setup(1.0, Method::Npt, 0);
  TrainConfig cfg = s.train;
  cfg.steps = 0;
  EXPECT_THROW(run(s, cfg), ArgumentError);
  cfg = s.train;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(run(s, cfg), ArgumentError);
  EXPECT_THROW(method_from_string("sgd"), ArgumentError);
}

TEST(HarmonicMean, Examples) {
  EXPECT_DOUBLE_EQ(harmonic_mean(0.42, 0.42), 0.42);
  EXPECT_EQ(harmonic_mean(1.0, 0.0), 0.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
  EXPECT_NEAR(harmonic_mean(0.8, 0.6), 0.96 / 1.4, 1e-15);
  EXPECT_NEAR(harmonic_mean(0.8, 0.6), 0.685714, 1e-6);
  EXPECT_THROW(harmonic_mean(1.5, 0.5), ArgumentError);
}

TEST(Evaluate, SelfLabelsScoreOne) {
  const RunSetup s = default_setup(1.0, Method::Baseline, 0);
  const Encoded text = encode_text(s.init, s.split.base_ids);
  const Encoded img = encode_image(s.init, s.base_test.features);
  const std::vector<int> pred = argmax_rows(predict_probs(img.reps, text.reps, s.init.lambda_temp()));
  Dataset relabeled = s.base_test;
  for (std::size_t n = 0; n < pred.size(); ++n) relabeled.labels[n] = s.split.base_ids[static_cast<std::size_t>(pred[n])];
  EXPECT_EQ(evaluate(s.init, relabeled, s.split.base_ids), 1.0);
}

TEST(Evaluate, ImagesAtTextRepsScoreOne) {
  // two classes with a square, invertible vision map: choose raw inputs whose
  // image reps coincide with the text reps
  ModelConfig c;
  c.num_classes = 2;
  c.rep_dim = 6;
  c.raw_dim = 6;
  c.vision_prompt_enabled = false;
  const ModelParams p = init_model(c);
  const std::vector<int> ids{0, 1};
  const Matrix text = encode_text(p, ids).reps;
  Dataset ds;
  ds.features = p.vision_backbone.partialPivLu().solve(text);
  ds.labels = {0, 1};
  EXPECT_LE((encode_image(p, ds.features).reps - text).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(evaluate(p, ds, ids), 1.0);
}

TEST(Evaluate, TemperatureDoesNotChangeArgmax) {
  const RunSetup s = default_setup(1.0, Method::Baseline, 5);
  const double a = evaluate(s.init, s.novel_test, s.split.novel_ids, 1.0);
  for (double lambda : {0.5, 0.05, 0.001}) EXPECT_EQ(evaluate(s.init, s.novel_test, s.split.novel_ids, lambda), a);
}

TEST(Evaluate, RandomModelIsAtChance) {
  // no alignment step: the encoders carry no information about the classes
  double sum = 0.0;
  std::vector<int> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelConfig mc;
    mc.init_seed = 1000 + seed;
    GeneratorConfig g;
    g.seed = seed;
    const Dataset test = generate_test_set(g, ids, 50, seed);
    sum += evaluate(init_model(mc), test, ids);
  }
  EXPECT_NEAR(sum / 20.0, 0.1, 0.06);
}

TEST(Evaluate, EmptyTestSet) {
  const RunSetup s = default_setup(1.0, Method::Baseline, 0);
  Dataset empty;
  empty.features = Matrix(s.init.config.raw_dim, 0);
  EXPECT_THROW(evaluate(s.init, empty, s.split.base_ids), ArgumentError);
}
