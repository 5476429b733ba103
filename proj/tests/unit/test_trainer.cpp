#include "hybridgen/trainer.hpp"
#include "hybridgen/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

namespace hybridgen {
namespace {

using testing::TempDir;

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, MatchesTheTextbookUpdate) {
  AdamOptions o;
  o.learning_rate = 0.1;
  Adam adam(3, o);
  std::mt19937_64 rng(5);
  long double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  for (int t = 1; t <= 6; ++t) {
    const Eigen::VectorXd g = testing::random_vector(rng, 3, 2.0);
    const Eigen::VectorXd delta = adam.step(g);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9L * m[i] + 0.1L * g[i];
      v[i] = 0.999L * v[i] + 0.001L * g[i] * g[i];
      const long double mhat = m[i] / (1.0L - std::pow(0.9L, t));
      const long double vhat = v[i] / (1.0L - std::pow(0.999L, t));
      const long double expected = -0.1L * mhat / (std::sqrt(vhat) + 1e-8L);
      EXPECT_NEAR(delta[i], static_cast<double>(expected), 1e-12) << "t=" << t << " i=" << i;
    }
  }
  EXPECT_EQ(adam.steps(), 6);
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  Adam adam(2, AdamOptions{});
  const Eigen::VectorXd delta = adam.step(Eigen::Vector2d(0.5, -3.0));
  EXPECT_NEAR(delta[0], -0.002, 1e-10);
  EXPECT_NEAR(delta[1], 0.002, 1e-10);
  EXPECT_THROW(adam.step(Eigen::Vector3d::Zero()), ShapeError);
}

// ---------------------------------------------------------------------------
// Log lines

TEST(TrainingLog, LineRoundTripsExactly) {
  TrainingLogRecord r;
  r.iteration = 42;
  r.loss_direct = 0.1 + 0.2;
  r.loss_css = 1.0 / 3.0;
  r.loss_overall = 5e-324;
  r.sample_shift_cosine = -0.9999999999999999;
  const std::string line = r.to_log_line();
  EXPECT_EQ(line.find("wall_time_ms"), std::string::npos);
  const TrainingLogRecord back = TrainingLogRecord::parse_log_line(line);
  EXPECT_EQ(back.iteration, 42);
  EXPECT_EQ(back.loss_direct, r.loss_direct);
  EXPECT_EQ(back.loss_css, r.loss_css);
  EXPECT_EQ(back.loss_overall, r.loss_overall);
  EXPECT_EQ(back.sample_shift_cosine, r.sample_shift_cosine);
  EXPECT_EQ(back.to_log_line(), line);
}

TEST(TrainingLog, RejectsMalformedLines) {
  EXPECT_THROW(TrainingLogRecord::parse_log_line("iteration=1 loss_direct=0.5"), InvalidInputError);
  EXPECT_THROW(TrainingLogRecord::parse_log_line("iteration=1 loss_direct=x loss_css=0 loss_overall=0 "
                                                 "sample_shift_cosine=0"),
               InvalidInputError);
  EXPECT_THROW(TrainingLogRecord::parse_log_line("iteration=1 loss_direct=0 loss_css=0 loss_overall=0 "
                                                 "sample_shift_cosine=0 colour=red"),
               InvalidInputError);
  EXPECT_THROW(TrainingLogRecord::parse_log_line("iteration"), InvalidInputError);
}

// ---------------------------------------------------------------------------
// Preparation

TEST(Prepare, SingleTextDomainUsesItsShiftUnchanged) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.domains = {{Modality::text, "watercolor", 1.0}};
  const AdaptationState state = prepare(c);
  const DirectionVector expected = text_domain_shift(state.semantic_encoder->embed_text("watercolor"), state.anchor);
  EXPECT_EQ(state.domain_direction.values, expected.values);
  ASSERT_EQ(state.domain_shifts.size(), 1u);
  EXPECT_EQ(state.domain_shifts[0].values, expected.values);
}

TEST(Prepare, ComposesCoefficientWeightedShifts) {
  TempDir dir;
  const AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  ASSERT_EQ(state.domain_shifts.size(), 2u);
  const Eigen::VectorXd text_shift =
      state.semantic_encoder->embed_text("pencil sketch").values - state.anchor.source_prompt_embedding.values;
  // The reference went through an 8-bit file.
  const Eigen::VectorXd image_shift = state.semantic_encoder->embed_image(read_image(dir / "reference.ppm")).values -
                                      state.anchor.mean_image_embedding.values;
  EXPECT_LT((state.domain_shifts[0].values - text_shift).norm(), 1e-12);
  EXPECT_LT((state.domain_shifts[1].values - image_shift).norm(), 1e-12);
  EXPECT_LT((state.domain_direction.values - (0.5 * text_shift + 0.5 * image_shift)).norm(), 1e-12);
}

TEST(Prepare, IsDeterministic) {
  TempDir a, b;
  const std::string fa = prepare(testing::toy_two_domain_config(a.path())).fingerprint();
  EXPECT_EQ(fa, prepare(testing::toy_two_domain_config(b.path())).fingerprint());
  EXPECT_EQ(fa, "0f0468b8e28be84dc95e54083c77c04acb9374e0b43907c1646d56e751b4d639");
  EXPECT_NE(fa, prepare(testing::toy_two_domain_config(a.path(), 1)).fingerprint());
}

TEST(Prepare, TargetStartsAsAnExactTrainableCopy) {
  TempDir dir;
  const AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  EXPECT_EQ(state.target.parameters(), state.source.parameters());
  EXPECT_TRUE(state.target.trainable());
  EXPECT_FALSE(state.source.trainable());
}

TEST(Prepare, RejectsDegenerateDirection) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.domains = {{Modality::text, c.source.source_prompt, 1.0}};
  EXPECT_THROW(prepare(c), DegenerateDomainError);
  // Opposite shifts cancel.
  c.domains = {{Modality::text, "sketch", 1.0}, {Modality::text, "sketch", -1.0}};
  EXPECT_THROW(prepare(c), DegenerateDomainError);
}

// ---------------------------------------------------------------------------
// Objective

NoiseBatch batch_for(const AdaptationState& state, std::uint64_t seed) {
  return NoiseBatch::sample(state.config.batch_size, state.target.architecture().noise_dim(), seed);
}

TEST(Objective, DirectionLossIsOneBeforeTraining) {
  TempDir dir;
  const AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  const ObjectiveValue v =
      evaluate_objective(state, state.target.parameters().cast<double>(), batch_for(state, 3), false);
  EXPECT_NEAR(v.loss_direct, 1.0, 1e-3);
  EXPECT_TRUE(v.gradient.size() == 0);
}

TEST(Objective, OverallIsDirectPlusWeightedStructure) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.lambda_css = 2.5;
  AdaptationState state = prepare(c);
  for (int i = 0; i < 3; ++i) train_step(state);
  const ObjectiveValue v = evaluate_objective(state, state.target.parameters().cast<double>(), batch_for(state, 4));
  EXPECT_NEAR(v.loss_overall, v.loss_direct + 2.5 * v.loss_css, 1e-6);

  c.lambda_css = 0.0;
  AdaptationState plain = prepare(c);
  for (int i = 0; i < 3; ++i) {
    const TrainingLogRecord r = train_step(plain);
    EXPECT_EQ(r.loss_overall, r.loss_direct);
  }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  TempDir dir;
  AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  // Move away from the zero-shift start, where the direction loss is steep.
  for (int i = 0; i < 5; ++i) train_step(state);
  const NoiseBatch noise = batch_for(state, 9);
  const Eigen::VectorXd params = state.target.parameters().cast<double>();
  const ObjectiveValue v = evaluate_objective(state, params, noise);

  std::mt19937_64 rng(17);
  Eigen::VectorXd analytic(10), numeric(10);
  for (int k = 0; k < 10; ++k) {
    const int idx = testing::uniform_int(rng, 0, static_cast<int>(params.size()) - 1);
    const double h = 1e-5;
    Eigen::VectorXd plus = params, minus = params;
    plus[idx] += h;
    minus[idx] -= h;
    numeric[k] = (evaluate_objective(state, plus, noise, false).loss_overall -
                  evaluate_objective(state, minus, noise, false).loss_overall) /
                 (2 * h);
    analytic[k] = v.gradient[idx];
  }
  EXPECT_LE(testing::relative_error(analytic, numeric), 1e-3) << analytic.transpose() << "\n" << numeric.transpose();
}

// ---------------------------------------------------------------------------
// Training

TEST(Training, SourceStaysFrozen) {
  TempDir dir;
  AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  const std::string before = state.source.parameter_fingerprint();
  for (int i = 0; i < 5; ++i) train_step(state);
  EXPECT_EQ(state.source.parameter_fingerprint(), before);
  EXPECT_NE(state.target.parameter_fingerprint(), before);
  EXPECT_THROW(state.source.set_parameters(state.source.parameters()), FrozenHandleError);
}

TEST(Training, TrajectoryIsReproducible) {
  TempDir dir;
  AdaptationState state = prepare(testing::toy_two_domain_config(dir.path()));
  std::vector<TrainingLogRecord> log;
  for (int i = 0; i < 300; ++i) log.push_back(train_step(state));

  struct Frozen {
    int iteration;
    double loss_overall;
    double cosine;
  };
  const Frozen frozen[] = {
      {0, 10.401484164667673, 0.0},
      {1, 9.4860402834663109, 0.93038142971497861},
      {10, 9.767321414264277, 0.93827673864030081},
      {100, 9.3807022185423978, 0.99725546058748948},
      {299, 9.3746051608378735, 0.99823551146194089},
  };
  for (const Frozen& f : frozen) {
    EXPECT_EQ(log[f.iteration].iteration, f.iteration);
    EXPECT_NEAR(log[f.iteration].loss_overall, f.loss_overall, 1e-9) << "iteration " << f.iteration;
    EXPECT_NEAR(log[f.iteration].sample_shift_cosine, f.cosine, 1e-9) << "iteration " << f.iteration;
  }
  EXPECT_EQ(state.target.parameter_fingerprint(), "c7177265e244a685edcc42af8adb7d6ebbec667d727284be872c920ca9579f00");
  EXPECT_EQ(state.iteration, 300);
  EXPECT_EQ(state.optimizer.steps(), 300);
}

TEST(Training, NonFiniteUpdateStopsWithTheIteration) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.learning_rate = 1e300;
  c.iterations = 5;
  try {
    run(c, dir / "out");
    FAIL() << "expected divergence";
  } catch (const TrainingDivergedError& e) {
    EXPECT_EQ(e.iteration(), 0);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "out/target.uhgc"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out/train.log"));
  const auto partial = testing::slurp(dir / "out/train.log.incomplete");
  const std::string text(partial.begin(), partial.end());
  EXPECT_TRUE(text.empty());
}

// ---------------------------------------------------------------------------
// run()

TEST(Run, OneIterationWritesOneRecord) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.iterations = 1;
  const RunResult r = run(c, dir / "out");
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].iteration, 0);
  const auto text = testing::slurp(r.log_file);
  const std::string log(text.begin(), text.end());
  EXPECT_EQ(log, r.log[0].to_log_line() + "\n");
  EXPECT_TRUE(std::filesystem::exists(r.timing_file));
  const GeneratorHandle target = load_checkpoint(r.checkpoint);
  EXPECT_EQ(target.architecture_id(), "toy-mlp/z32-h16-32x32x3");
}

TEST(Run, RerunIsByteIdentical) {
  TempDir dir;
  AdaptationConfig c = testing::toy_two_domain_config(dir.path());
  c.iterations = 20;
  const RunResult a = run(c, dir / "a");
  const RunResult b = run(c, dir / "b");
  EXPECT_EQ(testing::slurp(a.checkpoint), testing::slurp(b.checkpoint));
  EXPECT_EQ(testing::slurp(a.log_file), testing::slurp(b.log_file));
}

TEST(Run, DoubleFormattingIsShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

}  // namespace
}  // namespace hybridgen
