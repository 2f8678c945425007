#include "sdpinn/trainer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>
#include <cstdlib>
#include <limits>

using namespace sdpinn;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.m1 = 8;
  g.m2 = 8;
  g.t = 30;
  return g;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.mlp = MlpConfig::toy();
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  cfg.weights.f = 1e-3;
  cfg.history_every = 10;
  return cfg;
}

struct Problem {
  GridSpec grid;
  CoefficientField c2;
  TrainingData data;
  std::vector<SparseEntries> given;
};

Problem small_problem(const GridSpec& g) {
  Problem p{g, make_lowrank_field(g, 2, 1.0, 4.0, Sign::NonNegative, 5), {}, {}};
  const CoefficientField zero{Matrix::Zero(g.m1, g.m2), Sign::NonNegative, CoefficientUnits::Attenuation};
  PulseSpec pulses;
  pulses.min_width = 0.25;
  pulses.max_width = 0.35;
  p.data = {simulate(zero, p.c2, g, InitialCondition::GaussianPulse, 6, pulses), Mask::full(g.m1, g.m2), 0.0};
  Mask rim(g.m1, g.m2);
  for (int i = 0; i < g.m1; ++i)
    for (int j = 0; j < g.m2; ++j)
      if (i == 0 || j == 0 || i == g.m1 - 1 || j == g.m2 - 1) rim.set(i, j);
  p.given = {project(rim, p.c2)};
  return p;
}

// One-scalar state: the smallest net, every gradient zero except `grads` entry 0.
struct Scalar {
  TrainState state;
  Gradients grads;
};

Scalar scalar_state() {
  Scalar s;
  s.state.params = init_params({2, 1}, 3);
  s.grads = Gradients::zeros_like(s.state.params, s.state.coeffs);
  return s;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.adam_beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.epochs = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(ParameterBlocks, OrderAndCount) {
  const GridSpec g = small_grid();
  TrainConfig cfg = small_config();
  TrainState s = initial_state(g, wave_terms(true, 2, 3), cfg);
  const auto blocks = parameter_blocks(s);
  ASSERT_EQ(blocks.size(), std::size_t(2 * 3 + 2 * 2));
  EXPECT_EQ(blocks[0].data(), s.params.weights[0].data());
  EXPECT_EQ(blocks[1].data(), s.params.biases[0].data());
  EXPECT_EQ(blocks[6].data(), s.coeffs[0].factors.u.data());
  EXPECT_EQ(blocks[9].data(), s.coeffs[1].factors.v.data());
  EXPECT_EQ(blocks[9].size(), std::size_t(g.m2 * 3));
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  Scalar s = scalar_state();
  TrainConfig cfg;
  adam_step(s.state, s.grads, cfg);
  for (auto& m : s.state.moments) {
    m.m.setConstant(0.4);
    m.v.setConstant(0.2);
  }
  adam_step(s.state, s.grads, cfg);
  EXPECT_DOUBLE_EQ(s.state.moments[0].m[0], 0.9 * 0.4);
  EXPECT_DOUBLE_EQ(s.state.moments[0].v[0], 0.999 * 0.2);

  Scalar fresh = scalar_state();
  const Vector p0 = flatten(fresh.state.params);
  for (int k = 0; k < 3; ++k) adam_step(fresh.state, fresh.grads, cfg);
  EXPECT_EQ(flatten(fresh.state.params), p0);
  EXPECT_EQ(fresh.state.step, 3);
}

TEST(Adam, FirstStepMatchesHandCalculation) {
  Scalar s = scalar_state();
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  s.grads.net.weights[0](0, 0) = 0.5;
  const double w0 = s.state.params.weights[0](0, 0);
  const double b0 = s.state.params.biases[0][0];
  adam_step(s.state, s.grads, cfg);
  // m = 0.05, v = 0.00025; corrected 0.5 and 0.25.
  EXPECT_NEAR(s.state.params.weights[0](0, 0) - w0, -0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(s.state.params.biases[0][0], b0);
}

TEST(Adam, SecondIdenticalStepMatchesHandCalculation) {
  Scalar s = scalar_state();
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  s.grads.net.weights[0](0, 0) = -2.0;
  const double w0 = s.state.params.weights[0](0, 0);
  adam_step(s.state, s.grads, cfg);
  const double w1 = s.state.params.weights[0](0, 0);
  adam_step(s.state, s.grads, cfg);
  // m = 0.9 * -0.2 - 0.2 = -0.38, m_hat = -0.38 / 0.19 = -2
  // v = 0.999 * 0.004 + 0.004 = 0.007996, v_hat = 0.007996 / 0.001999 = 4
  const double m_hat = -0.38 / 0.19;
  const double v_hat = 0.007996 / (1.0 - 0.999 * 0.999);
  EXPECT_NEAR(w1 - w0, 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(s.state.params.weights[0](0, 0) - w1, -0.01 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
}

TEST(Adam, NonFiniteGradientIsRejected) {
  Scalar s = scalar_state();
  s.grads.net.biases[1][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(s.state, s.grads, TrainConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(Train, ZeroEpochsReturnsInitialState) {
  const Problem p = small_problem(small_grid());
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const TrainResult r = train(p.data, p.given, wave_terms(false, 3, 3), cfg);
  const TrainState init = initial_state(p.grid, wave_terms(false, 3, 3), cfg);
  EXPECT_EQ(flatten(r.state.params), flatten(init.params));
  EXPECT_EQ(r.state.coeffs[0].factors.u, init.coeffs[0].factors.u);
  EXPECT_EQ(r.state.step, 0);
  EXPECT_TRUE(r.state.history.empty());
  ASSERT_EQ(r.lambda.size(), 1u);
  EXPECT_EQ(r.lambda[0].values, compose(init.coeffs[0]).values);
}

TEST(Train, CentredInputsSpanUnitBox) {
  const GridSpec g = small_grid();
  TrainConfig cfg = small_config();
  const TrainState plain = [&] {
    TrainConfig c = cfg;
    c.center_inputs = false;
    return initial_state(g, wave_terms(false, 1, 1), c);
  }();
  const TrainState centred = initial_state(g, wave_terms(false, 1, 1), cfg);
  // The first layer of the centred net equals the plain one applied to the
  // box mapped onto [-1, 1]^3.
  const double hx = 0.5 * (g.m1 - 1) * g.dx, hy = 0.5 * (g.m2 - 1) * g.dy, ht = 0.5 * (g.t - 1) * g.dt;
  for (const auto& in : {std::array<double, 3>{0, 0, 0}, std::array<double, 3>{0.3, 0.6, 0.1}}) {
    const Vector x = Eigen::Vector3d(in[0], in[1], in[2]);
    const Vector s = Eigen::Vector3d(in[0] / hx - 1, in[1] / hy - 1, in[2] / ht - 1);
    const Vector zc = centred.params.weights[0] * x + centred.params.biases[0];
    const Vector zp = plain.params.weights[0] * s + plain.params.biases[0];
    EXPECT_LT((zc - zp).norm(), 1e-12 * (1 + zp.norm()));
  }
}

TEST(Train, LossDecreases) {
  const Problem p = small_problem(small_grid());
  TrainConfig cfg = small_config();
  cfg.epochs = 300;
  const TrainResult r = train(p.data, p.given, wave_terms(false, 3, 3), cfg);
  ASSERT_EQ(r.state.history.size(), 300u);
  ASSERT_FALSE(r.state.full_history.empty());
  EXPECT_EQ(r.state.full_history.back().epoch, 300);
  EXPECT_LT(r.state.full_history.back().total, 0.1 * r.state.full_history.front().total);
  EXPECT_LT(r.state.history.back().total, r.state.history.front().total);
}

TEST(Train, DeterministicForFixedSeedSingleThreaded) {
  sdpinn::testing::ThreadGuard one("1");
  const Problem p = small_problem(small_grid());
  TrainConfig cfg = small_config();
  const auto terms = wave_terms(true, 2, 2);
  const std::vector<SparseEntries> given{SparseEntries{}, p.given[0]};
  const TrainResult a = train(p.data, given, terms, cfg);
  const TrainResult b = train(p.data, given, terms, cfg);
  EXPECT_EQ(flatten(a.state.params), flatten(b.state.params));
  EXPECT_EQ(a.lambda[1].values, b.lambda[1].values);
  cfg.seed = 2;
  const TrainResult c = train(p.data, given, terms, cfg);
  EXPECT_NE(a.lambda[1].values, c.lambda[1].values);
}

TEST(Train, NonFiniteGradientNamesTheLossTerm) {
  Problem p = small_problem(small_grid());
  p.given[0][0].value = std::numeric_limits<double>::quiet_NaN();
  try {
    train(p.data, p.given, wave_terms(false, 3, 3), small_config());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("loss_g"), std::string::npos) << e.what();
  }
}

TEST(Train, DivergenceGuardAborts) {
  const Problem p = small_problem(small_grid());
  TrainConfig cfg = small_config();
  cfg.learning_rate = 50.0;
  cfg.divergence_factor = 10.0;
  cfg.epochs = 300;
  EXPECT_THROW(train(p.data, p.given, wave_terms(false, 3, 3), cfg), DivergenceError);
}

TEST(Train, RejectsInconsistentInputs) {
  const Problem p = small_problem(small_grid());
  const TrainConfig cfg = small_config();
  TrainingData bad = p.data;
  bad.available = Mask(4, 4);
  EXPECT_THROW(train(bad, p.given, wave_terms(false, 3, 3), cfg), Error);
  bad = p.data;
  bad.available = Mask(8, 8);
  EXPECT_THROW(train(bad, p.given, wave_terms(false, 3, 3), cfg), Error);
  EXPECT_THROW(train(p.data, p.given, wave_terms(true, 3, 3), cfg), Error);
}

// A network trained against the data and the PDE with the true coefficient
// (held fixed) leaves a far smaller residual for it than for one inflated by 50%.
TEST(Train, TrainedNetPrefersTrueCoefficients) {
  const Problem p = small_problem(small_grid());
  Eigen::JacobiSVD<Matrix> svd(p.c2.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector root = svd.singularValues().head(2).cwiseSqrt();
  TrainState s;
  s.params = init_params(MlpConfig::toy(), 9);
  s.coeffs.terms.push_back({{svd.matrixU().leftCols(2) * root.asDiagonal(), svd.matrixV().leftCols(2) * root.asDiagonal()},
                            Sign::NonNegative, PdeTerm::Laplacian, "c2"});
  ASSERT_LT((compose(s.coeffs[0]).values - p.c2.values).norm(), 1e-10);

  TrainConfig cfg = small_config();
  cfg.learning_rate = 3e-3;
  const CollocationSet all = CollocationSet::all(p.grid);
  std::vector<DataSample> samples;
  for (int i = 0; i < p.grid.m1; ++i)
    for (int j = 0; j < p.grid.m2; ++j)
      for (int n = 0; n < p.grid.t; ++n)
        samples.push_back({p.grid.x(i), p.grid.y(j), p.grid.time(n), p.data.field(i, j, n)});
  for (int step = 0; step < 1500; ++step) {
    Gradients g = Gradients::zeros_like(s.params, s.coeffs);
    accumulate_loss_u(s.params, samples, 1.0, &g.net);
    accumulate_loss_f(s.params, s.coeffs, all, p.grid, 1e-2, &g);
    g.factors[0].u.setZero();
    g.factors[0].v.setZero();
    adam_step(s, g, cfg);
  }
  CoefficientSet inflated = s.coeffs;
  inflated[0].factors.u *= 1.5;
  const double good = loss_f(s.params, s.coeffs, all, p.grid);
  const double bad = loss_f(s.params, inflated, all, p.grid);
  EXPECT_LT(good, 0.1 * bad) << "true " << good << " inflated " << bad;
}
