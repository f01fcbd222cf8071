#include <ktmpc/errors.hpp>
#include <ktmpc/koopman_model.hpp>
#include <ktmpc/model_io.hpp>
#include <ktmpc/plant.hpp>
#include <ktmpc/simulator.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ktmpc;

namespace {

KoopmanModel example_model() { return Plant::numerical_example().exact_model(); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Noiseless data from the lifted example, starting from random lifted states.
TrajectoryData lifted_linear_data(const KoopmanModel& m, int n_traj, int len, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const Plant plant = Plant::numerical_example();
  TrajectoryData data;
  for (int i = 0; i < n_traj; ++i) {
    Trajectory t;
    t.states.push_back(vec({2 * d(rng), 2 * d(rng)}));
    for (int k = 0; k < len; ++k) {
      t.inputs.push_back(vec({d(rng)}));
      t.states.push_back(plant.f(t.states.back(), t.inputs.back()));
    }
    data.trajectories.push_back(std::move(t));
  }
  (void)m;
  return data;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ktmpc_test_" + name);
}

}  // namespace

TEST(Lifting, ExampleLiftingAppendsSquare) {
  const Lifting l = Plant::numerical_example().exact_lifting();
  EXPECT_EQ(l.lifted_dim(), 3);
  EXPECT_TRUE(l(vec({2, 3})).isApprox(vec({2, 3, 4})));
}

TEST(Lifting, PolynomialOfZeroIsZero) {
  const Lifting l(3, PolynomialLifting{3});
  EXPECT_TRUE(l(Vector::Zero(3)).isZero(0.0));
  // 3 raw + (degree 2: 6) + (degree 3: 10)
  EXPECT_EQ(l.lifted_dim(), 3 + 6 + 10);
}

TEST(Lifting, RbfAtCenterIsOne) {
  const Lifting l(2, RbfLifting{{vec({0.5, -1.0}), vec({2.0, 2.0})}, 1.0});
  const Vector z = l(vec({0.5, -1.0}));
  EXPECT_EQ(z.size(), 4);
  EXPECT_DOUBLE_EQ(z(2), 1.0);
  EXPECT_NEAR(z(3), std::exp(-(1.5 * 1.5 + 3.0 * 3.0)), 1e-15);
}

TEST(Lifting, AnglePrefeatures) {
  const Lifting l(3, PolynomialLifting{2}, {2});
  // raw (3) + sin, cos + 10 quadratic monomials of (px, py, s, c)
  EXPECT_EQ(l.lifted_dim(), 15);
  const Vector z = l(vec({1.0, 2.0, 0.3}));
  EXPECT_TRUE(z.head(3).isApprox(vec({1.0, 2.0, 0.3})));
}

TEST(Lifting, DimensionMismatchThrows) {
  const Lifting l(2, PolynomialLifting{2});
  EXPECT_THROW(l(Vector::Zero(3)), DimensionError);
}

TEST(KoopmanModel, PredictExamples) {
  const KoopmanModel m = example_model();
  EXPECT_TRUE(m.predict(vec({0, 1, 0}), vec({-1})).isApprox(vec({0, 1, 0})));
  EXPECT_TRUE(m.predict(Vector::Zero(3), Vector::Zero(1)).isZero(0.0));
  EXPECT_TRUE(m.predict(vec({1, 0, 0}), vec({0})).isApprox(vec({-0.1, 0, 0})));
}

TEST(KoopmanModel, SteadyPointByElimination) {
  // (I - A) z = B u with u = -1: z1 = 0, z3 = 0, (1 - mu) z2 = u
  const KoopmanModel m = example_model();
  const Matrix IA = Matrix::Identity(3, 3) - m.A();
  const Vector z = IA.fullPivLu().solve(m.B() * vec({-1}));
  EXPECT_TRUE(z.isApprox(vec({0, 1, 0}), 1e-14));
}

TEST(KoopmanModel, DecodeAndOutput) {
  const KoopmanModel m = example_model();
  EXPECT_TRUE(m.decode(vec({2, 3, 4})).isApprox(vec({2, 3})));
  EXPECT_TRUE(m.decode(Vector::Zero(3)).isZero(0.0));
  EXPECT_DOUBLE_EQ(m.output(vec({0, 1, 0}))(0), 1.0);
  EXPECT_DOUBLE_EQ(m.output(Vector::Zero(3))(0), 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 20; ++i) {
    const Vector x = vec({n(rng), n(rng)});
    EXPECT_EQ(m.decode(m.lift(x)), x);
    const Vector z = vec({n(rng), n(rng), n(rng)});
    EXPECT_NEAR(m.output(z)(0), (Plant::numerical_example().C() * m.decode(z))(0), 1e-15);
  }
}

TEST(KoopmanModel, InconsistentDimensionsThrow) {
  const Lifting l = Plant::numerical_example().exact_lifting();
  EXPECT_THROW(KoopmanModel(Matrix::Zero(3, 3), Matrix::Zero(2, 1), Matrix::Zero(2, 3), Matrix::Zero(1, 3), l),
               DimensionError);
  const KoopmanModel m = example_model();
  EXPECT_THROW(m.predict(Vector::Zero(2), Vector::Zero(1)), DimensionError);
}

TEST(FitEdmd, RecoversExampleModel) {
  const KoopmanModel truth = example_model();
  const TrajectoryData data = lifted_linear_data(truth, 50, 10, 1);
  const KoopmanModel fit = fit_edmd(data, truth.lifting(), Plant::numerical_example().C(), 0.0);
  EXPECT_LE((fit.A() - truth.A()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((fit.B() - truth.B()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(fit.C_y().isApprox(truth.C_y()));
}

TEST(FitEdmd, ZeroDataWithRidgeGivesZeroModel) {
  TrajectoryData data;
  for (int i = 0; i < 3; ++i) {
    Trajectory t;
    for (int k = 0; k < 4; ++k) t.inputs.push_back(Vector::Zero(1));
    for (int k = 0; k < 5; ++k) t.states.push_back(Vector::Zero(2));
    data.trajectories.push_back(t);
  }
  const KoopmanModel fit = fit_edmd(data, Plant::numerical_example().exact_lifting(), Matrix::Identity(2, 2), 1e-3);
  EXPECT_TRUE(fit.A().isZero(0.0));
  EXPECT_TRUE(fit.B().isZero(0.0));
}

TEST(FitEdmd, UnderdeterminedThrows) {
  TrajectoryData data;
  Trajectory t;
  t.states = {vec({1, 0}), vec({0.5, 1}), vec({0.2, 0.1})};
  t.inputs = {vec({1}), vec({0})};
  data.trajectories.push_back(t);
  EXPECT_THROW(fit_edmd(data, Plant::numerical_example().exact_lifting(), Matrix::Identity(2, 2), 0.0),
               UnderdeterminedFit);
}

TEST(FitEdmd, RankDeficientWithoutRidgeThrows) {
  TrajectoryData data;
  Trajectory t;
  for (int k = 0; k < 10; ++k) t.inputs.push_back(vec({0}));
  for (int k = 0; k < 11; ++k) t.states.push_back(vec({1, 1}));
  data.trajectories.push_back(t);
  EXPECT_THROW(fit_edmd(data, Plant::numerical_example().exact_lifting(), Matrix::Identity(2, 2), 0.0),
               UnderdeterminedFit);
}

TEST(FitEdmd, ResidualIsMinimalUnderPerturbation) {
  const Plant uni = Plant::unicycle(0.1);
  const TrajectoryData data = generate_training_data(
      uni, 40, 10, Zonotope::box(vec({0.5, 0}), vec({0.5, 2})), Zonotope::box(Vector::Zero(3), vec({1, 1, 3})), 5);
  const Lifting l(3, PolynomialLifting{2}, {2});
  const KoopmanModel fit = fit_edmd(data, l, uni.C(), 0.0);
  const double best = edmd_residual(data, l, fit.A(), fit.B());
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    Matrix dA = Matrix::NullaryExpr(fit.A().rows(), fit.A().cols(), [&] { return n(rng); });
    Matrix dB = Matrix::NullaryExpr(fit.B().rows(), fit.B().cols(), [&] { return n(rng); });
    const double eps = 1e-4;
    EXPECT_GE(edmd_residual(data, l, fit.A() + eps * dA, fit.B() + eps * dB), best);
  }
}

TEST(EstimateDisturbance, ExactModelGivesZeroBoxes) {
  const KoopmanModel m = example_model();
  const TrajectoryData data = lifted_linear_data(m, 10, 10, 2);
  const DisturbanceModel d = estimate_disturbance_sets(m, data, 1.0);
  EXPECT_LE(d.W.generators.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(d.V.generators.isZero(0.0));
}

TEST(EstimateDisturbance, UniformResidualsInsideTrueBoxAndGapShrinks) {
  // Identity lifting, x+ = w with w uniform in [-0.2, 0.2]^3 and a zero model.
  const Lifting l = Lifting::identity(3);
  const KoopmanModel zero(Matrix::Zero(3, 3), Matrix::Zero(3, 1), Matrix::Identity(3, 3), Matrix::Identity(3, 3), l);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> w(-0.2, 0.2);
  double previous_gap = 1.0;
  for (int samples : {20, 200, 2000}) {
    TrajectoryData data;
    Trajectory t;
    t.states.push_back(Vector::Zero(3));
    for (int k = 0; k < samples; ++k) {
      t.inputs.push_back(Vector::Zero(1));
      t.states.push_back(vec({w(rng), w(rng), w(rng)}));
    }
    data.trajectories.push_back(t);
    const DisturbanceModel d = estimate_disturbance_sets(zero, data, 1.0);
    const auto [lo, hi] = interval_hull(d.W);
    EXPECT_TRUE((lo.array() >= -0.2).all());
    EXPECT_TRUE((hi.array() <= 0.2).all());
    const double gap = std::max((lo.array() + 0.2).maxCoeff(), (0.2 - hi.array()).maxCoeff());
    EXPECT_LT(gap, previous_gap);
    previous_gap = gap;
  }
}

TEST(EstimateDisturbance, InflationScalesGenerators) {
  const Plant uni = Plant::unicycle(0.1);
  const TrajectoryData data = generate_training_data(
      uni, 20, 10, Zonotope::box(vec({0.5, 0}), vec({0.5, 2})), Zonotope::box(Vector::Zero(3), vec({1, 1, 3})), 6);
  const KoopmanModel m = fit_edmd(data, Lifting(3, PolynomialLifting{2}, {2}), uni.C());
  const DisturbanceModel d1 = estimate_disturbance_sets(m, data, 1.0);
  const DisturbanceModel d2 = estimate_disturbance_sets(m, data, 2.0);
  EXPECT_TRUE(d2.W.generators.isApprox(2.0 * d1.W.generators));
  EXPECT_TRUE(d2.W.center.isApprox(d1.W.center));
}

TEST(EstimateDisturbance, EveryResidualIsCoveredAndOriginInside) {
  const Plant uni = Plant::unicycle(0.1);
  const TrajectoryData data = generate_training_data(
      uni, 30, 10, Zonotope::box(vec({0.5, 0}), vec({0.5, 2})), Zonotope::box(Vector::Zero(3), vec({1, 1, 3})), 7);
  const KoopmanModel m = fit_edmd(data, Lifting(3, PolynomialLifting{2}, {2}), uni.C());
  const DisturbanceModel d = estimate_disturbance_sets(m, data, 1.0);
  const auto [lo, hi] = interval_hull(d.W);
  EXPECT_TRUE((lo.array() <= 0).all() && (hi.array() >= 0).all());
  for (const auto& t : data.trajectories)
    for (std::size_t k = 0; k < t.inputs.size(); ++k) {
      const Vector w = m.lift(t.states[k + 1]) - m.predict(m.lift(t.states[k]), t.inputs[k]);
      EXPECT_TRUE((w.array() >= lo.array() - 1e-12).all() && (w.array() <= hi.array() + 1e-12).all());
    }
}

TEST(EstimateDisturbance, EmptyDataThrows) {
  EXPECT_THROW(estimate_disturbance_sets(example_model(), TrajectoryData{}, 1.0), InputError);
}

TEST(ModelIo, JsonRoundTripIsBitFaithful) {
  const Plant uni = Plant::unicycle(0.1);
  const TrajectoryData data = generate_training_data(
      uni, 30, 10, Zonotope::box(vec({0.5, 0}), vec({0.5, 2})), Zonotope::box(Vector::Zero(3), vec({1, 1, 3})), 8);
  const KoopmanModel m = fit_edmd(data, Lifting(3, PolynomialLifting{2}, {2}), uni.C());
  const KoopmanModel back = model_from_json(model_to_json(m));
  EXPECT_EQ(back.A(), m.A());
  EXPECT_EQ(back.B(), m.B());
  EXPECT_EQ(back.C_x(), m.C_x());
  EXPECT_EQ(back.C_y(), m.C_y());
  EXPECT_EQ(back.lifting().monomials(), m.lifting().monomials());
  EXPECT_EQ(back.lifting().angle_indices(), m.lifting().angle_indices());
}

TEST(ModelIo, RbfLiftingRoundTrip) {
  const Lifting l(2, RbfLifting{{vec({0.1, 0.2}), vec({-1.0 / 3.0, 2.0})}, 0.7});
  const Lifting back = lifting_from_json(lifting_to_json(l));
  const Vector x = vec({0.3, -0.4});
  EXPECT_EQ(back(x), l(x));
}

TEST(ModelIo, TrajectoryCsvRoundTrip) {
  const TrajectoryData data = generate_training_data(
      Plant::numerical_example(), 3, 4, Zonotope::symmetric_box(vec({3})), Zonotope::symmetric_box(vec({1, 1})), 9);
  const auto path = temp_path("traj.csv");
  write_trajectory_csv(data, path);
  const TrajectoryData back = read_trajectory_csv(path);
  ASSERT_EQ(back.trajectories.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.trajectories[i].states, data.trajectories[i].states);
    EXPECT_EQ(back.trajectories[i].inputs, data.trajectories[i].inputs);
  }
  std::filesystem::remove(path);
}

TEST(ModelIo, MalformedCsvThrowsInputError) {
  const auto path = temp_path("bad.csv");
  {
    std::ofstream f(path);
    f << "traj_id,t,x_0,x_1,u_0\n0,0,1.0,abc,0.5\n";
  }
  EXPECT_THROW(read_trajectory_csv(path), InputError);
  {
    std::ofstream f(path);
    f << "t,x_0,u_0\n0,1,2\n";
  }
  EXPECT_THROW(read_trajectory_csv(path), InputError);
  {
    std::ofstream f(path);
    f << "traj_id,t,x_0,u_0\n0,0,1,0.5\n0,1,2,0.5\n";
  }
  EXPECT_THROW(read_trajectory_csv(path), InputError);  // no terminating row
  std::filesystem::remove(path);
  EXPECT_THROW(read_trajectory_csv(temp_path("missing.csv")), InputError);
}
