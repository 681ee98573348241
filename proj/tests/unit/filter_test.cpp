#include <gtest/gtest.h>

#include "support/finite_diff.hpp"
#include "support/random_states.hpp"
#include "tetherkit/errors.hpp"
#include "tetherkit/filter.hpp"
#include "tetherkit/manifold.hpp"

namespace {

using namespace tetherkit;
using namespace tetherkit::filter;
using tktest::Sampler;

double rel_err(const MatX& a, const MatX& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

struct Fixture {
  SystemParams params;
  SystemState x;
  ControlInput u;
};

Fixture make_fixture(unsigned seed, double rate = 0.5) {
  Sampler s(seed);
  Fixture f;
  f.x.plant = s.plant(rate);
  f.x.d_p1 = s.vec3(0.5);
  f.x.d_p2 = s.vec3(0.5);
  f.u.u1 = -Vec3(0, 0, 12) + s.vec3();
  f.u.u2 = -Vec3(0, 0, 12) + s.vec3();
  return f;
}

// Independent one-step map x ⊕ dt f, built from the ambient rate stack.
SystemState advance(const SystemState& x, const VecX& f, double dt) {
  SystemState out = x;
  out.plant.p0 += dt * f.segment<3>(0);
  out.plant.v0 += dt * f.segment<3>(3);
  manifold::BundlePoint* blocks[] = {&out.plant.payload, &out.plant.cable1, &out.plant.cable2};
  for (int i = 0; i < 3; ++i) {
    const Vec6 v = dt * f.segment<6>(6 + 6 * i);
    *blocks[i] = manifold::ts2_oplus(*blocks[i], v);
  }
  if (f.size() == kAmbientDim) {
    out.d_p1 += dt * f.segment<3>(24);
    out.d_p2 += dt * f.segment<3>(27);
  }
  return out;
}

TEST(FilterState, BoxplusBoxminusRoundTrip) {
  const Fixture f = make_fixture(1);
  Sampler s(2);
  VecX dx(kErrorDim);
  for (int i = 0; i < kErrorDim; ++i) dx[i] = 0.1 * s.normal();
  const SystemState y = boxplus(f.x, dx);
  EXPECT_LT((boxminus(y, f.x) - dx).norm(), 1e-10);
  EXPECT_LT(boxminus(f.x, f.x).norm(), 1e-14);
}

TEST(FilterJacobians, SystemPartialMatchesFiniteDifference) {
  for (unsigned seed = 10; seed < 15; ++seed) {
    const Fixture f = make_fixture(seed);
    const SystemPartials sp = system_partials(f.params, f.x, f.u);
    auto g = [&](const VecX& dx) {
      return f_d(f.params, boxplus(f.x, dx), f.u, VecX::Zero(kNoiseDim));
    };
    const MatX num = tktest::numeric_jacobian(g, VecX::Zero(kErrorDim));
    EXPECT_LT(rel_err(sp.df_ddx, num), 1e-4) << "seed " << seed;

    auto gw = [&](const VecX& w) { return f_d(f.params, f.x, f.u, w); };
    const MatX numw = tktest::numeric_jacobian(gw, VecX::Zero(kNoiseDim));
    EXPECT_LT(rel_err(sp.df_dw, numw), 1e-4) << "seed " << seed;
  }
}

TEST(FilterJacobians, PropagationMatchesFiniteDifference) {
  const double dt = 0.01;
  for (unsigned seed = 20; seed < 25; ++seed) {
    const Fixture f = make_fixture(seed);
    const PropagationJacobians pj = propagation_jacobians(f.params, f.x, f.u, dt);
    const SystemState y = propagate(f.params, f.x, f.u, dt);

    auto gx = [&](const VecX& dx) {
      return boxminus(propagate(f.params, boxplus(f.x, dx), f.u, dt), y);
    };
    EXPECT_LT(rel_err(pj.F_x, tktest::numeric_jacobian(gx, VecX::Zero(kErrorDim))), 1e-4)
        << "seed " << seed;

    auto gw = [&](const VecX& w) {
      return boxminus(advance(f.x, f_d(f.params, f.x, f.u, w), dt), y);
    };
    EXPECT_LT(rel_err(pj.F_w, tktest::numeric_jacobian(gw, VecX::Zero(kNoiseDim))), 1e-4)
        << "seed " << seed;
  }
}

TEST(FilterJacobians, ManifoldPartialsMatchFiniteDifference) {
  const double dt = 0.05;
  const Fixture f = make_fixture(30, 1.5);
  const VecX rate = f_d(f.params, f.x, f.u, VecX::Zero(kNoiseDim));
  const ManifoldPartials mp = manifold_partials(f.x, rate, dt);
  const SystemState y = advance(f.x, rate, dt);

  auto gx = [&](const VecX& dx) { return boxminus(advance(boxplus(f.x, dx), rate, dt), y); };
  EXPECT_LT(rel_err(mp.G_x, tktest::numeric_jacobian(gx, VecX::Zero(kErrorDim))), 1e-6);

  auto gf = [&](const VecX& r) { return boxminus(advance(f.x, r, dt), y); };
  EXPECT_LT(rel_err(dt * mp.G_f, tktest::numeric_jacobian(gf, rate)), 1e-6);
}

TEST(FilterJacobians, ProjectionMatchesFiniteDifference) {
  const Fixture f = make_fixture(40);
  Sampler s(41);
  VecX c(kErrorDim);
  for (int i = 0; i < kErrorDim; ++i) c[i] = 0.2 * s.normal();
  const SystemState post = boxplus(f.x, c);
  auto g = [&](const VecX& dx) { return boxminus(boxplus(f.x, dx), post); };
  const MatX J = projection_jacobian(f.x, c);
  EXPECT_LT(rel_err(J, tktest::numeric_jacobian(g, c)), 1e-6);
  EXPECT_LT((projection_jacobian(f.x, VecX::Zero(kErrorDim)) -
             MatX::Identity(kErrorDim, kErrorDim)).norm(),
            1e-12);
}

TEST(FilterJacobians, MeasurementMatchesFiniteDifference) {
  for (unsigned seed = 50; seed < 55; ++seed) {
    const Fixture f = make_fixture(seed, 1.0);
    auto g = [&](const VecX& dx) -> VecX {
      return measurement_model(f.params, boxplus(f.x, dx));
    };
    const MatX num = tktest::numeric_jacobian(g, VecX::Zero(kErrorDim));
    EXPECT_LT(rel_err(measurement_jacobian(f.params, f.x), num), 1e-4) << "seed " << seed;
    EXPECT_LT(measurement_jacobian(f.params, f.x).rightCols<6>().norm(), 1e-15);
  }
}

TEST(FilterJacobians, VanishingStepGivesIdentity) {
  const Fixture f = make_fixture(60);
  const PropagationJacobians pj = propagation_jacobians(f.params, f.x, f.u, 1e-9);
  EXPECT_LT((pj.F_x - MatX::Identity(kErrorDim, kErrorDim)).norm(), 1e-6);
  EXPECT_LT(pj.F_w.norm(), 1e-6);
}

TEST(FilterUpdate, ZeroResidualLeavesStateUnchanged) {
  const Fixture f = make_fixture(70);
  FilterConfig cfg;
  FilterState fs{f.x, initial_covariance(FilterMode::kDisturbanceObserver)};
  UpdateDiagnostics diag;
  const FilterState out = update(cfg, fs, measurement_model(cfg.params, f.x), &diag);
  EXPECT_LT(diag.correction.norm(), 1e-12);
  EXPECT_LT(boxminus(out.x, f.x).norm(), 1e-12);
  EXPECT_LT(out.P.trace(), fs.P.trace());
}

// The Kalman correction is the minimizer of
// |dx|^2_{P^-1} + |r - H dx|^2_{R^-1}, i.e. the solution of the normal equations.
TEST(FilterUpdate, CorrectionSolvesNormalEquations) {
  for (unsigned seed = 80; seed < 84; ++seed) {
    const Fixture f = make_fixture(seed);
    Sampler s(seed + 100);
    FilterConfig cfg;
    MatX L = MatX::Zero(kErrorDim, kErrorDim);
    for (int i = 0; i < kErrorDim; ++i)
      for (int j = 0; j <= i; ++j) L(i, j) = 0.1 * s.normal();
    L.diagonal().array() += 0.3;
    FilterState fs{f.x, L * L.transpose()};
    Vec12 z = measurement_model(cfg.params, f.x);
    for (int i = 0; i < 12; ++i) z[i] += 0.05 * s.normal();

    UpdateDiagnostics diag;
    const FilterState out = update(cfg, fs, z, &diag);

    const MatX H = measurement_jacobian(cfg.params, f.x);
    const MatX Rinv = cfg.noise.R.inverse();
    const MatX info = fs.P.inverse() + H.transpose() * Rinv * H;
    const VecX dx = info.ldlt().solve(H.transpose() * Rinv * diag.innovation);
    EXPECT_LT((diag.correction - dx).norm(), 1e-8 * std::max(1.0, dx.norm()));

    const MatX J = projection_jacobian(f.x, diag.correction);
    const MatX P_map = J * info.inverse() * J.transpose();
    EXPECT_LT(rel_err(out.P, P_map), 1e-8);
  }
}

TEST(FilterUpdate, GateRejectsOutliers) {
  const Fixture f = make_fixture(90);
  FilterConfig cfg;
  cfg.gate = default_gate();
  EXPECT_NEAR(*cfg.gate, 29.8, 0.2);
  FilterState fs{f.x, initial_covariance(FilterMode::kDisturbanceObserver)};
  Vec12 z = measurement_model(cfg.params, f.x);
  EXPECT_NO_THROW(update(cfg, fs, z));
  z[0] += 50.0;
  EXPECT_THROW(update(cfg, fs, z), InnovationGateExceeded);
}

TEST(FilterCovariance, StaysSymmetricPositiveOverLongRun) {
  const SystemParams params;
  const auto eq = dynamics::hover_equilibrium(params, manifold::SpherePoint::normalized(kE1),
                                              dynamics::DisturbanceSet{}, 0.0, Vec3::Zero());
  FilterConfig cfg;
  SystemState truth;
  truth.plant = eq.state;
  FilterState fs{truth, initial_covariance(FilterMode::kDisturbanceObserver)};
  Sampler s(95);
  const double dt = 0.01;
  for (int k = 0; k < 1000; ++k) {
    Vec12 z = measurement_model(params, truth);
    for (int i = 0; i < 12; ++i) z[i] += 0.1 * s.normal();
    fs = filter_step(cfg, fs, eq.control, z, dt);
    ASSERT_EQ((fs.P - fs.P.transpose()).norm(), 0.0);
    const double min_eig = Eigen::SelfAdjointEigenSolver<MatX>(fs.P).eigenvalues().minCoeff();
    ASSERT_GE(min_eig, -1e-12) << "step " << k;
  }
  EXPECT_LT(boxminus(fs.x, truth).head<3>().norm(), 0.2);
}

TEST(FilterCovariance, ConditioningClampsRoundoffAndRejectsIndefinite) {
  MatX P = MatX::Identity(3, 3);
  P(2, 2) = -1e-14;
  const MatX C = condition_covariance(P);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatX>(C).eigenvalues().minCoeff(), 0.0);
  P(2, 2) = -0.1;
  EXPECT_THROW(condition_covariance(P), NumericalError);
}

TEST(FilterBaseline, DimensionsAndSubBlocks) {
  Fixture f = make_fixture(100);
  f.x.d_p1.setZero();
  f.x.d_p2.setZero();
  const auto full = propagation_jacobians(f.params, f.x, f.u, 0.01);
  const auto base = propagation_jacobians(f.params, f.x, f.u, 0.01, FilterMode::kBaseline);
  ASSERT_EQ(base.F_x.rows(), kBaselineErrorDim);
  ASSERT_EQ(base.F_w.cols(), kBaselineNoiseDim);
  EXPECT_EQ(base.F_x, MatX(full.F_x.topLeftCorner(18, 18)));
  EXPECT_EQ(initial_covariance(FilterMode::kBaseline).rows(), kBaselineErrorDim);
  EXPECT_EQ(measurement_jacobian(f.params, f.x, FilterMode::kBaseline).cols(), kBaselineErrorDim);

  FilterConfig cfg;
  cfg.mode = FilterMode::kBaseline;
  FilterState fs{f.x, initial_covariance(FilterMode::kBaseline), FilterMode::kBaseline};
  const FilterState out =
      filter_step(cfg, fs, f.u, measurement_model(f.params, f.x) + Vec12::Constant(0.01), 0.01);
  EXPECT_EQ(out.P.rows(), kBaselineErrorDim);
  EXPECT_EQ(out.x.d_p1, Vec3::Zero());
}

TEST(FilterBaseline, FullFilterWithConvergedForcesTracksBaseline) {
  Fixture f = make_fixture(110);
  f.x.d_p1.setZero();
  f.x.d_p2.setZero();
  const SystemState a = propagate(f.params, f.x, f.u, 0.01);
  const SystemState b = propagate(f.params, f.x, f.u, 0.01, FilterMode::kBaseline);
  EXPECT_EQ(boxminus(a, b).norm(), 0.0);
}

TEST(FilterDeterminism, RepeatedStepsAreBitwiseEqual) {
  const Fixture f = make_fixture(120);
  FilterConfig cfg;
  FilterState fs{f.x, initial_covariance(FilterMode::kDisturbanceObserver)};
  const Vec12 z = measurement_model(cfg.params, f.x) + Vec12::Constant(0.02);
  const FilterState a = filter_step(cfg, fs, f.u, z, 0.01);
  const FilterState b = filter_step(cfg, fs, f.u, z, 0.01);
  EXPECT_EQ(a.P, b.P);
  EXPECT_EQ(to_ambient(a.x), to_ambient(b.x));
}

TEST(FilterConfig, NoiseValidation) {
  NoiseConfig n = NoiseConfig::defaults();
  EXPECT_NO_THROW(n.validate());
  n.R(3, 3) = -1.0;
  EXPECT_THROW(n.validate(), ConfigError);
  n = NoiseConfig::defaults();
  n.Q = MatX::Identity(6, 6);
  EXPECT_THROW(n.validate(), ConfigError);
}

TEST(FilterNees, ZeroForExactEstimate) {
  const Fixture f = make_fixture(130);
  FilterState fs{f.x, initial_covariance(FilterMode::kDisturbanceObserver)};
  EXPECT_EQ(nees(fs, f.x), 0.0);
  VecX e = VecX::Zero(kErrorDim);
  e[0] = 0.1;
  EXPECT_NEAR(nees(fs, boxplus(f.x, e)), 1.0, 1e-9);
}

}  // namespace
