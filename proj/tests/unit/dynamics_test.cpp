#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/finite_diff.hpp"
#include "support/random_states.hpp"
#include "tetherkit/dynamics.hpp"
#include "tetherkit/errors.hpp"

namespace {

using namespace tetherkit;
using namespace tetherkit::dynamics;
using tktest::Sampler;

// Newton-Euler with explicit cable tensions as unknowns:
// [v0_dot, w0_dot, w1_dot, w2_dot, T1, T2], solved by least squares.
Vec12 newton_euler(const SystemParams& p, const PlantState& s, const ControlInput& u,
                   const DisturbanceSet& d) {
  const Vec3 q0 = s.payload.q.vec(), q1 = s.cable1.q.vec(), q2 = s.cable2.q.vec();
  const Vec3 w0 = s.payload.w, w1 = s.cable1.w, w2 = s.cable2.w;
  const Vec3 dq0 = d.d_q0 - q0 * q0.dot(d.d_q0);
  const Mat3 I = Mat3::Identity();
  Eigen::Matrix<double, 17, 14> A = Eigen::Matrix<double, 17, 14>::Zero();
  Eigen::Matrix<double, 17, 1> b = Eigen::Matrix<double, 17, 1>::Zero();

  // payload translation: m0 v0_dot + T1 q1 + T2 q2 = m0 g e3 + d_p0
  A.block<3, 3>(0, 0) = p.m0 * I;
  A.block<3, 1>(0, 12) = q1;
  A.block<3, 1>(0, 13) = q2;
  b.segment<3>(0) = p.m0 * p.g * kE3 + d.d_p0;
  // payload rotation: J0 w0_dot = -rho1 T1 q0 x q1 + rho2 T2 q0 x q2 + q0 x d_q0
  A.block<3, 3>(3, 3) = p.J0 * I;
  A.block<3, 1>(3, 12) = p.rho1 * q0.cross(q1);
  A.block<3, 1>(3, 13) = -p.rho2 * q0.cross(q2);
  b.segment<3>(3) = q0.cross(dq0);
  // drone i: m_i a_i - T_i q_i = u_i + d_pi + m_i g e3, with a_i from the cable kinematics
  auto drone = [&](int row, double m, double sign_rho, double rho, double l, const Vec3& qi,
                   const Vec3& wi, int col_w, int col_T, const Vec3& ui, const Vec3& dpi) {
    A.block<3, 3>(row, 0) = m * I;
    A.block<3, 3>(row, 3) = -m * sign_rho * rho * skew(q0);
    A.block<3, 3>(row, col_w) = m * l * skew(qi);
    A.block<3, 1>(row, col_T) = -qi;
    const Vec3 centripetal = sign_rho * rho * w0.cross(w0.cross(q0)) - l * wi.cross(wi.cross(qi));
    b.segment<3>(row) = ui + dpi + m * p.g * kE3 - m * centripetal;
  };
  drone(6, p.m1, +1.0, p.rho1, p.l1, q1, w1, 6, 12, u.u1, d.d_p1);
  drone(9, p.m2, -1.0, p.rho2, p.l2, q2, w2, 9, 13, u.u2, d.d_p2);
  // angular accelerations stay tangent
  A.block<1, 3>(12, 3) = q0.transpose();
  A.block<1, 3>(13, 6) = q1.transpose();
  A.block<1, 3>(14, 9) = q2.transpose();
  const Eigen::Matrix<double, 14, 1> sol = A.colPivHouseholderQr().solve(b);
  EXPECT_LT((A * sol - b).norm(), 1e-9 * (1.0 + b.norm()));
  return sol.head<12>();
}

PlantState table_initial_state() {
  PlantState s;
  s.p0 = Vec3(0.03, -0.05, -0.03);
  s.payload.q = SpherePoint::normalized(kE1);
  const double a = std::numbers::pi / 18.0;
  const Vec3 q = Vec3(0.0, -std::sin(a), std::cos(a));
  s.cable1.q = SpherePoint::normalized(q);
  s.cable2.q = SpherePoint::normalized(q);
  return s;
}

TEST(SystemParams, ValidateRejectsNonPositive) {
  SystemParams p;
  EXPECT_NO_THROW(p.validate());
  p.l2 = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = SystemParams{};
  p.J0 = NAN;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(MassMatrix, TopLeftIsTotalMass) {
  const SystemParams p;
  const auto e1 = SpherePoint::normalized(kE1);
  const auto e3 = SpherePoint::normalized(kE3);
  const Mat12 M = mass_matrix(p, e1, e3, e3);
  EXPECT_NEAR(p.total_mass(), 2.245, 1e-15);
  EXPECT_LT((M.topLeftCorner<3, 3>() - 2.245 * Mat3::Identity()).norm(), 1e-15);
}

TEST(MassMatrix, CouplingBlocksAreAntisymmetricPair) {
  Sampler s(21);
  SystemParams p;
  p.m2 = 0.7;
  p.rho2 = 0.6;
  for (int i = 0; i < 50; ++i) {
    const Mat12 M = mass_matrix(p, s.sphere(), s.sphere(), s.sphere());
    EXPECT_LT((M.block<3, 3>(3, 0) + M.block<3, 3>(0, 3)).norm(), 1e-15);
  }
}

TEST(MassMatrix, ScaledFormIsSymmetric) {
  Sampler s(22);
  SystemParams p;
  p.l1 = 0.8;
  p.l2 = 1.3;
  const Mat12 M = mass_matrix(p, s.sphere(), s.sphere(), s.sphere());
  Vec12 scale;
  scale << Vec3::Ones(), Vec3::Ones(), p.l1 * Vec3::Ones(), p.l2 * Vec3::Ones();
  const Mat12 K = scale.asDiagonal() * M;
  EXPECT_LT((K - K.transpose()).norm(), 1e-14);
}

TEST(MassMatrix, DegenerateCableLengthIsSingular) {
  SystemParams p;
  p.l1 = 1e-14;
  const PlantState s = table_initial_state();
  EXPECT_THROW(accelerations(p, s, {}, {}), SingularMass);
}

TEST(Forcing, AlignedCableRowsVanish) {
  const SystemParams p;
  PlantState s;
  s.payload.q = SpherePoint::normalized(kE1);
  s.cable1.q = SpherePoint::normalized(kE3);
  s.cable2.q = SpherePoint::normalized(kE3);
  const Vec12 F = forcing_vector(p, s, {}, {});
  EXPECT_LT(F.segment<6>(6).norm(), 1e-15);
}

TEST(Accelerations, MatchNewtonEulerOracle) {
  Sampler s(23);
  SystemParams p;
  p.m2 = 0.75;
  p.rho1 = 0.8;
  p.l2 = 1.2;
  for (int i = 0; i < 200; ++i) {
    const PlantState st = s.plant(1.0);
    ControlInput u{s.vec3(5.0), s.vec3(5.0)};
    DisturbanceSet d{s.vec3(), s.vec3(), s.vec3(), s.vec3()};
    const Vec12 a = accelerations(p, st, u, d).stacked();
    const Vec12 ref = newton_euler(p, st, u, d);
    EXPECT_LT((a - ref).norm(), 1e-9 * (1.0 + ref.norm()));
  }
}

TEST(Accelerations, SolveResidualAndTangency) {
  Sampler s(24);
  const SystemParams p;
  for (int i = 0; i < 200; ++i) {
    const PlantState st = s.plant(1.0);
    const ControlInput u{s.vec3(5.0), s.vec3(5.0)};
    const DisturbanceSet d{s.vec3(), Vec3::Zero(), s.vec3(), s.vec3()};
    const Mat12 M = mass_matrix(p, st.payload.q, st.cable1.q, st.cable2.q);
    const Vec12 F = forcing_vector(p, st, u, d);
    const Vec12 raw = solve_mass_system(M, F);
    EXPECT_LT((M * raw - F).norm(), 1e-10 * (1.0 + F.norm()));
    const Accelerations a = accelerations(p, st, u, d);
    EXPECT_LT(std::abs(a.w0_dot.dot(st.payload.q.vec())), 1e-8);
    EXPECT_LT(std::abs(a.w1_dot.dot(st.cable1.q.vec())), 1e-8);
    EXPECT_LT(std::abs(a.w2_dot.dot(st.cable2.q.vec())), 1e-8);
  }
}

TEST(Accelerations, FreeFallIsPureGravity) {
  const SystemParams p;
  const PlantState st = table_initial_state();
  const Accelerations a = accelerations(p, st, {}, {});
  EXPECT_LT((a.v0_dot - p.g * kE3).norm(), 1e-12);
  EXPECT_GT(a.v0_dot.z(), 0.0);
  EXPECT_LT(a.w0_dot.norm() + a.w1_dot.norm() + a.w2_dot.norm(), 1e-12);
}

TEST(Accelerations, DroneDisturbanceEntersLikeThrust) {
  Sampler s(25);
  const SystemParams p;
  const PlantState st = s.plant();
  const ControlInput u{s.vec3(3.0), s.vec3(3.0)};
  DisturbanceSet d;
  d.d_p1 = s.vec3();
  d.d_p2 = s.vec3();
  const ControlInput merged{u.u1 + d.d_p1, u.u2 + d.d_p2};
  const Vec12 a = accelerations(p, st, u, d).stacked();
  const Vec12 b = accelerations(p, st, merged, {}).stacked();
  EXPECT_EQ(a, b);
}

TEST(Equilibrium, SymmetricCableForces) {
  const SystemParams p;
  const CableForces f = equilibrium_cable_forces(p, SpherePoint::normalized(kE1), Vec3::Zero(),
                                                 Vec3::Zero(), 0.0);
  EXPECT_LT((f.mu1 - Vec3(0, 0, 2.1827)).norm(), 1e-4);
  EXPECT_LT((f.mu1 - f.mu2).norm(), 1e-15);
  EXPECT_NEAR(f.mu1.z(), 0.445 * 9.81 / 2.0, 1e-15);
}

TEST(Equilibrium, ForceAndMomentBalance) {
  Sampler s(26);
  SystemParams p;
  p.rho1 = 0.7;
  for (int i = 0; i < 100; ++i) {
    const SpherePoint q0 = s.sphere();
    const Vec3 dp0 = s.vec3(), dq0raw = s.vec3();
    const Vec3 dq0 = dq0raw - q0.vec() * q0.vec().dot(dq0raw);
    const double n0 = s.uniform(-2, 2);
    const CableForces f = equilibrium_cable_forces(p, q0, dp0, dq0raw, n0);
    EXPECT_LT((f.mu1 + f.mu2 - p.m0 * p.g * kE3 - dp0).norm(), 1e-12);
    const Mat3 Q0 = skew(q0.vec());
    EXPECT_LT((p.rho1 * Q0 * f.mu1 - p.rho2 * Q0 * f.mu2 - Q0 * dq0).norm(), 1e-12);

    const CableForces g = equilibrium_cable_forces(p, q0, dp0, dq0raw, n0 + 1.0);
    EXPECT_LT((Q0 * (g.mu1 - f.mu1)).norm(), 1e-12);
    EXPECT_LT((Q0 * (g.mu2 - f.mu2)).norm(), 1e-12);
  }
}

TEST(Equilibrium, HoverHasZeroAccelerations) {
  Sampler s(27);
  const SystemParams p;
  for (int i = 0; i < 100; ++i) {
    DisturbanceSet d{s.vec3(0.5), s.vec3(0.5), s.vec3(), s.vec3()};
    const Equilibrium e = hover_equilibrium(p, s.sphere(), d, s.uniform(-2, 2), s.vec3());
    const Vec12 a = accelerations(p, e.state, e.control, d).stacked();
    EXPECT_LT(a.cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Step, HoverIsStationaryForBothIntegrators) {
  const SystemParams p;
  const DisturbanceSet d{Vec3(0.2, -0.1, 0.3), Vec3::Zero(), Vec3(1, -1, 4), Vec3(1, 1, 2)};
  const Equilibrium e = hover_equilibrium(p, SpherePoint::normalized(Vec3(1, 0.2, 0.1)), d, 0.5);
  for (auto method : {Integrator::kRk4, Integrator::kManifoldEuler}) {
    PlantState st = e.state;
    for (int k = 0; k < 1000; ++k) st = step(p, st, e.control, d, 1e-3, method);
    EXPECT_LT((st.p0 - e.state.p0).norm(), 1e-9);
    EXPECT_LT((st.cable1.q.vec() - e.state.cable1.q.vec()).norm(), 1e-9);
    EXPECT_LT(st.v0.norm() + st.cable2.w.norm(), 1e-9);
  }
}

TEST(Step, ContinuousInTimeStep) {
  Sampler s(28);
  const SystemParams p;
  const PlantState st = s.plant();
  for (double dt : {1e-3, 1e-4, 1e-5}) {
    const PlantState n = step(p, st, {}, {}, dt);
    const double dist = (n.p0 - st.p0).norm() + (n.cable1.q.vec() - st.cable1.q.vec()).norm() +
                        (n.payload.w - st.payload.w).norm();
    EXPECT_LT(dist, 50.0 * dt);
  }
}

TEST(Energy, ConservativeRunDriftIsSmall) {
  const SystemParams p;
  PlantState st = table_initial_state();
  st.v0 = Vec3(0.3, -0.2, 0.1);
  st.payload = manifold::BundlePoint::projected(kE1, Vec3(0, 0.8, 0.5));
  st.cable1 = manifold::BundlePoint::projected(st.cable1.q.vec(), Vec3(1.0, 0.2, 0.0));
  st.cable2 = manifold::BundlePoint::projected(st.cable2.q.vec(), Vec3(-0.5, 0.4, 0.3));
  const double e0 = total_energy(p, st);
  double worst = 0.0;
  for (int k = 0; k < 5000; ++k) {
    st = step(p, st, {}, {}, 1e-3);
    worst = std::max(worst, std::abs(total_energy(p, st) - e0) / std::abs(e0));
    ASSERT_LT(std::abs(st.cable1.q.vec().dot(st.cable1.w)), 1e-6);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Energy, KineticMatchesMassMatrixQuadraticForm) {
  Sampler s(29);
  SystemParams p;
  p.l1 = 0.9;
  p.l2 = 1.4;
  p.rho2 = 0.5;
  for (int i = 0; i < 50; ++i) {
    PlantState st = s.plant(1.0);
    const Mat12 M = mass_matrix(p, st.payload.q, st.cable1.q, st.cable2.q);
    Vec12 nu;
    nu << st.v0, st.payload.w, st.cable1.w, st.cable2.w;
    Vec12 scale;
    scale << Vec3::Ones(), Vec3::Ones(), p.l1 * Vec3::Ones(), p.l2 * Vec3::Ones();
    const double quad = 0.5 * nu.dot(scale.asDiagonal() * M * nu);
    EXPECT_NEAR(kinetic_energy(p, st), quad, 1e-12 * (1.0 + quad));

    PlantState doubled = st;
    doubled.v0 *= 2;
    doubled.payload.w *= 2;
    doubled.cable1.w *= 2;
    doubled.cable2.w *= 2;
    EXPECT_NEAR(kinetic_energy(p, doubled), 4.0 * kinetic_energy(p, st), 1e-12);
  }
}

TEST(Energy, AtRestIsPurePotential) {
  const SystemParams p;
  const PlantState st = table_initial_state();
  EXPECT_EQ(kinetic_energy(p, st), 0.0);
  EXPECT_EQ(total_energy(p, st), potential_energy(p, st));
}

TEST(DroneKinematics, TableInitialPositions) {
  const SystemParams p;
  const DroneKinematics k = drone_kinematics(p, table_initial_state());
  EXPECT_LT((k.p1 - Vec3(1.03, 0.1236, -1.0148)).norm(), 1e-4);
  EXPECT_LT((k.p2 - Vec3(-0.97, 0.1236, -1.0148)).norm(), 1e-4);
  EXPECT_EQ(k.v1, Vec3::Zero());
  EXPECT_EQ(k.v2, Vec3::Zero());
}

TEST(DroneKinematics, VelocityIsTimeDerivativeOfPosition) {
  Sampler s(30);
  const SystemParams p;
  PlantState st = s.plant(1.0);
  const ControlInput u{Vec3(0, 0, -12), Vec3(0, 0, -12)};
  const double dt = 1e-4;
  for (int k = 0; k < 100; ++k) {
    const PlantState n = step(p, st, u, {}, dt);
    const DroneKinematics a = drone_kinematics(p, st), b = drone_kinematics(p, n);
    EXPECT_LT(((b.p1 - a.p1) / dt - 0.5 * (a.v1 + b.v1)).norm(), 1e-6);
    EXPECT_LT(((b.p2 - a.p2) / dt - 0.5 * (a.v2 + b.v2)).norm(), 1e-6);
    st = n;
  }
}

}  // namespace
