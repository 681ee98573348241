#include "tetherkit/dynamics.hpp"

#include <cmath>
#include <string>

#include "tetherkit/errors.hpp"

namespace tetherkit::dynamics {

namespace {

void require_positive(const char* name, double v) {
  if (!std::isfinite(v) || v <= 0.0) {
    throw ConfigError(std::string("parameter ") + name + " must be finite and > 0, got " +
                      std::to_string(v));
  }
}

Vec3 drop_along(const Vec3& v, const Vec3& axis) { return v - axis * axis.dot(v); }

using Ambient = Eigen::Matrix<double, 24, 1>;

Ambient pack(const PlantState& s) {
  Ambient x;
  x << s.p0, s.v0, s.payload.q.vec(), s.payload.w, s.cable1.q.vec(), s.cable1.w,
      s.cable2.q.vec(), s.cable2.w;
  return x;
}

PlantState unpack(const Ambient& x) {
  PlantState s;
  s.p0 = x.segment<3>(0);
  s.v0 = x.segment<3>(3);
  s.payload = BundlePoint::projected(x.segment<3>(6), x.segment<3>(9));
  s.cable1 = BundlePoint::projected(x.segment<3>(12), x.segment<3>(15));
  s.cable2 = BundlePoint::projected(x.segment<3>(18), x.segment<3>(21));
  return s;
}

// Intermediate RK stages keep q off the sphere; evaluate with normalized copies.
Ambient derivative_of(const SystemParams& params, const Ambient& x, const ControlInput& u,
                      const DisturbanceSet& d) {
  return state_derivative(params, unpack(x), u, d);
}

}  // namespace

void SystemParams::validate() const {
  require_positive("m0", m0);
  require_positive("m1", m1);
  require_positive("m2", m2);
  require_positive("J0", J0);
  require_positive("rho1", rho1);
  require_positive("rho2", rho2);
  require_positive("l1", l1);
  require_positive("l2", l2);
  require_positive("g", g);
}

Vec12 Accelerations::stacked() const {
  Vec12 a;
  a << v0_dot, w0_dot, w1_dot, w2_dot;
  return a;
}

Accelerations Accelerations::from_stacked(const Vec12& a) {
  return {a.segment<3>(0), a.segment<3>(3), a.segment<3>(6), a.segment<3>(9)};
}

Mat12 mass_matrix(const SystemParams& p, const SpherePoint& q0, const SpherePoint& q1,
                  const SpherePoint& q2) {
  const Mat3 I = Mat3::Identity();
  const Mat3 Q0 = skew(q0.vec());
  const Mat3 Q1 = skew(q1.vec());
  const Mat3 Q2 = skew(q2.vec());
  const double asym = p.m1 * p.rho1 - p.m2 * p.rho2;

  Mat12 M = Mat12::Zero();
  M.block<3, 3>(0, 0) = p.total_mass() * I;
  M.block<3, 3>(0, 3) = -asym * Q0;
  M.block<3, 3>(0, 6) = p.m1 * p.l1 * Q1;
  M.block<3, 3>(0, 9) = p.m2 * p.l2 * Q2;

  M.block<3, 3>(3, 0) = asym * Q0;
  M.block<3, 3>(3, 3) = p.effective_inertia() * I;
  M.block<3, 3>(3, 6) = p.m1 * p.rho1 * p.l1 * Q0 * Q1;
  M.block<3, 3>(3, 9) = -p.m2 * p.rho2 * p.l2 * Q0 * Q2;

  M.block<3, 3>(6, 0) = -p.m1 * Q1;
  M.block<3, 3>(6, 3) = p.m1 * p.rho1 * Q1 * Q0;
  M.block<3, 3>(6, 6) = p.m1 * p.l1 * I;

  M.block<3, 3>(9, 0) = -p.m2 * Q2;
  M.block<3, 3>(9, 3) = -p.m2 * p.rho2 * Q2 * Q0;
  M.block<3, 3>(9, 9) = p.m2 * p.l2 * I;
  return M;
}

Vec12 forcing_vector(const SystemParams& p, const PlantState& s, const ControlInput& u,
                     const DisturbanceSet& d, const ProcessNoise& w) {
  const Vec3& q0 = s.payload.q.vec();
  const Vec3& q1 = s.cable1.q.vec();
  const Vec3& q2 = s.cable2.q.vec();
  const double w0sq = s.payload.w.squaredNorm();
  const double w1sq = s.cable1.w.squaredNorm();
  const double w2sq = s.cable2.w.squaredNorm();
  const Vec3 f1 = u.u1 + d.d_p1;
  const Vec3 f2 = u.u2 + d.d_p2;
  const Vec3 chi1 = p.m1 * p.g * kE3 + f1;
  const Vec3 chi2 = p.m2 * p.g * kE3 + f2;

  Vec12 F;
  F.segment<3>(0) = -p.m1 * (p.l1 * w1sq * q1 - p.rho1 * w0sq * q0) -
                    p.m2 * (p.l2 * w2sq * q2 + p.rho2 * w0sq * q0) +
                    p.total_mass() * p.g * kE3 + f1 + f2 + d.d_p0 +
                    w.w_p0;
  F.segment<3>(3) = q0.cross(p.rho1 * (chi1 - p.m1 * p.l1 * w1sq * q1) -
                             p.rho2 * (chi2 - p.m2 * p.l2 * w2sq * q2) + d.d_q0 + w.w_q0);
  F.segment<3>(6) = -q1.cross(chi1 + p.m1 * p.rho1 * w0sq * q0);
  F.segment<3>(9) = -q2.cross(chi2 - p.m2 * p.rho2 * w0sq * q0);
  return F;
}

Vec12 solve_mass_system(const Mat12& M, const Vec12& F) {
  const Eigen::PartialPivLU<Mat12> lu(M);
  const double rc = lu.rcond();
  if (!(rc >= kMinMassRcond)) {
    throw SingularMass("mass matrix is singular (rcond " + std::to_string(rc) + ")");
  }
  return lu.solve(F);
}

Accelerations accelerations(const SystemParams& p, const PlantState& s, const ControlInput& u,
                            const DisturbanceSet& d, const ProcessNoise& w) {
  const Mat12 M = mass_matrix(p, s.payload.q, s.cable1.q, s.cable2.q);
  auto a = Accelerations::from_stacked(solve_mass_system(M, forcing_vector(p, s, u, d, w)));
  a.w0_dot = drop_along(a.w0_dot, s.payload.q.vec());
  a.w1_dot = drop_along(a.w1_dot, s.cable1.q.vec());
  a.w2_dot = drop_along(a.w2_dot, s.cable2.q.vec());
  return a;
}

Eigen::Matrix<double, 24, 1> state_derivative(const SystemParams& p, const PlantState& s,
                                              const ControlInput& u, const DisturbanceSet& d) {
  const Accelerations a = accelerations(p, s, u, d);
  Ambient xd;
  xd << s.v0, a.v0_dot, s.payload.w.cross(s.payload.q.vec()), a.w0_dot,
      s.cable1.w.cross(s.cable1.q.vec()), a.w1_dot, s.cable2.w.cross(s.cable2.q.vec()),
      a.w2_dot;
  return xd;
}

PlantState step(const SystemParams& p, const PlantState& s, const ControlInput& u,
                const DisturbanceSet& d, double dt, Integrator method) {
  if (method == Integrator::kManifoldEuler) {
    const Accelerations a = accelerations(p, s, u, d);
    PlantState out;
    out.p0 = s.p0 + dt * s.v0;
    out.v0 = s.v0 + dt * a.v0_dot;
    auto advance = [dt](const BundlePoint& b, const Vec3& wdot) {
      Vec6 v;
      v << dt * b.w, dt * wdot;
      const BundlePoint n = manifold::ts2_oplus(b, v);
      return BundlePoint::projected(n.q.vec(), n.w);
    };
    out.payload = advance(s.payload, a.w0_dot);
    out.cable1 = advance(s.cable1, a.w1_dot);
    out.cable2 = advance(s.cable2, a.w2_dot);
    return out;
  }

  const Ambient x = pack(s);
  const Ambient k1 = derivative_of(p, x, u, d);
  const Ambient k2 = derivative_of(p, x + 0.5 * dt * k1, u, d);
  const Ambient k3 = derivative_of(p, x + 0.5 * dt * k2, u, d);
  const Ambient k4 = derivative_of(p, x + dt * k3, u, d);
  return unpack(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

DroneKinematics drone_kinematics(const SystemParams& p, const PlantState& s) {
  const Vec3& q0 = s.payload.q.vec();
  const Vec3& q1 = s.cable1.q.vec();
  const Vec3& q2 = s.cable2.q.vec();
  const Vec3 q0dot = s.payload.w.cross(q0);
  DroneKinematics k;
  k.p1 = s.p0 + p.rho1 * q0 - p.l1 * q1;
  k.p2 = s.p0 - p.rho2 * q0 - p.l2 * q2;
  k.v1 = s.v0 + p.rho1 * q0dot - p.l1 * s.cable1.w.cross(q1);
  k.v2 = s.v0 - p.rho2 * q0dot - p.l2 * s.cable2.w.cross(q2);
  return k;
}

CableForces equilibrium_cable_forces(const SystemParams& p, const SpherePoint& q0e,
                                     const Vec3& d_p0e, const Vec3& d_q0e, double n0) {
  const Vec3& q0 = q0e.vec();
  const Vec3 load = p.m0 * p.g * kE3 + d_p0e;
  const Vec3 moment = drop_along(d_q0e, q0) - n0 * q0;
  const double span = p.rho1 + p.rho2;
  return {(p.rho2 * load + moment) / span, (p.rho1 * load - moment) / span};
}

Equilibrium hover_equilibrium(const SystemParams& p, const SpherePoint& q0e,
                              const DisturbanceSet& d, double n0, const Vec3& p0) {
  Equilibrium e;
  e.forces = equilibrium_cable_forces(p, q0e, d.d_p0, d.d_q0, n0);
  e.state.p0 = p0;
  e.state.payload.q = q0e;
  e.state.cable1.q = SpherePoint::normalized(e.forces.mu1);
  e.state.cable2.q = SpherePoint::normalized(e.forces.mu2);
  e.control.u1 = -e.forces.mu1 - p.m1 * p.g * kE3 - d.d_p1;
  e.control.u2 = -e.forces.mu2 - p.m2 * p.g * kE3 - d.d_p2;
  return e;
}

double kinetic_energy(const SystemParams& p, const PlantState& s) {
  const DroneKinematics k = drone_kinematics(p, s);
  return 0.5 * (p.m0 * s.v0.squaredNorm() + p.J0 * s.payload.w.squaredNorm() +
                p.m1 * k.v1.squaredNorm() + p.m2 * k.v2.squaredNorm());
}

double potential_energy(const SystemParams& p, const PlantState& s) {
  const DroneKinematics k = drone_kinematics(p, s);
  return -p.g * (p.m0 * s.p0.z() + p.m1 * k.p1.z() + p.m2 * k.p2.z());
}

double total_energy(const SystemParams& p, const PlantState& s) {
  return kinetic_energy(p, s) + potential_energy(p, s);
}

}  // namespace tetherkit::dynamics
