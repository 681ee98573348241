#pragma once

// Multibody dynamics of a bar-shaped payload carried by two drones through
// taut massless cables. NED inertial frame: gravity acts along +e3.
//
// Generalized accelerations a = [v0_dot; w0_dot; w1_dot; w2_dot] solve
//   M(q0, q1, q2) a = F(state, u, d, w).

#include "tetherkit/manifold.hpp"
#include "tetherkit/types.hpp"

namespace tetherkit::dynamics {

using manifold::BundlePoint;
using manifold::SpherePoint;

inline constexpr double kStandardGravity = 9.81;
/// Reciprocal condition estimate of M below which it is treated as singular.
inline constexpr double kMinMassRcond = 1e-12;

struct SystemParams {
  double m0 = 0.445;  // payload mass [kg]
  double m1 = 0.900;  // drone masses [kg]
  double m2 = 0.900;
  double J0 = 0.148;  // isotropic bar inertia [kg m^2]
  double rho1 = 1.0;  // attachment offsets along the bar [m]
  double rho2 = 1.0;
  double l1 = 1.0;    // cable lengths [m]
  double l2 = 1.0;
  double g = kStandardGravity;

  double total_mass() const { return m0 + m1 + m2; }
  /// J0 + m1 rho1^2 + m2 rho2^2
  double effective_inertia() const { return J0 + m1 * rho1 * rho1 + m2 * rho2 * rho2; }
  /// Throws ConfigError unless every parameter is finite and strictly positive.
  void validate() const;
};

struct PlantState {
  Vec3 p0 = Vec3::Zero();
  Vec3 v0 = Vec3::Zero();
  BundlePoint payload;  // (q0, w0)
  BundlePoint cable1;   // (q1, w1)
  BundlePoint cable2;   // (q2, w2)
};

struct DisturbanceSet {
  Vec3 d_p0 = Vec3::Zero();  // force on the payload [N]
  Vec3 d_q0 = Vec3::Zero();  // rotational disturbance on the payload, ⟂ q0
  Vec3 d_p1 = Vec3::Zero();  // forces on the drones [N]
  Vec3 d_p2 = Vec3::Zero();
};

struct ControlInput {
  Vec3 u1 = Vec3::Zero();  // desired thrusts, inertial frame [N]
  Vec3 u2 = Vec3::Zero();
};

/// Process noise on the payload translational / rotational channels.
struct ProcessNoise {
  Vec3 w_p0 = Vec3::Zero();
  Vec3 w_q0 = Vec3::Zero();
};

struct Accelerations {
  Vec3 v0_dot;
  Vec3 w0_dot;
  Vec3 w1_dot;
  Vec3 w2_dot;

  Vec12 stacked() const;
  static Accelerations from_stacked(const Vec12& a);
};

Mat12 mass_matrix(const SystemParams& params, const SpherePoint& q0,
                  const SpherePoint& q1, const SpherePoint& q2);

Vec12 forcing_vector(const SystemParams& params, const PlantState& state,
                     const ControlInput& u, const DisturbanceSet& d,
                     const ProcessNoise& w = {});

/// Solves M a = F, then removes the q_i-parallel part of each w_i_dot.
/// Throws SingularMass when M is numerically singular.
Accelerations accelerations(const SystemParams& params, const PlantState& state,
                            const ControlInput& u, const DisturbanceSet& d,
                            const ProcessNoise& w = {});

/// Solve-only variant returning the raw solution of M a = F (no projection).
Vec12 solve_mass_system(const Mat12& M, const Vec12& F);

enum class Integrator {
  kManifoldEuler,  // x ⊕ dt f(x), the filter's discretization
  kRk4,            // ambient RK4 + renormalization, ground truth
};

PlantState step(const SystemParams& params, const PlantState& state,
                const ControlInput& u, const DisturbanceSet& d, double dt,
                Integrator method = Integrator::kRk4);

/// Ambient time derivative, ordered (p0, v0, q0, w0, q1, w1, q2, w2).
Eigen::Matrix<double, 24, 1> state_derivative(const SystemParams& params,
                                              const PlantState& state,
                                              const ControlInput& u,
                                              const DisturbanceSet& d);

struct DroneKinematics {
  Vec3 p1, v1, p2, v2;
};

DroneKinematics drone_kinematics(const SystemParams& params, const PlantState& state);

struct CableForces {
  Vec3 mu1;
  Vec3 mu2;
};

/// Static cable forces that balance the payload at attitude q0e. n0 is the
/// free internal force along the bar; d_q0e is projected onto q0e⟂ first.
CableForces equilibrium_cable_forces(const SystemParams& params, const SpherePoint& q0e,
                                     const Vec3& d_p0e, const Vec3& d_q0e, double n0);

struct Equilibrium {
  PlantState state;
  ControlInput control;
  CableForces forces;
};

/// Stationary configuration (all rates zero) with the thrusts that hold it.
Equilibrium hover_equilibrium(const SystemParams& params, const SpherePoint& q0e,
                              const DisturbanceSet& d, double n0,
                              const Vec3& p0 = Vec3::Zero());

double kinetic_energy(const SystemParams& params, const PlantState& state);
/// -g * sum(m_k * z_k), NED height.
double potential_energy(const SystemParams& params, const PlantState& state);
double total_energy(const SystemParams& params, const PlantState& state);

}  // namespace tetherkit::dynamics
