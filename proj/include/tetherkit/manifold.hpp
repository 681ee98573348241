#pragma once

// Boxplus / boxminus / oplus calculus on R^n, the unit sphere S^2 and its
// tangent bundle TS^2, together with the analytic derivative matrices used
// by the error-state filter.
//
// Conventions:
//   x ⊞ u   retraction of tangent coordinates u onto x
//   x ⊟ y   coordinates of x in the tangent chart anchored at y
//   x ⊕ v   propagation by an ambient increment v (rotation vector on S^2)

#include <Eigen/Dense>

#include "tetherkit/types.hpp"

namespace tetherkit::manifold {

/// Below this angle the Rodrigues-type coefficients switch to Taylor series.
inline constexpr double kSmallAngle = 1e-6;
/// Points closer than this to the cut locus are rejected by ⊟.
inline constexpr double kAntipodalTolerance = 1e-3;
/// Within this angle of -e1 the tangent basis uses a fixed fallback.
inline constexpr double kBasisFallbackAngle = 1e-6;

using Mat46 = Eigen::Matrix<double, 4, 6>;
using Mat64 = Eigen::Matrix<double, 6, 4>;
using Mat66 = Eigen::Matrix<double, 6, 6>;
using Mat44 = Eigen::Matrix<double, 4, 4>;
using RowVec3 = Eigen::RowVector3d;

/// Unit 3-vector. Construction normalizes and rejects zero/non-finite input.
class SpherePoint {
 public:
  SpherePoint() : x_(kE3) {}

  /// Normalizes `v`. Throws DegenerateBasis when v is zero or non-finite.
  static SpherePoint normalized(const Vec3& v);
  /// Accepts `v` only if it is already unit-norm within 1e-9 (then renormalizes).
  static SpherePoint from_unit(const Vec3& v);

  const Vec3& vec() const { return x_; }
  double operator[](int i) const { return x_[i]; }

 private:
  explicit SpherePoint(const Vec3& v) : x_(v) {}
  Vec3 x_;
};

/// Point of TS^2: a direction q with an angular velocity w tangent to it.
struct BundlePoint {
  SpherePoint q;
  Vec3 w = Vec3::Zero();

  /// Normalizes q and removes the component of w along q.
  static BundlePoint projected(const Vec3& q, const Vec3& w);
};

// --- SO(3) exponential and its Jacobian ------------------------------------

Mat3 rot_exp(const Vec3& v);
/// A(v) = I + (1-cos t)/t^2 v^x + (t - sin t)/t^3 (v^x)^2, t = |v|.
/// d(R(v) x)/dv = -R(v) x^x A(v)^T.
Mat3 rot_jac_A(const Vec3& v);

// --- S^2 ---------------------------------------------------------------------

/// Orthonormal tangent basis B(x) = R1(x) [e2, e3].
Mat32 tangent_basis(const SpherePoint& x);

SpherePoint s2_boxplus(const SpherePoint& x, const Vec2& u);
/// x ⊟ y: tangent coordinates (in B(y)) of the rotation taking y to x.
/// Throws AntipodalPoints when the angle exceeds pi - kAntipodalTolerance.
Vec2 s2_boxminus(const SpherePoint& x, const SpherePoint& y);
SpherePoint s2_oplus(const SpherePoint& x, const Vec3& v);

/// Rotation vector phi with R(phi) y = x and phi ⟂ x, y.
Vec3 s2_rotation_between(const SpherePoint& x, const SpherePoint& y);
/// d phi / d x for the rotation vector above.
Mat3 s2_drotation_dx(const SpherePoint& x, const SpherePoint& y);

/// P(x, y): gradient of theta/|y^x x| with respect to x.
RowVec3 s2_P(const SpherePoint& x, const SpherePoint& y);
/// N(x, y) = d(x ⊟ y)/dx.
Mat23 s2_N(const SpherePoint& x, const SpherePoint& y);
/// O(x, u) = d(x ⊞ u)/du.
Mat32 s2_O(const SpherePoint& x, const Vec2& u);

/// d(((x ⊞ u) ⊕ v) ⊟ y)/du = N R(v) O.
Mat2 s2_composite_du(const SpherePoint& x, const Vec2& u, const Vec3& v,
                     const SpherePoint& y);
/// d(((x ⊞ u) ⊕ v) ⊟ y)/dv = -N R(v) (x ⊞ u)^x A(v)^T.
Mat23 s2_composite_dv(const SpherePoint& x, const Vec2& u, const Vec3& v,
                      const SpherePoint& y);

// --- TS^2 --------------------------------------------------------------------

/// (x1 ⊞ u1, R(B u1)(x2 + B u2)); keeps w tangent.
BundlePoint ts2_boxplus(const BundlePoint& x, const Vec4& u);
BundlePoint ts2_boxplus(const BundlePoint& x, const Vec2& u1, const Vec2& u2);
/// (x1 ⊟ y1, B(y1)^T (R(-phi) x2 - y2)) with phi the rotation taking y1 to x1.
Vec4 ts2_boxminus(const BundlePoint& x, const BundlePoint& y);
/// (R(v1) x1, x2 + R(v1) v2), v = (v1, v2).
BundlePoint ts2_oplus(const BundlePoint& x, const Vec6& v);

/// Q(x, y) = d(x ⊟ y)/dx, 4x6 in ambient coordinates (q, w).
Mat46 ts2_dminus_dx(const BundlePoint& x, const BundlePoint& y);
/// Q(x, x) in closed form.
Mat46 ts2_dminus_dx_at_self(const BundlePoint& x);
/// S(v) = d(x ⊕ v)/dx.
Mat66 ts2_doplus_dx(const Vec6& v);
/// T(x, u) = d(x ⊞ u)/du.
Mat64 ts2_dplus_du(const BundlePoint& x, const Vec4& u);
/// U(x, v) = d(x ⊕ v)/dv.
Mat66 ts2_doplus_dv(const BundlePoint& x, const Vec6& v);

/// d(((x ⊞ u) ⊕ v) ⊟ y)/du = Q S(v) T(x, u).
Mat44 ts2_composite_du(const BundlePoint& x, const Vec4& u, const Vec6& v,
                       const BundlePoint& y);
/// d(((x ⊞ u) ⊕ v) ⊟ y)/dv = Q U(x ⊞ u, v).
Mat46 ts2_composite_dv(const BundlePoint& x, const Vec4& u, const Vec6& v,
                       const BundlePoint& y);

// --- R^n ---------------------------------------------------------------------
// Plain vector arithmetic; all composite derivatives are the identity.

template <int N>
Eigen::Matrix<double, N, 1> rn_boxplus(const Eigen::Matrix<double, N, 1>& x,
                                       const Eigen::Matrix<double, N, 1>& u) {
  return x + u;
}

template <int N>
Eigen::Matrix<double, N, 1> rn_boxminus(const Eigen::Matrix<double, N, 1>& x,
                                        const Eigen::Matrix<double, N, 1>& y) {
  return x - y;
}

template <int N>
Eigen::Matrix<double, N, 1> rn_oplus(const Eigen::Matrix<double, N, 1>& x,
                                     const Eigen::Matrix<double, N, 1>& v) {
  return x + v;
}

template <int N>
Eigen::Matrix<double, N, N> rn_composite_du() {
  return Eigen::Matrix<double, N, N>::Identity();
}

template <int N>
Eigen::Matrix<double, N, N> rn_composite_dv() {
  return Eigen::Matrix<double, N, N>::Identity();
}

}  // namespace tetherkit::manifold
