#include "tetherkit/manifold.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tetherkit/errors.hpp"

namespace tetherkit::manifold {

namespace {

struct RodriguesCoefficients {
  double a;  // sin t / t
  double b;  // (1 - cos t) / t^2
  double c;  // (t - sin t) / t^3
};

RodriguesCoefficients rodrigues(double t) {
  if (t < kSmallAngle) {
    const double t2 = t * t;
    const double t4 = t2 * t2;
    return {1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0};
  }
  const double s = std::sin(t);
  const double half = std::sin(0.5 * t);
  const double t2 = t * t;
  return {s / t, 2.0 * half * half / t2, (t - s) / (t2 * t)};
}

// theta / |y x x| where theta = atan2(|y x x|, y.x); tends to 1 as the angle
// vanishes.
double angle_over_sine(double s, double c) {
  if (s < kSmallAngle && c > 0.0) {
    return 1.0 + s * s / 6.0;
  }
  return std::atan2(s, c) / s;
}

}  // namespace

SpherePoint SpherePoint::normalized(const Vec3& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw DegenerateBasis("sphere point from zero or non-finite vector");
  }
  return SpherePoint(v / n);
}

SpherePoint SpherePoint::from_unit(const Vec3& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
    throw std::invalid_argument("sphere point is not unit norm (|x| = " +
                                std::to_string(n) + ")");
  }
  return SpherePoint(v / n);
}

BundlePoint BundlePoint::projected(const Vec3& q, const Vec3& w) {
  BundlePoint b;
  b.q = SpherePoint::normalized(q);
  b.w = w - b.q.vec() * b.q.vec().dot(w);
  return b;
}

Mat3 rot_exp(const Vec3& v) {
  const auto k = rodrigues(v.norm());
  const Mat3 V = skew(v);
  return Mat3::Identity() + k.a * V + k.b * V * V;
}

Mat3 rot_jac_A(const Vec3& v) {
  const auto k = rodrigues(v.norm());
  const Mat3 V = skew(v);
  return Mat3::Identity() + k.b * V + k.c * V * V;
}

Mat32 tangent_basis(const SpherePoint& x) {
  const Vec3& p = x.vec();
  const Vec3 axis = kE1.cross(p);
  const double s = axis.norm();
  const double c = p.x();
  if (c < 0.0 && s < std::sin(kBasisFallbackAngle)) {
    // R(pi e3) [e2, e3]
    Mat32 b;
    b.col(0) = -kE2;
    b.col(1) = kE3;
    return b;
  }
  const Mat3 r1 = rot_exp(axis * angle_over_sine(s, c));
  return r1.rightCols<2>();
}

SpherePoint s2_boxplus(const SpherePoint& x, const Vec2& u) {
  return SpherePoint::normalized(rot_exp(tangent_basis(x) * u) * x.vec());
}

Vec3 s2_rotation_between(const SpherePoint& x, const SpherePoint& y) {
  const Vec3 cr = y.vec().cross(x.vec());
  const double s = cr.norm();
  const double c = y.vec().dot(x.vec());
  const double theta = std::atan2(s, c);
  if (theta > std::numbers::pi - kAntipodalTolerance) {
    throw AntipodalPoints("sphere points are (nearly) antipodal, angle " +
                          std::to_string(theta));
  }
  return angle_over_sine(s, c) * cr;
}

Vec2 s2_boxminus(const SpherePoint& x, const SpherePoint& y) {
  return tangent_basis(y).transpose() * s2_rotation_between(x, y);
}

SpherePoint s2_oplus(const SpherePoint& x, const Vec3& v) {
  return SpherePoint::normalized(rot_exp(v) * x.vec());
}

RowVec3 s2_P(const SpherePoint& x, const SpherePoint& y) {
  const Mat3 Y = skew(y.vec());
  const Vec3 cr = Y * x.vec();
  const double s = cr.norm();
  const double c = y.vec().dot(x.vec());
  double k;
  if (s < 1e-4 && c > 0.0) {
    k = 2.0 / 3.0 + s * s / 5.0;
  } else {
    const double theta = std::atan2(s, c);
    k = (theta - c * s) / (s * s * s);
  }
  return k * x.vec().transpose() * Y * Y - y.vec().transpose();
}

Mat3 s2_drotation_dx(const SpherePoint& x, const SpherePoint& y) {
  const Mat3 Y = skew(y.vec());
  const Vec3 cr = Y * x.vec();
  const double s = cr.norm();
  const double c = y.vec().dot(x.vec());
  return angle_over_sine(s, c) * Y + cr * s2_P(x, y);
}

Mat23 s2_N(const SpherePoint& x, const SpherePoint& y) {
  return tangent_basis(y).transpose() * s2_drotation_dx(x, y);
}

Mat32 s2_O(const SpherePoint& x, const Vec2& u) {
  const Mat32 B = tangent_basis(x);
  const Vec3 phi = B * u;
  return -rot_exp(phi) * skew(x.vec()) * rot_jac_A(phi).transpose() * B;
}

Mat2 s2_composite_du(const SpherePoint& x, const Vec2& u, const Vec3& v,
                     const SpherePoint& y) {
  const SpherePoint z = s2_oplus(s2_boxplus(x, u), v);
  return s2_N(z, y) * rot_exp(v) * s2_O(x, u);
}

Mat23 s2_composite_dv(const SpherePoint& x, const Vec2& u, const Vec3& v,
                      const SpherePoint& y) {
  const SpherePoint xu = s2_boxplus(x, u);
  const SpherePoint z = s2_oplus(xu, v);
  return -s2_N(z, y) * rot_exp(v) * skew(xu.vec()) * rot_jac_A(v).transpose();
}

BundlePoint ts2_boxplus(const BundlePoint& x, const Vec2& u1, const Vec2& u2) {
  const Mat32 B = tangent_basis(x.q);
  const Mat3 R = rot_exp(B * u1);
  BundlePoint out;
  out.q = SpherePoint::normalized(R * x.q.vec());
  out.w = R * (x.w + B * u2);
  return out;
}

BundlePoint ts2_boxplus(const BundlePoint& x, const Vec4& u) {
  return ts2_boxplus(x, Vec2(u.head<2>()), Vec2(u.tail<2>()));
}

Vec4 ts2_boxminus(const BundlePoint& x, const BundlePoint& y) {
  const Vec3 phi = s2_rotation_between(x.q, y.q);
  const Mat32 B = tangent_basis(y.q);
  Vec4 out;
  out.head<2>() = B.transpose() * phi;
  out.tail<2>() = B.transpose() * (rot_exp(-phi) * x.w - y.w);
  return out;
}

BundlePoint ts2_oplus(const BundlePoint& x, const Vec6& v) {
  const Mat3 R = rot_exp(v.head<3>());
  BundlePoint out;
  out.q = SpherePoint::normalized(R * x.q.vec());
  out.w = x.w + R * v.tail<3>();
  return out;
}

Mat46 ts2_dminus_dx(const BundlePoint& x, const BundlePoint& y) {
  const Vec3 phi = s2_rotation_between(x.q, y.q);
  const Mat3 D = s2_drotation_dx(x.q, y.q);
  const Mat23 Bt = tangent_basis(y.q).transpose();
  const Mat3 Rm = rot_exp(-phi);
  Mat46 Q = Mat46::Zero();
  Q.block<2, 3>(0, 0) = Bt * D;
  Q.block<2, 3>(2, 0) = Bt * Rm * skew(x.w) * rot_jac_A(-phi).transpose() * D;
  Q.block<2, 3>(2, 3) = Bt * Rm;
  return Q;
}

Mat46 ts2_dminus_dx_at_self(const BundlePoint& x) {
  const Mat23 Bt = tangent_basis(x.q).transpose();
  const Mat3 X1 = skew(x.q.vec());
  Mat46 Q = Mat46::Zero();
  Q.block<2, 3>(0, 0) = Bt * X1;
  Q.block<2, 3>(2, 0) = Bt * skew(x.w) * X1;
  Q.block<2, 3>(2, 3) = Bt;
  return Q;
}

Mat66 ts2_doplus_dx(const Vec6& v) {
  Mat66 S = Mat66::Identity();
  S.block<3, 3>(0, 0) = rot_exp(v.head<3>());
  return S;
}

Mat64 ts2_dplus_du(const BundlePoint& x, const Vec4& u) {
  const Mat32 B = tangent_basis(x.q);
  const Vec3 phi = B * u.head<2>();
  const Mat3 R = rot_exp(phi);
  const Mat3 At = rot_jac_A(phi).transpose();
  const Vec3 carried = x.w + B * u.tail<2>();
  Mat64 T = Mat64::Zero();
  T.block<3, 2>(0, 0) = -R * skew(x.q.vec()) * At * B;
  T.block<3, 2>(3, 0) = -R * skew(carried) * At * B;
  T.block<3, 2>(3, 2) = R * B;
  return T;
}

Mat66 ts2_doplus_dv(const BundlePoint& x, const Vec6& v) {
  const Vec3 v1 = v.head<3>();
  const Mat3 R = rot_exp(v1);
  const Mat3 At = rot_jac_A(v1).transpose();
  Mat66 U = Mat66::Zero();
  U.block<3, 3>(0, 0) = -R * skew(x.q.vec()) * At;
  U.block<3, 3>(3, 0) = -R * skew(v.tail<3>()) * At;
  U.block<3, 3>(3, 3) = R;
  return U;
}

Mat44 ts2_composite_du(const BundlePoint& x, const Vec4& u, const Vec6& v,
                       const BundlePoint& y) {
  const BundlePoint z = ts2_oplus(ts2_boxplus(x, u), v);
  return ts2_dminus_dx(z, y) * ts2_doplus_dx(v) * ts2_dplus_du(x, u);
}

Mat46 ts2_composite_dv(const BundlePoint& x, const Vec4& u, const Vec6& v,
                       const BundlePoint& y) {
  const BundlePoint xu = ts2_boxplus(x, u);
  const BundlePoint z = ts2_oplus(xu, v);
  return ts2_dminus_dx(z, y) * ts2_doplus_dv(xu, v);
}

}  // namespace tetherkit::manifold
