#include "tetherkit/filter.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <string>

#include "tetherkit/errors.hpp"
#include "tetherkit/manifold.hpp"

namespace tetherkit::filter {

namespace {

using manifold::BundlePoint;

const BundlePoint& bundle(const SystemState& x, int i) {
  return i == 0 ? x.plant.payload : (i == 1 ? x.plant.cable1 : x.plant.cable2);
}

BundlePoint& bundle(SystemState& x, int i) {
  return i == 0 ? x.plant.payload : (i == 1 ? x.plant.cable1 : x.plant.cable2);
}

// Offsets of TS^2 block i in error and ambient coordinates.
int err_offset(int i) { return 6 + 4 * i; }
int amb_offset(int i) { return 6 + 6 * i; }

dynamics::DisturbanceSet drone_forces(const SystemState& x) {
  dynamics::DisturbanceSet d;
  d.d_p1 = x.d_p1;
  d.d_p2 = x.d_p2;
  return d;
}

bool has_disturbance(FilterMode mode) { return mode == FilterMode::kDisturbanceObserver; }

}  // namespace

int error_dim(FilterMode mode) { return has_disturbance(mode) ? kErrorDim : kBaselineErrorDim; }
int ambient_dim(FilterMode mode) {
  return has_disturbance(mode) ? kAmbientDim : kBaselineAmbientDim;
}
int noise_dim(FilterMode mode) { return has_disturbance(mode) ? kNoiseDim : kBaselineNoiseDim; }

VecX to_ambient(const SystemState& x, FilterMode mode) {
  VecX z(kAmbientDim);
  z << x.plant.p0, x.plant.v0, x.plant.payload.q.vec(), x.plant.payload.w,
      x.plant.cable1.q.vec(), x.plant.cable1.w, x.plant.cable2.q.vec(), x.plant.cable2.w, x.d_p1,
      x.d_p2;
  return z.head(ambient_dim(mode));
}

SystemState boxplus(const SystemState& x, const VecX& dx, FilterMode mode) {
  SystemState out = x;
  out.plant.p0 += dx.segment<3>(0);
  out.plant.v0 += dx.segment<3>(3);
  for (int i = 0; i < 3; ++i) {
    bundle(out, i) = manifold::ts2_boxplus(bundle(x, i), Vec4(dx.segment<4>(err_offset(i))));
  }
  if (has_disturbance(mode)) {
    out.d_p1 += dx.segment<3>(18);
    out.d_p2 += dx.segment<3>(21);
  }
  return out;
}

VecX boxminus(const SystemState& a, const SystemState& b, FilterMode mode) {
  VecX d(error_dim(mode));
  d.segment<3>(0) = a.plant.p0 - b.plant.p0;
  d.segment<3>(3) = a.plant.v0 - b.plant.v0;
  for (int i = 0; i < 3; ++i) {
    d.segment<4>(err_offset(i)) = manifold::ts2_boxminus(bundle(a, i), bundle(b, i));
  }
  if (has_disturbance(mode)) {
    d.segment<3>(18) = a.d_p1 - b.d_p1;
    d.segment<3>(21) = a.d_p2 - b.d_p2;
  }
  return d;
}

NoiseConfig NoiseConfig::defaults() {
  return {0.1 * MatX::Identity(kNoiseDim, kNoiseDim), 0.01 * MatX::Identity(kMeasDim, kMeasDim)};
}

void NoiseConfig::validate() const {
  auto check = [](const MatX& M, const char* name) {
    if (M.rows() != 12 || M.cols() != 12) {
      throw ConfigError(std::string(name) + " must be 12x12");
    }
    if (!M.allFinite() || (M - M.transpose()).norm() > 1e-12 * (1.0 + M.norm())) {
      throw ConfigError(std::string(name) + " must be finite and symmetric");
    }
    if (Eigen::LLT<MatX>(M).info() != Eigen::Success) {
      throw ConfigError(std::string(name) + " must be positive definite");
    }
  };
  check(Q, "Q");
  check(R, "R");
}

double default_gate() {
  return boost::math::quantile(boost::math::chi_squared(kMeasDim), 0.997);
}

MatX initial_covariance(FilterMode mode) {
  VecX diag(kErrorDim);
  diag << VecX::Constant(18, 1e-2), VecX::Constant(6, 1.0);
  return MatX(diag.head(error_dim(mode)).asDiagonal());
}

VecX f_d(const SystemParams& params, const SystemState& x, const ControlInput& u, const VecX& w,
         FilterMode mode) {
  dynamics::ProcessNoise pn;
  pn.w_p0 = w.segment<3>(0);
  pn.w_q0 = w.segment<3>(3);
  const auto a = dynamics::accelerations(params, x.plant, u, drone_forces(x), pn);
  VecX f(kAmbientDim);
  f << x.plant.v0, a.v0_dot, x.plant.payload.w, a.w0_dot, x.plant.cable1.w, a.w1_dot,
      x.plant.cable2.w, a.w2_dot, Vec3::Zero(), Vec3::Zero();
  if (has_disturbance(mode)) f.tail<6>() = w.segment<6>(6);
  return f.head(ambient_dim(mode));
}

SystemState propagate(const SystemParams& params, const SystemState& x, const ControlInput& u,
                      double dt, FilterMode mode) {
  SystemState out = x;
  out.plant = dynamics::step(params, x.plant, u, drone_forces(x), dt,
                             dynamics::Integrator::kManifoldEuler);
  if (!has_disturbance(mode)) {
    out.d_p1.setZero();
    out.d_p2.setZero();
  }
  return out;
}

SystemState propagate_with_noise(const SystemParams& params, const SystemState& x,
                                 const ControlInput& u, const VecX& w, double dt,
                                 FilterMode mode) {
  VecX wf = VecX::Zero(kNoiseDim);
  wf.head(w.size()) = w;
  const VecX f = f_d(params, x, u, wf, FilterMode::kDisturbanceObserver);
  SystemState out = x;
  out.plant.p0 += dt * f.segment<3>(0);
  out.plant.v0 += dt * f.segment<3>(3);
  for (int i = 0; i < 3; ++i) {
    const BundlePoint n = manifold::ts2_oplus(bundle(x, i), Vec6(dt * f.segment<6>(amb_offset(i))));
    bundle(out, i) = BundlePoint::projected(n.q.vec(), n.w);
  }
  if (has_disturbance(mode)) {
    out.d_p1 += dt * f.segment<3>(24);
    out.d_p2 += dt * f.segment<3>(27);
  }
  return out;
}

MatX boxplus_jacobian(const SystemState& x, FilterMode mode) {
  MatX D = MatX::Zero(kAmbientDim, kErrorDim);
  D.topLeftCorner<6, 6>().setIdentity();
  for (int i = 0; i < 3; ++i) {
    D.block<6, 4>(amb_offset(i), err_offset(i)) = manifold::ts2_dplus_du(bundle(x, i), Vec4::Zero());
  }
  D.bottomRightCorner<6, 6>().setIdentity();
  return D.topLeftCorner(ambient_dim(mode), error_dim(mode));
}

MatX acceleration_jacobian(const SystemParams& p, const SystemState& x, const ControlInput& u) {
  const Vec3& q0 = x.plant.payload.q.vec();
  const Vec3& q1 = x.plant.cable1.q.vec();
  const Vec3& q2 = x.plant.cable2.q.vec();
  const Vec3& w0 = x.plant.payload.w;
  const Vec3& w1 = x.plant.cable1.w;
  const Vec3& w2 = x.plant.cable2.w;
  const Mat3 Q0 = skew(q0), Q1 = skew(q1), Q2 = skew(q2);
  const Mat3 I = Mat3::Identity();
  const double w0sq = w0.squaredNorm(), w1sq = w1.squaredNorm(), w2sq = w2.squaredNorm();
  const double asym = p.m1 * p.rho1 - p.m2 * p.rho2;

  const Mat12 M = dynamics::mass_matrix(p, x.plant.payload.q, x.plant.cable1.q, x.plant.cable2.q);
  const Vec12 F = dynamics::forcing_vector(p, x.plant, u, drone_forces(x));
  const Eigen::PartialPivLU<Mat12> lu(M);
  if (!(lu.rcond() >= dynamics::kMinMassRcond)) {
    throw SingularMass("mass matrix is singular (rcond " + std::to_string(lu.rcond()) + ")");
  }
  const Vec12 a = lu.solve(F);
  const Vec3 a1 = a.segment<3>(0), a2 = a.segment<3>(3), a3 = a.segment<3>(6),
             a4 = a.segment<3>(9);

  // Ambient column offsets.
  constexpr int cq0 = 6, cw0 = 9, cq1 = 12, cw1 = 15, cq2 = 18, cw2 = 21, cd1 = 24, cd2 = 27;

  // d(M a)/dz at fixed a.
  Eigen::Matrix<double, 12, 30> dMa = Eigen::Matrix<double, 12, 30>::Zero();
  dMa.block<3, 3>(0, cq0) = asym * skew(a2);
  dMa.block<3, 3>(0, cq1) = -p.m1 * p.l1 * skew(a3);
  dMa.block<3, 3>(0, cq2) = -p.m2 * p.l2 * skew(a4);
  dMa.block<3, 3>(3, cq0) = -asym * skew(a1) - p.m1 * p.rho1 * p.l1 * skew(Q1 * a3) +
                            p.m2 * p.rho2 * p.l2 * skew(Q2 * a4);
  dMa.block<3, 3>(3, cq1) = -p.m1 * p.rho1 * p.l1 * Q0 * skew(a3);
  dMa.block<3, 3>(3, cq2) = p.m2 * p.rho2 * p.l2 * Q0 * skew(a4);
  dMa.block<3, 3>(6, cq0) = -p.m1 * p.rho1 * Q1 * skew(a2);
  dMa.block<3, 3>(6, cq1) = p.m1 * skew(a1) - p.m1 * p.rho1 * skew(Q0 * a2);
  dMa.block<3, 3>(9, cq0) = p.m2 * p.rho2 * Q2 * skew(a2);
  dMa.block<3, 3>(9, cq2) = p.m2 * skew(a1) + p.m2 * p.rho2 * skew(Q0 * a2);

  const Vec3 chi1 = p.m1 * p.g * kE3 + u.u1 + x.d_p1;
  const Vec3 chi2 = p.m2 * p.g * kE3 + u.u2 + x.d_p2;
  const Vec3 G = p.rho1 * (chi1 - p.m1 * p.l1 * w1sq * q1) - p.rho2 * (chi2 - p.m2 * p.l2 * w2sq * q2);
  const Vec3 H1 = chi1 + p.m1 * p.rho1 * w0sq * q0;
  const Vec3 H2 = chi2 - p.m2 * p.rho2 * w0sq * q0;

  Eigen::Matrix<double, 12, 30> dF = Eigen::Matrix<double, 12, 30>::Zero();
  dF.block<3, 3>(0, cq0) = asym * w0sq * I;
  dF.block<3, 3>(0, cw0) = 2.0 * asym * q0 * w0.transpose();
  dF.block<3, 3>(0, cq1) = -p.m1 * p.l1 * w1sq * I;
  dF.block<3, 3>(0, cw1) = -2.0 * p.m1 * p.l1 * q1 * w1.transpose();
  dF.block<3, 3>(0, cq2) = -p.m2 * p.l2 * w2sq * I;
  dF.block<3, 3>(0, cw2) = -2.0 * p.m2 * p.l2 * q2 * w2.transpose();
  dF.block<3, 3>(0, cd1) = I;
  dF.block<3, 3>(0, cd2) = I;

  dF.block<3, 3>(3, cq0) = -skew(G);
  dF.block<3, 3>(3, cq1) = -p.rho1 * p.m1 * p.l1 * w1sq * Q0;
  dF.block<3, 3>(3, cw1) = -2.0 * p.rho1 * p.m1 * p.l1 * Q0 * q1 * w1.transpose();
  dF.block<3, 3>(3, cq2) = p.rho2 * p.m2 * p.l2 * w2sq * Q0;
  dF.block<3, 3>(3, cw2) = 2.0 * p.rho2 * p.m2 * p.l2 * Q0 * q2 * w2.transpose();
  dF.block<3, 3>(3, cd1) = p.rho1 * Q0;
  dF.block<3, 3>(3, cd2) = -p.rho2 * Q0;

  dF.block<3, 3>(6, cq0) = -p.m1 * p.rho1 * w0sq * Q1;
  dF.block<3, 3>(6, cw0) = -2.0 * p.m1 * p.rho1 * Q1 * q0 * w0.transpose();
  dF.block<3, 3>(6, cq1) = skew(H1);
  dF.block<3, 3>(6, cd1) = -Q1;

  dF.block<3, 3>(9, cq0) = p.m2 * p.rho2 * w0sq * Q2;
  dF.block<3, 3>(9, cw0) = 2.0 * p.m2 * p.rho2 * Q2 * q0 * w0.transpose();
  dF.block<3, 3>(9, cq2) = skew(H2);
  dF.block<3, 3>(9, cd2) = -Q2;

  return lu.solve(MatX(dF - dMa));
}

SystemPartials system_partials(const SystemParams& params, const SystemState& x,
                               const ControlInput& u, FilterMode mode) {
  const MatX dA = acceleration_jacobian(params, x, u);
  MatX df_dz = MatX::Zero(kAmbientDim, kAmbientDim);
  for (int blk = 0; blk < 4; ++blk) {
    // rate row (v0 or w_i) picks the velocity column; acceleration row from dA
    df_dz.block<3, 3>(6 * blk, 6 * blk + 3).setIdentity();
    df_dz.middleRows<3>(6 * blk + 3) = dA.middleRows<3>(3 * blk);
  }

  const Mat12 M = dynamics::mass_matrix(params, x.plant.payload.q, x.plant.cable1.q,
                                        x.plant.cable2.q);
  Mat12 dFdw = Mat12::Zero();
  dFdw.block<3, 3>(0, 0).setIdentity();
  dFdw.block<3, 3>(3, 3) = skew(x.plant.payload.q.vec());
  const Mat12 dAdw = Eigen::PartialPivLU<Mat12>(M).solve(dFdw);
  MatX df_dw = MatX::Zero(kAmbientDim, kNoiseDim);
  for (int blk = 0; blk < 4; ++blk) {
    df_dw.middleRows<3>(6 * blk + 3) = dAdw.middleRows<3>(3 * blk);
  }
  df_dw.bottomRightCorner<6, 6>().setIdentity();

  const int na = ambient_dim(mode), nw = noise_dim(mode);
  SystemPartials out;
  out.df_dz = df_dz.topLeftCorner(na, na);
  out.df_ddx = out.df_dz * boxplus_jacobian(x, mode);
  out.df_dw = df_dw.topLeftCorner(na, nw);
  return out;
}

ManifoldPartials manifold_partials(const SystemState& x_post, const VecX& rate, double dt,
                                   FilterMode mode) {
  MatX G_x = MatX::Zero(kErrorDim, kErrorDim);
  MatX G_f = MatX::Zero(kErrorDim, kAmbientDim);
  G_x.topLeftCorner<6, 6>().setIdentity();
  G_f.topLeftCorner<6, 6>().setIdentity();
  for (int i = 0; i < 3; ++i) {
    const BundlePoint& x = bundle(x_post, i);
    const Vec6 v = dt * rate.segment<6>(amb_offset(i));
    const BundlePoint y = manifold::ts2_oplus(x, v);
    const manifold::Mat46 Q = manifold::ts2_dminus_dx_at_self(y);
    G_x.block<4, 4>(err_offset(i), err_offset(i)) =
        Q * manifold::ts2_doplus_dx(v) * manifold::ts2_dplus_du(x, Vec4::Zero());
    G_f.block<4, 6>(err_offset(i), amb_offset(i)) = Q * manifold::ts2_doplus_dv(x, v);
  }
  G_x.bottomRightCorner<6, 6>().setIdentity();
  G_f.bottomRightCorner<6, 6>().setIdentity();
  const int ne = error_dim(mode), na = ambient_dim(mode);
  return {G_x.topLeftCorner(ne, ne), G_f.topLeftCorner(ne, na)};
}

MatX projection_jacobian(const SystemState& x_prior, const VecX& correction, FilterMode mode) {
  const int ne = error_dim(mode);
  MatX J = MatX::Identity(ne, ne);
  for (int i = 0; i < 3; ++i) {
    const Vec4 u = correction.segment<4>(err_offset(i));
    const BundlePoint& x = bundle(x_prior, i);
    const BundlePoint y = manifold::ts2_boxplus(x, u);
    J.block<4, 4>(err_offset(i), err_offset(i)) =
        manifold::ts2_dminus_dx_at_self(y) * manifold::ts2_dplus_du(x, u);
  }
  return J;
}

Vec12 measurement_model(const SystemParams& params, const SystemState& x) {
  const auto k = dynamics::drone_kinematics(params, x.plant);
  Vec12 h;
  h << k.p1, k.p2, k.v1, k.v2;
  return h;
}

MatX measurement_ambient_jacobian(const SystemParams& p, const SystemState& x, FilterMode mode) {
  const Mat3 I = Mat3::Identity();
  const Mat3 Q0 = skew(x.plant.payload.q.vec());
  const Mat3 Q1 = skew(x.plant.cable1.q.vec());
  const Mat3 Q2 = skew(x.plant.cable2.q.vec());
  const Mat3 W0 = skew(x.plant.payload.w);
  const Mat3 W1 = skew(x.plant.cable1.w);
  const Mat3 W2 = skew(x.plant.cable2.w);
  MatX Hz = MatX::Zero(kMeasDim, kAmbientDim);
  // p1, p2
  Hz.block<3, 3>(0, 0) = I;
  Hz.block<3, 3>(0, 6) = p.rho1 * I;
  Hz.block<3, 3>(0, 12) = -p.l1 * I;
  Hz.block<3, 3>(3, 0) = I;
  Hz.block<3, 3>(3, 6) = -p.rho2 * I;
  Hz.block<3, 3>(3, 18) = -p.l2 * I;
  // v1, v2
  Hz.block<3, 3>(6, 3) = I;
  Hz.block<3, 3>(6, 6) = p.rho1 * W0;
  Hz.block<3, 3>(6, 9) = -p.rho1 * Q0;
  Hz.block<3, 3>(6, 12) = -p.l1 * W1;
  Hz.block<3, 3>(6, 15) = p.l1 * Q1;
  Hz.block<3, 3>(9, 3) = I;
  Hz.block<3, 3>(9, 6) = -p.rho2 * W0;
  Hz.block<3, 3>(9, 9) = p.rho2 * Q0;
  Hz.block<3, 3>(9, 18) = -p.l2 * W2;
  Hz.block<3, 3>(9, 21) = p.l2 * Q2;
  return Hz.leftCols(ambient_dim(mode));
}

MatX measurement_jacobian(const SystemParams& params, const SystemState& x, FilterMode mode) {
  return measurement_ambient_jacobian(params, x, mode) * boxplus_jacobian(x, mode);
}

PropagationJacobians propagation_jacobians(const SystemParams& params, const SystemState& x,
                                           const ControlInput& u, double dt, FilterMode mode) {
  const VecX rate = f_d(params, x, u, VecX::Zero(kNoiseDim), FilterMode::kDisturbanceObserver);
  const ManifoldPartials mp = manifold_partials(x, rate, dt, FilterMode::kDisturbanceObserver);
  const SystemPartials sp = system_partials(params, x, u, FilterMode::kDisturbanceObserver);
  const MatX F_x = mp.G_x + dt * mp.G_f * sp.df_ddx;
  const MatX F_w = dt * mp.G_f * sp.df_dw;
  const int ne = error_dim(mode), nw = noise_dim(mode);
  return {F_x.topLeftCorner(ne, ne), F_w.topLeftCorner(ne, nw)};
}

MatX condition_covariance(const MatX& P) {
  MatX S = 0.5 * (P + P.transpose());
  if (Eigen::LLT<MatX>(S).info() == Eigen::Success) return S;
  const Eigen::SelfAdjointEigenSolver<MatX> es(S);
  const double floor = -1e-10 * S.trace();
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig >= 0.0) return S;
  if (min_eig < floor) {
    throw NumericalError("covariance is indefinite (min eigenvalue " + std::to_string(min_eig) +
                         ")");
  }
  const VecX clamped = es.eigenvalues().cwiseMax(0.0);
  S = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (S + S.transpose());
}

FilterState predict(const FilterConfig& cfg, const FilterState& fs, const ControlInput& u,
                    double dt) {
  const PropagationJacobians jac = propagation_jacobians(cfg.params, fs.x, u, dt, fs.mode);
  const int nw = noise_dim(fs.mode);
  const MatX Q = cfg.noise.Q.topLeftCorner(nw, nw);
  FilterState out;
  out.mode = fs.mode;
  out.x = propagate(cfg.params, fs.x, u, dt, fs.mode);
  out.P = condition_covariance(jac.F_x * fs.P * jac.F_x.transpose() +
                               jac.F_w * Q * jac.F_w.transpose());
  return out;
}

FilterState update(const FilterConfig& cfg, const FilterState& fs, const Vec12& z,
                   UpdateDiagnostics* diagnostics) {
  const int ne = error_dim(fs.mode);
  const MatX H = measurement_jacobian(cfg.params, fs.x, fs.mode);
  const VecX r = z - measurement_model(cfg.params, fs.x);
  const MatX PHt = fs.P * H.transpose();
  const MatX S = H * PHt + cfg.noise.R;
  const Eigen::LLT<MatX> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("innovation covariance is not positive definite");
  }
  const double d2 = r.dot(llt.solve(r));
  if (cfg.gate && d2 > *cfg.gate) {
    throw InnovationGateExceeded("innovation outside gate (" + std::to_string(d2) + " > " +
                                     std::to_string(*cfg.gate) + ")",
                                 d2);
  }
  const MatX K = llt.solve(PHt.transpose()).transpose();
  const VecX dx = K * r;

  const MatX IKH = MatX::Identity(ne, ne) - K * H;
  const MatX P = IKH * fs.P * IKH.transpose() + K * cfg.noise.R * K.transpose();
  const MatX J = projection_jacobian(fs.x, dx, fs.mode);

  FilterState out;
  out.mode = fs.mode;
  out.x = boxplus(fs.x, dx, fs.mode);
  out.P = condition_covariance(J * P * J.transpose());
  if (diagnostics) {
    diagnostics->innovation = r;
    diagnostics->correction = dx;
    diagnostics->mahalanobis2 = d2;
  }
  return out;
}

FilterState filter_step(const FilterConfig& cfg, const FilterState& fs, const ControlInput& u,
                        const Vec12& z, double dt, UpdateDiagnostics* diagnostics) {
  return update(cfg, predict(cfg, fs, u, dt), z, diagnostics);
}

double nees(const FilterState& fs, const SystemState& truth) {
  const VecX e = boxminus(truth, fs.x, fs.mode);
  return e.dot(fs.P.ldlt().solve(e));
}

}  // namespace tetherkit::filter
