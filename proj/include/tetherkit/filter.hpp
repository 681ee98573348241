#pragma once

// Error-state EKF on (R^3)^2 x (TS^2)^3 x (R^3)^2 with the drone forces d_p1,
// d_p2 as random-walk states, and a baseline variant without them.
//
// Error-state layout (24): dp0, dv0, (dq0, dw0), (dq1, dw1), (dq2, dw2), dd1, dd2
//   with 2 + 2 coordinates per TS^2 block.
// Ambient layout (30):     p0, v0, q0, w0, q1, w1, q2, w2, d1, d2.
// Process noise (12):      w_p0, w_q0, w_d1, w_d2.
// Measurement (12):        p1, p2, v1, v2.
//
// The baseline uses the leading 18 error / 24 ambient / 6 noise coordinates.

#include <optional>

#include "tetherkit/dynamics.hpp"
#include "tetherkit/types.hpp"

namespace tetherkit::filter {

using dynamics::ControlInput;
using dynamics::PlantState;
using dynamics::SystemParams;

inline constexpr int kErrorDim = 24;
inline constexpr int kAmbientDim = 30;
inline constexpr int kNoiseDim = 12;
inline constexpr int kMeasDim = 12;
inline constexpr int kBaselineErrorDim = 18;
inline constexpr int kBaselineAmbientDim = 24;
inline constexpr int kBaselineNoiseDim = 6;

enum class FilterMode { kDisturbanceObserver, kBaseline };

int error_dim(FilterMode mode);
int ambient_dim(FilterMode mode);
int noise_dim(FilterMode mode);

struct SystemState {
  PlantState plant;
  Vec3 d_p1 = Vec3::Zero();
  Vec3 d_p2 = Vec3::Zero();
};

/// Ambient stack in the layout above (first ambient_dim(mode) entries).
VecX to_ambient(const SystemState& x, FilterMode mode = FilterMode::kDisturbanceObserver);
SystemState boxplus(const SystemState& x, const VecX& dx,
                    FilterMode mode = FilterMode::kDisturbanceObserver);
VecX boxminus(const SystemState& a, const SystemState& b,
              FilterMode mode = FilterMode::kDisturbanceObserver);

struct NoiseConfig {
  MatX Q;  // 12x12, discrete
  MatX R;  // 12x12

  /// Q = 0.1 I, R = 0.01 I.
  static NoiseConfig defaults();
  void validate() const;
};

struct FilterConfig {
  SystemParams params;
  NoiseConfig noise = NoiseConfig::defaults();
  FilterMode mode = FilterMode::kDisturbanceObserver;
  /// Reject updates whose squared Mahalanobis innovation exceeds this value.
  std::optional<double> gate;
};

/// Squared-distance gate at the 99.7% quantile of chi-square with 12 dof.
double default_gate();

struct FilterState {
  SystemState x;
  MatX P;
  FilterMode mode = FilterMode::kDisturbanceObserver;
};

/// blkdiag(1e-2 I6, 1e-2 I12, I6), truncated to the mode's error dimension.
MatX initial_covariance(FilterMode mode);

/// Tangent-rate stack of length ambient_dim(mode). `w` has noise_dim(mode) entries.
VecX f_d(const SystemParams& params, const SystemState& x, const ControlInput& u, const VecX& w,
         FilterMode mode = FilterMode::kDisturbanceObserver);

/// Noiseless propagation x ⊕ dt f_d(x, u, 0).
SystemState propagate(const SystemParams& params, const SystemState& x, const ControlInput& u,
                      double dt, FilterMode mode = FilterMode::kDisturbanceObserver);

/// x ⊕ dt f_d(x, u, w) with a process-noise sample `w` (noise_dim(mode) entries).
SystemState propagate_with_noise(const SystemParams& params, const SystemState& x,
                                 const ControlInput& u, const VecX& w, double dt,
                                 FilterMode mode = FilterMode::kDisturbanceObserver);

/// d(x ⊞ dx)/d dx at dx = 0, ambient x error.
MatX boxplus_jacobian(const SystemState& x, FilterMode mode = FilterMode::kDisturbanceObserver);

/// d(M^-1 F)/dz in ambient coordinates (12 x 30).
MatX acceleration_jacobian(const SystemParams& params, const SystemState& x,
                           const ControlInput& u);

struct SystemPartials {
  MatX df_dz;   // ambient x ambient
  MatX df_ddx;  // ambient x error
  MatX df_dw;   // ambient x noise
};

SystemPartials system_partials(const SystemParams& params, const SystemState& x,
                               const ControlInput& u,
                               FilterMode mode = FilterMode::kDisturbanceObserver);

struct ManifoldPartials {
  MatX G_x;  // error x error
  MatX G_f;  // error x ambient
};

/// x_post is the state before propagation, `rate` = f_d(x_post, u, 0).
ManifoldPartials manifold_partials(const SystemState& x_post, const VecX& rate, double dt,
                                   FilterMode mode = FilterMode::kDisturbanceObserver);

/// d((x_prior ⊞ dx) ⊟ x_post)/d dx at dx = correction, x_post = x_prior ⊞ correction.
MatX projection_jacobian(const SystemState& x_prior, const VecX& correction,
                         FilterMode mode = FilterMode::kDisturbanceObserver);

Vec12 measurement_model(const SystemParams& params, const SystemState& x);
/// dh/dz (12 x ambient).
MatX measurement_ambient_jacobian(const SystemParams& params, const SystemState& x,
                                  FilterMode mode = FilterMode::kDisturbanceObserver);
/// H = dh/dz * d(x ⊞ dx)/d dx (12 x error).
MatX measurement_jacobian(const SystemParams& params, const SystemState& x,
                          FilterMode mode = FilterMode::kDisturbanceObserver);

struct PropagationJacobians {
  MatX F_x;
  MatX F_w;
};

PropagationJacobians propagation_jacobians(const SystemParams& params, const SystemState& x,
                                           const ControlInput& u, double dt,
                                           FilterMode mode = FilterMode::kDisturbanceObserver);

FilterState predict(const FilterConfig& cfg, const FilterState& fs, const ControlInput& u,
                    double dt);

struct UpdateDiagnostics {
  VecX innovation;
  VecX correction;
  double mahalanobis2 = 0.0;
};

/// Throws InnovationGateExceeded when a gate is configured and exceeded.
FilterState update(const FilterConfig& cfg, const FilterState& fs, const Vec12& z,
                   UpdateDiagnostics* diagnostics = nullptr);

FilterState filter_step(const FilterConfig& cfg, const FilterState& fs, const ControlInput& u,
                        const Vec12& z, double dt, UpdateDiagnostics* diagnostics = nullptr);

/// Symmetrize and clamp small negative eigenvalues (> -1e-10 trace) to zero.
MatX condition_covariance(const MatX& P);

/// e' P^-1 e with e = truth ⊟ estimate.
double nees(const FilterState& fs, const SystemState& truth);

}  // namespace tetherkit::filter
