#pragma once

// Linearized observability of the reduced payload model around a static
// equilibrium. State order: (p0, v0, q0, w0) followed by the active
// disturbances in the order d_p0, d_q0, d_p1, d_p2.

#include <optional>
#include <string>
#include <vector>

#include "tetherkit/dynamics.hpp"
#include "tetherkit/types.hpp"

namespace tetherkit::observability {

using dynamics::SystemParams;
using manifold::SpherePoint;

using Mat8x12 = Eigen::Matrix<double, 8, 12>;
using Mat12x3 = Eigen::Matrix<double, 12, 3>;
using Mat8x3 = Eigen::Matrix<double, 8, 3>;
using RowVec12 = Eigen::Matrix<double, 1, 12>;
using RowVec3 = Eigen::RowVector3d;

struct EquilibriumPoint {
  SpherePoint q0e;
  Vec3 d_p0e = Vec3::Zero();
  Vec3 d_q0e = Vec3::Zero();  // stored already projected onto q0e⟂
  Vec3 d_p1e = Vec3::Zero();
  Vec3 d_p2e = Vec3::Zero();
  double n0 = 0.0;
  Vec3 mu1e = Vec3::Zero();
  Vec3 mu2e = Vec3::Zero();
  SpherePoint q1e;
  SpherePoint q2e;

  /// Solves the static balance for the cable forces and directions.
  static EquilibriumPoint make(const SystemParams& params, const SpherePoint& q0e,
                               const Vec3& d_p0e, const Vec3& d_q0e, double n0,
                               const Vec3& d_p1e = Vec3::Zero(),
                               const Vec3& d_p2e = Vec3::Zero());
};

struct DisturbanceCombo {
  bool p0 = false;
  bool q0 = false;
  bool p1 = false;
  bool p2 = false;

  int count() const { return int(p0) + int(q0) + int(p1) + int(p2); }
  int state_dim() const { return 12 + 3 * count(); }
  /// e.g. "null", "d_p0+d_q0", "d_p1+d_p2".
  std::string label() const;
};

struct NominalBlocks {
  Mat12 A;
  Mat8x12 C;
};

struct DisturbanceBlocks {
  Mat12x3 A_p0, A_q0, A_p1, A_p2;
  Mat8x3 C_p0, C_q0, C_p1, C_p2;
  RowVec12 C1_h3;
  RowVec3 C2_h3;
};

struct LinearizedCase {
  MatX A;
  MatX C;
  int state_dim = 0;
  std::optional<int> expected_rank;
  DisturbanceCombo combo;
};

NominalBlocks nominal_blocks(const SystemParams& params, const EquilibriumPoint& eq);
DisturbanceBlocks disturbance_blocks(const SystemParams& params, const EquilibriumPoint& eq);
LinearizedCase assemble_case(const SystemParams& params, const EquilibriumPoint& eq,
                             const DisturbanceCombo& combo);

struct RankPolicy {
  double eps_scale = 1e3;   // tolerance = max(m, n) * sigma_max * eps * eps_scale
  double gap_factor = 10.0; // sigma_r - sigma_{r+1} must exceed gap_factor * tolerance
  bool balance_blocks = true;
};

struct RankResult {
  int rank = 0;
  double tolerance = 0.0;
  VecX singular_values;
};

/// Stacked observability matrix [C; CA; ...; CA^k], optionally with every
/// block scaled to unit Frobenius norm.
MatX observability_matrix(const MatX& A, const MatX& C, int k, bool balance_blocks = true);

/// Rank of [C; CA; ...; CA^k]; k defaults to n - 1. Throws IllConditioned when
/// the singular values do not separate cleanly at the computed rank.
RankResult numeric_rank(const MatX& A, const MatX& C, const RankPolicy& policy = {},
                        std::optional<int> k = std::nullopt);

struct TableSpec {
  std::string label;
  std::vector<DisturbanceCombo> variants;  // "(i = 1 or 2)" rows carry both
  int expected_rank;
  bool expected_observable;
};

/// The eleven rows of the reference table, in order.
const std::vector<TableSpec>& reference_table();

struct TableRow {
  std::string label;
  int state_dim = 0;
  int rank = 0;  // max over samples and variants
  bool observable = false;
  int expected_rank = 0;
  bool expected_observable = false;
  std::vector<int> sample_ranks;  // min over variants, per sample
  bool samples_agree = true;
  bool variants_agree = true;

  bool matches_reference() const {
    return rank == expected_rank && observable == expected_observable;
  }
};

std::vector<TableRow> sweep_table(const SystemParams& params,
                                  const std::vector<EquilibriumPoint>& samples,
                                  const RankPolicy& policy = {});

struct SamplingOptions {
  double exclusion_cone_deg = 5.0;  // around ±e1 and ±e3
  double n0_max = 2.0;
  double disturbance_max = 1.0;
};

/// Generic equilibria: q0e uniform on the sphere outside the exclusion cones,
/// n0 uniform, disturbances uniform in a ball (d_q0e projected).
std::vector<EquilibriumPoint> sample_equilibria(const SystemParams& params, int count,
                                                std::uint64_t seed,
                                                const SamplingOptions& options = {});

}  // namespace tetherkit::observability
