#include "tetherkit/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tetherkit/errors.hpp"
#include "tetherkit/rng.hpp"

namespace tetherkit::observability {

namespace {

Vec3 uniform_in_ball(RandomStream& rng, double radius) {
  Vec3 v;
  do {
    v = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (v.squaredNorm() > 1.0);
  return radius * v;
}

SpherePoint uniform_on_sphere(RandomStream& rng) {
  Vec3 v;
  do {
    v = rng.normal3();
  } while (v.norm() < 1e-6);
  return SpherePoint::normalized(v);
}

}  // namespace

EquilibriumPoint EquilibriumPoint::make(const SystemParams& params, const SpherePoint& q0e,
                                        const Vec3& d_p0e, const Vec3& d_q0e, double n0,
                                        const Vec3& d_p1e, const Vec3& d_p2e) {
  EquilibriumPoint eq;
  eq.q0e = q0e;
  eq.d_p0e = d_p0e;
  eq.d_q0e = d_q0e - q0e.vec() * q0e.vec().dot(d_q0e);
  eq.d_p1e = d_p1e;
  eq.d_p2e = d_p2e;
  eq.n0 = n0;
  const auto f = dynamics::equilibrium_cable_forces(params, q0e, d_p0e, eq.d_q0e, n0);
  eq.mu1e = f.mu1;
  eq.mu2e = f.mu2;
  eq.q1e = SpherePoint::normalized(f.mu1);
  eq.q2e = SpherePoint::normalized(f.mu2);
  return eq;
}

std::string DisturbanceCombo::label() const {
  std::string out;
  auto add = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += name;
  };
  add(p0, "d_p0");
  add(q0, "d_q0");
  add(p1, "d_p1");
  add(p2, "d_p2");
  return out.empty() ? "null" : out;
}

NominalBlocks nominal_blocks(const SystemParams& params, const EquilibriumPoint& eq) {
  const Mat3 I = Mat3::Identity();
  const Mat3 Q0 = skew(eq.q0e.vec());
  NominalBlocks b;
  b.A.setZero();
  b.A.block<3, 3>(0, 3) = I;
  b.A.block<3, 3>(6, 9) = -Q0;
  b.A.block<3, 3>(9, 6) = -(eq.n0 / params.J0) * Q0;

  b.C.setZero();
  b.C.block<3, 3>(0, 0) = I;
  b.C.block<3, 3>(0, 6) = params.rho1 * I;
  b.C.block<3, 3>(3, 0) = I;
  b.C.block<3, 3>(3, 6) = -params.rho2 * I;
  b.C.block<1, 3>(6, 6) = eq.q0e.vec().transpose();
  b.C.block<1, 3>(7, 9) = eq.q0e.vec().transpose();
  return b;
}

DisturbanceBlocks disturbance_blocks(const SystemParams& params, const EquilibriumPoint& eq) {
  const Mat3 I = Mat3::Identity();
  const Mat3 Q0 = skew(eq.q0e.vec());
  DisturbanceBlocks b;
  b.A_p0.setZero();
  b.A_p0.block<3, 3>(3, 0) = I / params.m0;

  b.A_q0.setZero();
  b.A_q0.block<3, 3>(9, 0) = Q0 / params.J0;

  b.A_p1.setZero();
  b.A_p1.block<3, 3>(3, 0) = I / params.m0;
  b.A_p1.block<3, 3>(9, 0) = (params.rho1 / params.J0) * Q0;

  b.A_p2.setZero();
  b.A_p2.block<3, 3>(3, 0) = I / params.m0;
  b.A_p2.block<3, 3>(9, 0) = -(params.rho2 / params.J0) * Q0;

  b.C_p0.setZero();
  b.C_q0.setZero();
  const Mat3 Q1 = skew(eq.q1e.vec());
  const Mat3 Q2 = skew(eq.q2e.vec());
  b.C_p1.setZero();
  b.C_p1.block<3, 3>(0, 0) = -(params.l1 / eq.mu1e.norm()) * Q1 * Q1;
  b.C_p2.setZero();
  b.C_p2.block<3, 3>(3, 0) = -(params.l2 / eq.mu2e.norm()) * Q2 * Q2;

  b.C1_h3.setZero();
  b.C1_h3.segment<3>(6) = eq.d_q0e.transpose();
  b.C2_h3 = eq.q0e.vec().transpose();
  return b;
}

LinearizedCase assemble_case(const SystemParams& params, const EquilibriumPoint& eq,
                             const DisturbanceCombo& combo) {
  const NominalBlocks nom = nominal_blocks(params, eq);
  const DisturbanceBlocks dist = disturbance_blocks(params, eq);
  const int n = combo.state_dim();
  const int m = 8 + (combo.q0 ? 1 : 0);

  LinearizedCase out;
  out.combo = combo;
  out.state_dim = n;
  out.A = MatX::Zero(n, n);
  out.C = MatX::Zero(m, n);
  out.A.topLeftCorner<12, 12>() = nom.A;
  out.C.topLeftCorner<8, 12>() = nom.C;
  if (combo.q0) out.C.block<1, 12>(8, 0) = dist.C1_h3;

  int col = 12;
  auto append = [&](bool on, const Mat12x3& Ad, const Mat8x3& Cd, bool h3) {
    if (!on) return;
    out.A.block<12, 3>(0, col) = Ad;
    out.C.block<8, 3>(0, col) = Cd;
    if (h3) out.C.block<1, 3>(8, col) = dist.C2_h3;
    col += 3;
  };
  append(combo.p0, dist.A_p0, dist.C_p0, false);
  append(combo.q0, dist.A_q0, dist.C_q0, true);
  append(combo.p1, dist.A_p1, dist.C_p1, false);
  append(combo.p2, dist.A_p2, dist.C_p2, false);
  return out;
}

MatX observability_matrix(const MatX& A, const MatX& C, int k, bool balance_blocks) {
  const Eigen::Index m = C.rows();
  MatX O(m * (k + 1), A.cols());
  MatX block = C;
  for (int j = 0; j <= k; ++j) {
    const double nrm = block.norm();
    O.middleRows(j * m, m) = (balance_blocks && nrm > 0.0) ? MatX(block / nrm) : block;
    block = block * A;
  }
  return O;
}

RankResult numeric_rank(const MatX& A, const MatX& C, const RankPolicy& policy,
                        std::optional<int> k) {
  const int n = static_cast<int>(A.cols());
  const MatX O = observability_matrix(A, C, k.value_or(n - 1), policy.balance_blocks);
  const Eigen::JacobiSVD<MatX> svd(O);
  RankResult r;
  r.singular_values = svd.singularValues();
  const double smax = r.singular_values.size() ? r.singular_values[0] : 0.0;
  r.tolerance = double(std::max(O.rows(), O.cols())) * smax *
                std::numeric_limits<double>::epsilon() * policy.eps_scale;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values[i] > r.tolerance) ++r.rank;
  }
  if (r.rank > 0) {
    const double above = r.singular_values[r.rank - 1];
    const double below = r.rank < r.singular_values.size() ? r.singular_values[r.rank] : 0.0;
    if (above - below < policy.gap_factor * r.tolerance) {
      throw IllConditioned("no clear singular-value gap at rank " + std::to_string(r.rank) +
                           " (sigma_r = " + std::to_string(above) +
                           ", tolerance = " + std::to_string(r.tolerance) + ")");
    }
  }
  return r;
}

const std::vector<TableSpec>& reference_table() {
  using C = DisturbanceCombo;
  static const std::vector<TableSpec> rows = {
      {"null", {C{}}, 12, true},
      {"d_p0", {C{true, false, false, false}}, 15, true},
      {"d_q0", {C{false, true, false, false}}, 15, true},
      {"d_pi", {C{false, false, true, false}, C{false, false, false, true}}, 15, true},
      {"d_p0+d_q0", {C{true, true, false, false}}, 18, true},
      {"d_p0+d_pi", {C{true, false, true, false}, C{true, false, false, true}}, 18, true},
      {"d_q0+d_pi", {C{false, true, true, false}, C{false, true, false, true}}, 18, true},
      {"d_p1+d_p2", {C{false, false, true, true}}, 18, true},
      {"d_p0+d_q0+d_pi", {C{true, true, true, false}, C{true, true, false, true}}, 19, false},
      {"d_p0+d_p1+d_p2", {C{true, false, true, true}}, 18, false},
      {"d_q0+d_p1+d_p2", {C{false, true, true, true}}, 19, false},
  };
  return rows;
}

std::vector<TableRow> sweep_table(const SystemParams& params,
                                  const std::vector<EquilibriumPoint>& samples,
                                  const RankPolicy& policy) {
  std::vector<TableRow> table;
  for (const TableSpec& spec : reference_table()) {
    TableRow row;
    row.label = spec.label;
    row.state_dim = spec.variants.front().state_dim();
    row.expected_rank = spec.expected_rank;
    row.expected_observable = spec.expected_observable;
    for (const EquilibriumPoint& eq : samples) {
      int lo = std::numeric_limits<int>::max();
      int hi = 0;
      for (const DisturbanceCombo& combo : spec.variants) {
        const LinearizedCase lc = assemble_case(params, eq, combo);
        const int r = numeric_rank(lc.A, lc.C, policy).rank;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      if (lo != hi) row.variants_agree = false;
      row.sample_ranks.push_back(lo);
      row.rank = std::max(row.rank, hi);
    }
    for (int r : row.sample_ranks) {
      if (r != row.sample_ranks.front()) row.samples_agree = false;
    }
    row.observable = row.rank == row.state_dim;
    table.push_back(row);
  }
  return table;
}

std::vector<EquilibriumPoint> sample_equilibria(const SystemParams& params, int count,
                                                std::uint64_t seed,
                                                const SamplingOptions& options) {
  RandomStream rng = substream(seed, Channel::kEquilibria);
  const double cos_cone = std::cos(options.exclusion_cone_deg * std::numbers::pi / 180.0);
  std::vector<EquilibriumPoint> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const SpherePoint q0 = uniform_on_sphere(rng);
    if (std::abs(q0[0]) > cos_cone || std::abs(q0[2]) > cos_cone) continue;
    const double n0 = rng.uniform(-options.n0_max, options.n0_max);
    const Vec3 dp0 = uniform_in_ball(rng, options.disturbance_max);
    const Vec3 dq0 = uniform_in_ball(rng, options.disturbance_max);
    const Vec3 dp1 = uniform_in_ball(rng, options.disturbance_max);
    const Vec3 dp2 = uniform_in_ball(rng, options.disturbance_max);
    out.push_back(EquilibriumPoint::make(params, q0, dp0, dq0, n0, dp1, dp2));
  }
  return out;
}

}  // namespace tetherkit::observability
