#include "tetherkit/checks.hpp"

#include <algorithm>
#include <cmath>

#include "tetherkit/dynamics.hpp"
#include "tetherkit/filter.hpp"
#include "tetherkit/manifold.hpp"
#include "tetherkit/rng.hpp"

namespace tetherkit::checks {

namespace {

using namespace manifold;
using dynamics::PlantState;
using dynamics::SystemParams;

double rel(const MatX& a, const MatX& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

struct Tracker {
  CheckResult r;
  Tracker(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
  }
  void add(double err) {
    ++r.samples;
    r.worst = std::isfinite(err) ? std::max(r.worst, err) : INFINITY;
  }
};

// Tangent draws are capped at 2.5 rad so no sample wraps past the cut locus.
Vec2 vec2(RandomStream& rng, double s) {
  Vec2 u = s * Vec2(rng.normal(), rng.normal());
  if (u.norm() > 2.5) u *= 2.5 / u.norm();
  return u;
}
Vec4 vec4(RandomStream& rng, double s) {
  Vec4 u;
  u << vec2(rng, s), s * rng.normal(), s * rng.normal();
  return u;
}
Vec6 vec6(RandomStream& rng, double s) {
  Vec6 v;
  v << rng.normal3(), rng.normal3();
  return s * v;
}
SpherePoint sphere(RandomStream& rng) { return SpherePoint::normalized(rng.normal3()); }
BundlePoint bundle(RandomStream& rng) {
  return BundlePoint::projected(rng.normal3(), rng.normal3());
}

VecX stack(const BundlePoint& b) {
  VecX v(6);
  v << b.q.vec(), b.w;
  return v;
}

BundlePoint unstack(const VecX& z) {
  BundlePoint b;
  b.q = SpherePoint::normalized(z.head<3>());
  b.w = z.tail<3>();
  return b;
}

PlantState random_plant(RandomStream& rng, double rate) {
  PlantState s;
  s.p0 = rng.normal3();
  s.v0 = rate * rng.normal3();
  s.payload = BundlePoint::projected(kE1 + 0.3 * rng.normal3(), rate * rng.normal3());
  s.cable1 = BundlePoint::projected(kE3 + 0.4 * rng.normal3(), rate * rng.normal3());
  s.cable2 = BundlePoint::projected(kE3 + 0.4 * rng.normal3(), rate * rng.normal3());
  return s;
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

MatX central_difference(const std::function<VecX(const VecX&)>& f, const VecX& x, double h) {
  const VecX f0 = f(x);
  MatX J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    auto at = [&](double s) {
      VecX y = x;
      y[j] += s;
      return f(y);
    };
    J.col(j) = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
  }
  return J;
}

SuiteReport manifold_suite(std::uint64_t seed, int samples) {
  RandomStream rng = substream(seed, Channel::kChecks);
  Tracker s2_round("S2 round trip (x ⊞ u) ⊟ x = u", 1e-9);
  Tracker s2_inverse("S2 round trip x ⊞ (y ⊟ x) = y", 1e-9);
  Tracker s2_zero("S2 zero element", 1e-10);
  Tracker s2_norm("S2 unit norm after ⊞ and ⊕", 1e-10);
  Tracker ts2_round("TS2 round trip (x ⊞ u) ⊟ x = u", 1e-9);
  Tracker ts2_inverse("TS2 round trip x ⊞ (y ⊟ x) = y", 1e-9);
  Tracker ts2_zero("TS2 zero element", 1e-10);
  Tracker ts2_norm("TS2 unit norm after ⊞ and ⊕", 1e-10);
  Tracker ts2_tangent("TS2 tangency after ⊞ and ⊕", 1e-10);

  for (int i = 0; i < samples; ++i) {
    const SpherePoint x = sphere(rng);
    const Vec2 u = vec2(rng, 0.8);
    const SpherePoint y = s2_boxplus(x, vec2(rng, 0.8));
    s2_round.add((s2_boxminus(s2_boxplus(x, u), x) - u).norm());
    s2_inverse.add((s2_boxplus(x, s2_boxminus(y, x)).vec() - y.vec()).norm());
    s2_zero.add(std::max((s2_boxplus(x, Vec2::Zero()).vec() - x.vec()).norm(),
                         s2_boxminus(x, x).norm()));
    s2_norm.add(std::max(std::abs(s2_boxplus(x, u).vec().norm() - 1.0),
                         std::abs(s2_oplus(x, rng.normal3()).vec().norm() - 1.0)));

    const BundlePoint bx = bundle(rng);
    const Vec4 bu = vec4(rng, 0.7);
    const BundlePoint by = ts2_boxplus(bx, vec4(rng, 0.7));
    ts2_round.add((ts2_boxminus(ts2_boxplus(bx, bu), bx) - bu).norm());
    const BundlePoint back = ts2_boxplus(bx, ts2_boxminus(by, bx));
    ts2_inverse.add(std::max((back.q.vec() - by.q.vec()).norm(), (back.w - by.w).norm()));
    const BundlePoint z0 = ts2_boxplus(bx, Vec4::Zero());
    ts2_zero.add(std::max({(z0.q.vec() - bx.q.vec()).norm(), (z0.w - bx.w).norm(),
                           ts2_boxminus(bx, bx).norm()}));
    // propagation increment (dt w, dt w_dot) with w_dot tangent
    Vec6 v;
    v << 0.01 * bx.w, 0.01 * bx.q.vec().cross(rng.normal3());
    const BundlePoint p = ts2_boxplus(bx, bu);
    const BundlePoint o = ts2_oplus(bx, v);
    ts2_norm.add(std::max(std::abs(p.q.vec().norm() - 1.0), std::abs(o.q.vec().norm() - 1.0)));
    ts2_tangent.add(std::max(std::abs(p.q.vec().dot(p.w)) / std::max(1.0, p.w.norm()),
                             std::abs(o.q.vec().dot(o.w)) / std::max(1.0, o.w.norm())));
  }
  return {"manifold",
          {s2_round.r, s2_inverse.r, s2_zero.r, s2_norm.r, ts2_round.r, ts2_inverse.r, ts2_zero.r,
           ts2_norm.r, ts2_tangent.r}};
}

SuiteReport jacobian_suite(std::uint64_t seed, int samples) {
  RandomStream rng = substream(seed, Channel::kChecks);
  const double tol = 1e-4;
  Tracker A("A(v): d(R(v)x)/dv = -R x^ A^T", tol), P("P(x, y)", tol), N("N(x, y)", tol),
      O("O(x, u)", tol), s2c("S2 composite du / dv", tol), Q("Q(x, y)", tol),
      S("S(v)", tol), T("T(x, u)", tol), U("U(x, v)", tol), ts2c("TS2 composite du / dv", tol),
      Fx("F_x", tol), Fw("F_w", tol), H("H", tol);

  const SystemParams params;
  for (int i = 0; i < samples; ++i) {
    const Vec3 v = 0.8 * rng.normal3();
    const Vec3 xv = rng.normal3();
    A.add(rel(-rot_exp(v) * skew(xv) * rot_jac_A(v).transpose(),
              central_difference([&](const VecX& z) -> VecX { return rot_exp(Vec3(z)) * xv; }, v)));

    const SpherePoint x = sphere(rng);
    const SpherePoint y = s2_boxplus(x, vec2(rng, 0.8));
    P.add(rel(s2_P(x, y), central_difference(
                              [&](const VecX& z) -> VecX {
                                const Vec3 c = y.vec().cross(Vec3(z));
                                VecX out(1);
                                out[0] = std::atan2(c.norm(), y.vec().dot(Vec3(z))) / c.norm();
                                return out;
                              },
                              x.vec(), 1e-5)));
    N.add(rel(s2_N(x, y), central_difference(
                              [&](const VecX& z) -> VecX {
                                return s2_boxminus(SpherePoint::normalized(z), y);
                              },
                              x.vec())));
    const Vec2 u = vec2(rng, 0.7);
    O.add(rel(s2_O(x, u), central_difference(
                              [&](const VecX& z) -> VecX { return s2_boxplus(x, Vec2(z)).vec(); },
                              u)));
    {
      const Vec2 cu = vec2(rng, 0.3);
      const Vec3 cv = 0.3 * rng.normal3();
      const SpherePoint cy = s2_boxplus(s2_oplus(s2_boxplus(x, cu), cv), vec2(rng, 0.3));
      auto comp = [&](const Vec2& a, const Vec3& b) {
        return s2_boxminus(s2_oplus(s2_boxplus(x, a), b), cy);
      };
      s2c.add(std::max(
          rel(s2_composite_du(x, cu, cv, cy),
              central_difference([&](const VecX& z) -> VecX { return comp(Vec2(z), cv); }, cu)),
          rel(s2_composite_dv(x, cu, cv, cy),
              central_difference([&](const VecX& z) -> VecX { return comp(cu, Vec3(z)); }, cv))));
    }

    const BundlePoint bx = bundle(rng);
    const BundlePoint by = ts2_boxplus(bx, vec4(rng, 0.8));
    Q.add(rel(ts2_dminus_dx(bx, by),
              central_difference([&](const VecX& z) -> VecX { return ts2_boxminus(unstack(z), by); },
                                 stack(bx))));
    const Vec6 bv = vec6(rng, 0.6);
    S.add(rel(ts2_doplus_dx(bv), central_difference(
                                     [&](const VecX& z) -> VecX {
                                       const Mat3 R = rot_exp(bv.head<3>());
                                       VecX out(6);
                                       out << R * z.head<3>(), z.tail<3>() + R * bv.tail<3>();
                                       return out;
                                     },
                                     stack(bx))));
    const Vec4 bu = vec4(rng, 0.7);
    T.add(rel(ts2_dplus_du(bx, bu),
              central_difference([&](const VecX& z) -> VecX { return stack(ts2_boxplus(bx, Vec4(z))); },
                                 bu)));
    U.add(rel(ts2_doplus_dv(bx, bv),
              central_difference([&](const VecX& z) -> VecX { return stack(ts2_oplus(bx, Vec6(z))); },
                                 bv)));
    {
      const Vec4 cu = vec4(rng, 0.3);
      const Vec6 cv = vec6(rng, 0.3);
      const BundlePoint cy = ts2_boxplus(ts2_oplus(ts2_boxplus(bx, cu), cv), vec4(rng, 0.3));
      auto comp = [&](const Vec4& a, const Vec6& b) {
        return ts2_boxminus(ts2_oplus(ts2_boxplus(bx, a), b), cy);
      };
      ts2c.add(std::max(
          rel(ts2_composite_du(bx, cu, cv, cy),
              central_difference([&](const VecX& z) -> VecX { return comp(Vec4(z), cv); }, cu)),
          rel(ts2_composite_dv(bx, cu, cv, cy),
              central_difference([&](const VecX& z) -> VecX { return comp(cu, Vec6(z)); }, cv))));
    }

    filter::SystemState fs;
    fs.plant = random_plant(rng, 0.5);
    fs.d_p1 = 0.5 * rng.normal3();
    fs.d_p2 = 0.5 * rng.normal3();
    dynamics::ControlInput ctl;
    ctl.u1 = -12.0 * kE3 + rng.normal3();
    ctl.u2 = -12.0 * kE3 + rng.normal3();
    const double dt = 0.01;
    const auto pj = filter::propagation_jacobians(params, fs, ctl, dt);
    const filter::SystemState next = filter::propagate(params, fs, ctl, dt);
    Fx.add(rel(pj.F_x, central_difference(
                           [&](const VecX& dx) -> VecX {
                             return filter::boxminus(
                                 filter::propagate(params, filter::boxplus(fs, dx), ctl, dt), next);
                           },
                           VecX::Zero(filter::kErrorDim))));
    Fw.add(rel(pj.F_w, central_difference(
                           [&](const VecX& w) -> VecX {
                             return filter::boxminus(
                                 filter::propagate_with_noise(params, fs, ctl, w, dt), next);
                           },
                           VecX::Zero(filter::kNoiseDim))));
    H.add(rel(filter::measurement_jacobian(params, fs),
              central_difference(
                  [&](const VecX& dx) -> VecX {
                    return filter::measurement_model(params, filter::boxplus(fs, dx));
                  },
                  VecX::Zero(filter::kErrorDim))));
  }
  return {"jacobians",
          {A.r, P.r, N.r, O.r, s2c.r, Q.r, S.r, T.r, U.r, ts2c.r, Fx.r, Fw.r, H.r}};
}

SuiteReport energy_suite(std::uint64_t seed, int samples) {
  RandomStream rng = substream(seed, Channel::kChecks);
  const SystemParams params;

  Tracker drift("relative energy drift, 5 s RK4 at 1 ms", 1e-6);
  {
    PlantState s = random_plant(rng, 0.5);
    const double e0 = dynamics::total_energy(params, s);
    double worst = 0.0;
    for (int k = 0; k < 5000; ++k) {
      s = dynamics::step(params, s, {}, {}, 1e-3, dynamics::Integrator::kRk4);
      worst = std::max(worst, std::abs(dynamics::total_energy(params, s) - e0) / std::abs(e0));
    }
    drift.add(worst);
  }

  Tracker residual("|M a - F| / (1 + |F|)", 1e-10);
  Tracker hover("hover equilibrium accelerations", 1e-9);
  for (int i = 0; i < samples; ++i) {
    const PlantState s = random_plant(rng, 1.0);
    dynamics::ControlInput u{rng.normal3() * 5.0, rng.normal3() * 5.0};
    dynamics::DisturbanceSet d{rng.normal3(), rng.normal3(), rng.normal3(), rng.normal3()};
    const Mat12 M = dynamics::mass_matrix(params, s.payload.q, s.cable1.q, s.cable2.q);
    const Vec12 F = dynamics::forcing_vector(params, s, u, d);
    const Vec12 a = dynamics::solve_mass_system(M, F);
    residual.add((M * a - F).norm() / (1.0 + F.norm()));

    Vec3 q0 = rng.normal3();
    q0.z() *= 0.3;
    dynamics::DisturbanceSet hd{0.5 * rng.normal3(), 0.5 * rng.normal3(), 0.5 * rng.normal3(),
                                0.5 * rng.normal3()};
    hd.d_q0 -= q0.normalized() * q0.normalized().dot(hd.d_q0);
    const auto eq = dynamics::hover_equilibrium(params, SpherePoint::normalized(q0), hd,
                                                rng.uniform(-2.0, 2.0), Vec3::Zero());
    hover.add(dynamics::accelerations(params, eq.state, eq.control, hd).stacked().norm());
  }
  return {"energy", {drift.r, residual.r, hover.r}};
}

}  // namespace tetherkit::checks
