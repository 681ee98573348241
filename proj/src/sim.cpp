#include "tetherkit/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "tetherkit/errors.hpp"

namespace tetherkit::sim {

namespace {

Reference hold(const Vec3& p1, const Vec3& p2) {
  return {p1, Vec3::Zero(), p2, Vec3::Zero()};
}

Reference figure_eight(double t) {
  const double s = std::sin(t), c = std::cos(t);
  Reference r;
  r.p1 = Vec3(1.0 + 0.7 * s, 0.7 * s * c, -1.0 + 0.2 * s);
  r.v1 = Vec3(0.7 * c, 0.7 * std::cos(2.0 * t), 0.2 * c);
  r.p2 = Vec3(-1.0 + 0.7 * s, 0.7 * s * c, -1.0 + 0.25 * s);
  r.v2 = Vec3(0.7 * c, 0.7 * std::cos(2.0 * t), 0.25 * c);
  return r;
}

int steps_of(double span, double dt, const char* what) {
  const double n = span / dt;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError(fmt::format("{} must be an integer multiple of its step", what));
  }
  return static_cast<int>(r);
}

SystemState with_truth_forces(const PlantState& plant, const DisturbanceSet& d) {
  SystemState s;
  s.plant = plant;
  s.d_p1 = d.d_p1;
  s.d_p2 = d.d_p2;
  return s;
}

MatX initial_covariance(const ScenarioConfig& cfg, FilterMode mode) {
  VecX diag(filter::kErrorDim);
  diag << VecX::Constant(18, cfg.init_cov_nominal), VecX::Constant(6, cfg.init_cov_disturbance);
  return MatX(diag.head(filter::error_dim(mode)).asDiagonal());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

ScenarioId parse_scenario(const std::string& name) {
  if (name == "point_stab") return ScenarioId::kPointStab;
  if (name == "figure8") return ScenarioId::kFigure8;
  if (name == "payload_pulse") return ScenarioId::kPayloadPulse;
  throw ConfigError(fmt::format(
      "unknown scenario '{}' (expected point_stab, figure8 or payload_pulse)", name));
}

std::string scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::kPointStab: return "point_stab";
    case ScenarioId::kFigure8: return "figure8";
    case ScenarioId::kPayloadPulse: return "payload_pulse";
  }
  return "?";
}

FilterSelection parse_filter_selection(const std::string& name) {
  if (name == "do_esekf") return FilterSelection::kDoEsekf;
  if (name == "baseline") return FilterSelection::kBaseline;
  if (name == "both") return FilterSelection::kBoth;
  throw ConfigError(fmt::format("unknown filter '{}' (expected do_esekf, baseline or both)", name));
}

Vec3 pid_thrust(int drone, const Vec3& p, const Vec3& v, const Vec3& p_des, const Vec3& v_des,
                const PidGains& gains, const SystemParams& params, PidState& state, double dt) {
  const double m = drone == 1 ? params.m1 : params.m2;
  const Vec3 e = p - p_des;
  const Vec3 e_dot = v - v_des;
  state.integral = (state.integral + gains.ki * dt * e)
                       .cwiseMax(-gains.integral_limit)
                       .cwiseMin(gains.integral_limit);
  Vec3 u = -(m + 0.5 * params.m0) * params.g * kE3 - gains.kp * e - gains.kd * e_dot -
           state.integral;
  const double n = u.norm();
  if (n > gains.max_thrust) u *= gains.max_thrust / n;
  return u;
}

Vec12 synth_measurement(const PlantState& truth, const SystemParams& params, RandomStream& rng,
                        double variance) {
  const auto k = dynamics::drone_kinematics(params, truth);
  Vec12 z;
  z << k.p1, k.p2, k.v1, k.v2;
  const double sigma = std::sqrt(variance);
  for (int i = 0; i < 12; ++i) z[i] += sigma * rng.normal();
  return z;
}

DisturbanceSet DisturbanceSchedule::at(double t) const {
  DisturbanceSet d;
  for (const auto& s : segments) {
    if (t < s.t_begin || t > s.t_end) continue;
    d.d_p0 += s.d.d_p0;
    d.d_q0 += s.d.d_q0;
    d.d_p1 += s.d.d_p1;
    d.d_p2 += s.d.d_p2;
  }
  return d;
}

void ScenarioConfig::validate() const {
  params.validate();
  noise.validate();
  if (!(dt_truth > 0.0) || !(dt_filter >= dt_truth)) {
    throw ConfigError("require 0 < dt_truth <= dt_filter");
  }
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  steps_of(dt_filter, dt_truth, "dt_filter");
  steps_of(duration, dt_filter, "duration");
  if (!(meas_variance >= 0.0)) throw ConfigError("meas_variance must be non-negative");
  if (!(init_cov_nominal > 0.0) || !(init_cov_disturbance > 0.0)) {
    throw ConfigError("initial covariances must be positive");
  }
  if (!(gains.max_thrust > 0.0) || !(gains.integral_limit >= 0.0)) {
    throw ConfigError("controller limits must be positive");
  }
  if (gate && !(*gate > 0.0)) throw ConfigError("gate must be positive");
  if (!reference) throw ConfigError("scenario has no reference trajectory");
}

PlantState table_initial_state(double q1_tilt) {
  PlantState s;
  s.p0 = Vec3(0.03, -0.05, -0.03);
  s.payload.q = manifold::SpherePoint::normalized(kE1);
  const Vec3 tilted(0.0, -std::sin(q1_tilt), std::cos(q1_tilt));
  s.cable1.q = manifold::SpherePoint::normalized(tilted);
  s.cable2.q = manifold::SpherePoint::normalized(tilted);
  return s;
}

SystemParams params_from_config(const Config& c) {
  SystemParams p;
  p.m0 = c.get_double("m0", p.m0);
  p.m1 = c.get_double("m1", p.m1);
  p.m2 = c.get_double("m2", p.m2);
  p.J0 = c.get_double("J0", p.J0);
  p.rho1 = c.get_double("rho1", p.rho1);
  p.rho2 = c.get_double("rho2", p.rho2);
  p.l1 = c.get_double("l1", p.l1);
  p.l2 = c.get_double("l2", p.l2);
  p.g = c.get_double("g", p.g);
  p.validate();
  return p;
}

ScenarioConfig make_scenario(ScenarioId id, const Config& c, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.id = id;
  cfg.seed = seed;
  cfg.params = params_from_config(c);

  const double q_scale = c.get_double("Qk_scale", 0.1);
  const double r_scale = c.get_double("Rk_scale", 0.01);
  cfg.noise.Q = q_scale * MatX::Identity(filter::kNoiseDim, filter::kNoiseDim);
  cfg.noise.R = r_scale * MatX::Identity(filter::kMeasDim, filter::kMeasDim);
  if (c.has("gate")) cfg.gate = c.get_double("gate", 0.0);
  cfg.init_cov_nominal = c.get_double("init_cov_nominal", cfg.init_cov_nominal);
  cfg.init_cov_disturbance = c.get_double("init_cov_disturbance", cfg.init_cov_disturbance);
  cfg.meas_variance = c.get_double("meas_variance", cfg.meas_variance);

  cfg.dt_truth = c.get_double("dt_truth", cfg.dt_truth);
  cfg.dt_filter = c.get_double("dt_filter", cfg.dt_filter);
  cfg.duration = c.get_double("duration", id == ScenarioId::kPayloadPulse ? 20.0 : 30.0);

  cfg.gains.kp = c.get_double("kp", cfg.gains.kp);
  cfg.gains.ki = c.get_double("ki", cfg.gains.ki);
  cfg.gains.kd = c.get_double("kd", cfg.gains.kd);
  cfg.gains.integral_limit = c.get_double("integral_limit", cfg.gains.integral_limit);
  cfg.gains.max_thrust = c.get_double("max_thrust", cfg.gains.max_thrust);

  cfg.initial = table_initial_state(c.get_double("q1_tilt", 3.14159265358979323846 / 18.0));
  cfg.initial.p0 = c.get_vec3("p0_init", cfg.initial.p0);
  cfg.initial_error = c.get_int("initial_error", 1) != 0;

  DisturbanceSegment constant;
  constant.t_begin = 0.0;
  constant.t_end = std::numeric_limits<double>::infinity();
  constant.d.d_p1 = c.get_vec3("d_p1", Vec3(1.0, -1.0, 4.0));
  constant.d.d_p2 = c.get_vec3("d_p2", Vec3(1.0, 1.0, 2.0));
  constant.d.d_p0 = c.get_vec3("d_p0", Vec3::Zero());
  constant.d.d_q0 = c.get_vec3("d_q0", Vec3::Zero());
  cfg.schedule.segments.push_back(constant);

  if (id == ScenarioId::kPayloadPulse) {
    DisturbanceSegment pulse;
    pulse.t_begin = c.get_double("pulse_start", 7.0);
    pulse.t_end = c.get_double("pulse_end", 10.0);
    pulse.d.d_p0 = c.get_vec3("pulse_d_p0", Vec3(5.0, 5.0, 0.0));
    if (!(pulse.t_end >= pulse.t_begin)) throw ConfigError("pulse_end must follow pulse_start");
    cfg.schedule.segments.push_back(pulse);
  }

  if (id == ScenarioId::kFigure8) {
    cfg.reference = figure_eight;
  } else {
    const Reference r = hold(Vec3(5.0, 4.0, -2.0), Vec3(3.0, 4.0, -2.0));
    cfg.reference = [r](double) { return r; };
  }
  cfg.validate();
  return cfg;
}

Metrics compute_metrics(const Trace& trace, const MetricsOptions& options) {
  if (trace.empty()) throw ConfigError("cannot compute metrics of an empty trace");
  Metrics m;
  const double t_end = trace.back().t;
  const double rmse_from = t_end * (1.0 - options.rmse_window);
  const double settle_from = t_end * (1.0 - options.settle_window);

  double sq = 0.0;
  int n_rmse = 0;
  Eigen::Matrix<double, 6, 1> dsum = Eigen::Matrix<double, 6, 1>::Zero();
  int n_settle = 0;
  std::optional<std::size_t> last_bad;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    m.e_q0.push_back(r.e_q0);
    const double perr = (r.truth.plant.p0 - r.estimate.plant.p0).norm();
    if (r.t >= rmse_from) {
      sq += perr * perr;
      ++n_rmse;
    }
    if (r.t >= settle_from) {
      dsum.head<3>() += r.estimate.d_p1 - r.truth.d_p1;
      dsum.tail<3>() += r.estimate.d_p2 - r.truth.d_p2;
      ++n_settle;
    }
    if (!(perr < options.convergence_threshold)) last_bad = i;
  }
  m.position_rmse = n_rmse ? std::sqrt(sq / n_rmse) : 0.0;
  m.e_q0_mean = mean_of(m.e_q0);
  m.e_q0_max = *std::max_element(m.e_q0.begin(), m.e_q0.end());
  if (n_settle) {
    for (int k = 0; k < 6; ++k) {
      m.disturbance_error.push_back(std::abs(dsum[k] / n_settle));
    }
    m.disturbance_error_max =
        *std::max_element(m.disturbance_error.begin(), m.disturbance_error.end());
  }
  if (!last_bad) {
    m.convergence_time = trace.front().t;
  } else if (*last_bad + 1 < trace.size()) {
    m.convergence_time = trace[*last_bad + 1].t;
  }
  m.final_cov_trace = trace.back().cov_trace;

  if (options.pulse) {
    const auto [start, end] = *options.pulse;
    std::vector<double> pre;
    double peak = 0.0;
    Eigen::Matrix<double, 6, 1> rsum = Eigen::Matrix<double, 6, 1>::Zero();
    int n_rec = 0;
    for (const TraceRecord& r : trace) {
      if (r.t >= start - 1.0 && r.t < start) pre.push_back(r.cov_trace);
      if (r.t >= start) peak = std::max(peak, r.cov_trace);
      if (r.t >= end + 4.0 && r.t <= end + 5.0) {
        rsum.head<3>() += r.estimate.d_p1 - r.truth.d_p1;
        rsum.tail<3>() += r.estimate.d_p2 - r.truth.d_p2;
        ++n_rec;
      }
    }
    if (!pre.empty()) m.pre_pulse_cov_trace = mean_of(pre);
    m.max_cov_trace_after_onset = peak;
    if (n_rec) m.recovery_error_max = (rsum / n_rec).cwiseAbs().maxCoeff();
  }
  return m;
}

MetricsOptions metrics_options(const ScenarioConfig& cfg, const Config& c) {
  MetricsOptions o;
  o.rmse_window = c.get_double("rmse_window", o.rmse_window);
  o.settle_window = c.get_double("settle_window", o.settle_window);
  o.convergence_threshold = c.get_double("convergence_threshold", o.convergence_threshold);
  if (!(o.rmse_window > 0.0 && o.rmse_window <= 1.0) ||
      !(o.settle_window > 0.0 && o.settle_window <= 1.0)) {
    throw ConfigError("metric windows must lie in (0, 1]");
  }
  if (cfg.id == ScenarioId::kPayloadPulse && cfg.schedule.segments.size() > 1) {
    const auto& pulse = cfg.schedule.segments.back();
    o.pulse = std::make_pair(pulse.t_begin, pulse.t_end);
  }
  return o;
}

RunResult run_scenario(const ScenarioConfig& cfg, FilterSelection selection,
                       const MetricsOptions& options) {
  cfg.validate();
  std::vector<FilterMode> modes;
  if (selection != FilterSelection::kBaseline) modes.push_back(FilterMode::kDisturbanceObserver);
  if (selection != FilterSelection::kDoEsekf) modes.push_back(FilterMode::kBaseline);

  RandomStream meas_rng = substream(cfg.seed, Channel::kMeasurement);
  RandomStream init_rng = substream(cfg.seed, Channel::kInitialError);

  PlantState truth = cfg.initial;
  SystemState start = with_truth_forces(truth, DisturbanceSet{});
  start.d_p1.setZero();
  start.d_p2.setZero();
  if (cfg.initial_error) {
    VecX e = VecX::Zero(filter::kErrorDim);
    e.head(18) = std::sqrt(cfg.init_cov_nominal) * init_rng.normal_vector(18);
    start = filter::boxplus(start, e);
  }

  std::vector<filter::FilterConfig> fcfgs;
  std::vector<filter::FilterState> states;
  RunResult result;
  for (FilterMode mode : modes) {
    filter::FilterConfig fc;
    fc.params = cfg.params;
    fc.noise = cfg.noise;
    fc.mode = mode;
    fc.gate = cfg.gate;
    fcfgs.push_back(fc);
    states.push_back({start, initial_covariance(cfg, mode), mode});
    result.filters.push_back({mode, {}, {}});
  }

  const int steps = steps_of(cfg.duration, cfg.dt_filter, "duration");
  const int sub = steps_of(cfg.dt_filter, cfg.dt_truth, "dt_filter");
  for (auto& f : result.filters) f.trace.reserve(steps);
  PidState pid1, pid2;

  try {
    for (int k = 0; k < steps; ++k) {
      const double t = k * cfg.dt_filter;
      const Reference ref = cfg.reference(t);
      const auto kin = dynamics::drone_kinematics(cfg.params, truth);
      ControlInput u;
      u.u1 = pid_thrust(1, kin.p1, kin.v1, ref.p1, ref.v1, cfg.gains, cfg.params, pid1,
                        cfg.dt_filter);
      u.u2 = pid_thrust(2, kin.p2, kin.v2, ref.p2, ref.v2, cfg.gains, cfg.params, pid2,
                        cfg.dt_filter);
      for (int j = 0; j < sub; ++j) {
        const DisturbanceSet d = cfg.schedule.at(t + j * cfg.dt_truth);
        truth = dynamics::step(cfg.params, truth, u, d, cfg.dt_truth, dynamics::Integrator::kRk4);
      }
      const double t_next = (k + 1) * cfg.dt_filter;
      const Vec12 z = synth_measurement(truth, cfg.params, meas_rng, cfg.meas_variance);
      const SystemState truth_rec = with_truth_forces(truth, cfg.schedule.at(t_next));

      for (std::size_t i = 0; i < states.size(); ++i) {
        filter::FilterState prior = filter::predict(fcfgs[i], states[i], u, cfg.dt_filter);
        try {
          states[i] = filter::update(fcfgs[i], prior, z);
        } catch (const InnovationGateExceeded&) {
          states[i] = prior;
        }
        TraceRecord rec;
        rec.t = t_next;
        rec.truth = truth_rec;
        rec.estimate = states[i].x;
        rec.z = z;
        rec.e_q0 = 1.0 - truth.payload.q.vec().dot(states[i].x.plant.payload.q.vec());
        rec.cov_trace = states[i].P.trace();
        result.filters[i].trace.push_back(rec);
      }
    }
  } catch (const SingularMass& e) {
    result.failure = e.what();
  }

  for (auto& f : result.filters) {
    if (!f.trace.empty()) f.metrics = compute_metrics(f.trace, options);
  }
  return result;
}

NeesResult nees_monte_carlo(const SystemParams& params, const filter::NoiseConfig& noise,
                            const NeesOptions& options) {
  noise.validate();
  const int steps = steps_of(options.duration, options.dt, "nees duration");
  const MatX P0 = filter::initial_covariance(FilterMode::kDisturbanceObserver);
  const MatX L0 = P0.llt().matrixL();
  const MatX LQ = noise.Q.llt().matrixL();
  const MatX LR = noise.R.llt().matrixL();
  const auto eq = dynamics::hover_equilibrium(params, manifold::SpherePoint::normalized(kE1),
                                              DisturbanceSet{}, 0.0, Vec3::Zero());
  const auto home = dynamics::drone_kinematics(params, eq.state);

  filter::FilterConfig fc;
  fc.params = params;
  fc.noise = noise;

  std::vector<std::vector<double>> per_run(options.runs);
  parallel_for(options.runs, batch_threads(), [&](int r) {
    const std::uint64_t run_seed = splitmix64(options.seed) + std::uint64_t(r);
    RandomStream init_rng = substream(run_seed, Channel::kInitialError);
    RandomStream proc_rng = substream(run_seed, Channel::kProcess);
    RandomStream meas_rng = substream(run_seed, Channel::kMeasurement);

    filter::FilterState fs{SystemState{eq.state, Vec3::Zero(), Vec3::Zero()}, P0};
    SystemState truth = filter::boxplus(fs.x, L0 * init_rng.normal_vector(filter::kErrorDim));
    PidState pid1, pid2;
    std::vector<double>& out = per_run[r];
    out.reserve(steps);
    for (int k = 0; k < steps; ++k) {
      const auto kin = dynamics::drone_kinematics(params, truth.plant);
      ControlInput u;
      u.u1 = pid_thrust(1, kin.p1, kin.v1, home.p1, Vec3::Zero(), PidGains{}, params, pid1,
                        options.dt);
      u.u2 = pid_thrust(2, kin.p2, kin.v2, home.p2, Vec3::Zero(), PidGains{}, params, pid2,
                        options.dt);
      const VecX w = LQ * proc_rng.normal_vector(filter::kNoiseDim);
      truth = filter::propagate_with_noise(params, truth, u, w, options.dt);
      const Vec12 z =
          filter::measurement_model(params, truth) + LR * meas_rng.normal_vector(filter::kMeasDim);
      fs = filter::filter_step(fc, fs, u, z, options.dt);
      out.push_back(filter::nees(fs, truth));
    }
  });

  NeesResult res;
  const double n = options.runs;
  const boost::math::chi_squared chi(n * filter::kErrorDim);
  res.band_low = boost::math::quantile(chi, 0.025) / n;
  res.band_high = boost::math::quantile(chi, 0.975) / n;
  res.average.assign(steps, 0.0);
  for (const auto& run : per_run) {
    for (int k = 0; k < steps; ++k) res.average[k] += run[k] / n;
  }
  int inside = 0;
  for (double a : res.average) {
    if (a >= res.band_low && a <= res.band_high) ++inside;
  }
  res.time_average = mean_of(res.average);
  res.fraction_in_band = double(inside) / steps;
  return res;
}

int batch_threads() {
  if (const char* env = std::getenv("TETHERKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError(fmt::format("TETHERKIT_THREADS must be a positive integer, got '{}'", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace tetherkit::sim
