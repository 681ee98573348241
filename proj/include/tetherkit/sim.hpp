#pragma once

// Closed-loop scenario harness: PID-driven drones, RK4 ground truth, noisy
// drone measurements and one or two filters running on the same data.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tetherkit/config.hpp"
#include "tetherkit/dynamics.hpp"
#include "tetherkit/filter.hpp"
#include "tetherkit/rng.hpp"

namespace tetherkit::sim {

using dynamics::ControlInput;
using dynamics::DisturbanceSet;
using dynamics::PlantState;
using dynamics::SystemParams;
using filter::FilterMode;
using filter::SystemState;

enum class ScenarioId { kPointStab, kFigure8, kPayloadPulse };

/// Throws ConfigError for unknown names.
ScenarioId parse_scenario(const std::string& name);
std::string scenario_name(ScenarioId id);

enum class FilterSelection { kDoEsekf, kBaseline, kBoth };
FilterSelection parse_filter_selection(const std::string& name);

struct PidGains {
  double kp = 8.0;
  double ki = 1.5;
  double kd = 5.0;
  double integral_limit = 5.0;  // per-axis clamp on the integral term [N]
  double max_thrust = 30.0;     // norm saturation [N]
};

struct PidState {
  Vec3 integral = Vec3::Zero();  // accumulated Ki * error, already clamped
};

struct Reference {
  Vec3 p1, v1, p2, v2;
};

/// Per-axis PID on position with feedforward -(m_i + m0/2) g e3. `dt` advances
/// the integral; pass 0 to evaluate without updating it.
Vec3 pid_thrust(int drone, const Vec3& p, const Vec3& v, const Vec3& p_des, const Vec3& v_des,
                const PidGains& gains, const SystemParams& params, PidState& state, double dt);

/// z = h(truth) + n with n ~ N(0, variance I12).
Vec12 synth_measurement(const PlantState& truth, const SystemParams& params, RandomStream& rng,
                        double variance);

/// Additive disturbance active on the closed interval [t_begin, t_end].
struct DisturbanceSegment {
  double t_begin = 0.0;
  double t_end = 0.0;
  DisturbanceSet d;
};

struct DisturbanceSchedule {
  std::vector<DisturbanceSegment> segments;
  DisturbanceSet at(double t) const;
};

struct ScenarioConfig {
  ScenarioId id = ScenarioId::kPointStab;
  SystemParams params;
  PlantState initial;
  DisturbanceSchedule schedule;
  std::function<Reference(double)> reference;
  std::uint64_t seed = 0;
  double dt_truth = 1e-3;
  double dt_filter = 1e-2;
  double duration = 30.0;
  PidGains gains;
  filter::NoiseConfig noise = filter::NoiseConfig::defaults();
  std::optional<double> gate;
  double meas_variance = 0.01;
  double init_cov_nominal = 1e-2;
  double init_cov_disturbance = 1.0;
  bool initial_error = true;  // start the filter at truth ⊞ a draw from P0

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Table initial state: p0 = [0.03, -0.05, -0.03], q0 = e1, q1 = q2 = Rx(tilt) e3.
PlantState table_initial_state(double q1_tilt = 3.14159265358979323846 / 18.0);

/// Plant parameters with any of m0, m1, m2, J0, rho1, rho2, l1, l2, g overridden.
SystemParams params_from_config(const Config& config);

/// Scenario defaults, overridden by any keys present in `config`.
ScenarioConfig make_scenario(ScenarioId id, const Config& config, std::uint64_t seed);

struct TraceRecord {
  double t = 0.0;
  SystemState truth;
  SystemState estimate;
  Vec12 z = Vec12::Zero();
  double e_q0 = 0.0;
  double cov_trace = 0.0;
};

using Trace = std::vector<TraceRecord>;

struct MetricsOptions {
  double rmse_window = 0.5;    // trailing fraction of the run used for RMSE
  double settle_window = 0.25; // trailing fraction used for disturbance settling
  double convergence_threshold = 0.1;  // [m]
  std::optional<std::pair<double, double>> pulse;  // [start, end]
};

struct Metrics {
  double position_rmse = 0.0;
  double e_q0_mean = 0.0;
  double e_q0_max = 0.0;
  std::vector<double> e_q0;
  /// |mean(d_hat - d)| per axis over the settle window (dp1 xyz, dp2 xyz).
  std::vector<double> disturbance_error;
  double disturbance_error_max = 0.0;
  std::optional<double> convergence_time;
  double final_cov_trace = 0.0;
  // Pulse scenarios only.
  std::optional<double> pre_pulse_cov_trace;
  std::optional<double> max_cov_trace_after_onset;
  std::optional<double> recovery_error_max;  // per-axis |mean error| over [end+4, end+5]
};

/// Throws ConfigError on an empty trace.
Metrics compute_metrics(const Trace& trace, const MetricsOptions& options = {});

struct FilterRun {
  FilterMode mode;
  Trace trace;
  Metrics metrics;
};

struct RunResult {
  std::vector<FilterRun> filters;
  /// Set when the run aborted with SingularMass; traces hold the records so far.
  std::optional<std::string> failure;
};

MetricsOptions metrics_options(const ScenarioConfig& cfg, const Config& config);

RunResult run_scenario(const ScenarioConfig& cfg, FilterSelection selection,
                       const MetricsOptions& options = {});

struct NeesOptions {
  int runs = 50;
  double duration = 10.0;
  double dt = 1e-2;
  std::uint64_t seed = 1;
};

struct NeesResult {
  std::vector<double> average;  // across runs, per filter step
  double time_average = 0.0;
  double band_low = 0.0;
  double band_high = 0.0;
  double fraction_in_band = 0.0;
  bool within_band() const { return time_average >= band_low && time_average <= band_high; }
};

/// Monte-Carlo consistency check: truth follows the filter's own discrete
/// model driven by N(0, Q) noise, measurements carry N(0, R) noise, and the
/// initial error is drawn from P0.
NeesResult nees_monte_carlo(const SystemParams& params, const filter::NoiseConfig& noise,
                            const NeesOptions& options);

/// Worker count from TETHERKIT_THREADS, else hardware concurrency (>= 1).
int batch_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace tetherkit::sim
