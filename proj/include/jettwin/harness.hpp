#pragma once

#include "jettwin/world.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jettwin {

/// Free parameters of the plant that are fitted to the reference bump test.
/// Defaults equal fixtures/calibration.cfg.
struct Calibration {
    double h_ref = 17.382752096330158;     // W/(m^2 K) at the reference flow
    double jet_sigma = 0.07863571971558096; // m
    double gun_power = 35.79065742209782;  // W
    double gun_sigma = 0.03;               // m

    bool operator==(const Calibration&) const = default;
};

/// Reads `jet.h_ref`, `jet.sigma`, `gun.power`, `gun.sigma`.
Calibration load_calibration(const std::string& path);
std::string calibration_to_text(const Calibration& cal);
/// The committed fixture shipped in the source tree.
std::string default_calibration_path();

struct ResponseMetrics {
    double steady_gain = 0.0;   // output units per input unit
    double t63 = 0.0;           // s after the step
    double settling_time = 0.0; // s after the step, 2% band
    double overshoot = 0.0;     // % of the output change
    std::optional<double> steady_state_error; // final output - final setpoint
    double step_time = 0.0;
    double input_before = 0.0;
    double input_after = 0.0;
    double output_before = 0.0;
    double output_after = 0.0;
    /// No output change to characterise; t63/settling are left at zero.
    bool degenerate = false;
    /// The tail of the record is flat (last two 5% windows within 2% of the change).
    bool converged = true;
};

enum class StepInput { Flow, Setpoint };

/// Metrics of one step in (t, input, output) samples. Crossings and the final
/// level use the Savitzky-Golay (10, 1) filtered output; the initial level is
/// the raw mean of up to 30 pre-step samples. Throws NoStepDetected.
ResponseMetrics summarize_response(std::span<const StepRecordSample> samples,
                                   bool setpoint_tracking = false);
/// Same, pulling input/output columns out of a run log.
ResponseMetrics summarize_response(std::span<const RunLogRecord> log, int channel, int region,
                                   StepInput input = StepInput::Flow);

struct ExperimentOptions {
    std::optional<std::string> out_dir; // logs are written only when set
    std::uint64_t seed = 1;
    Calibration calibration;
    WorldConfig world; // plate, channel count, camera noise; seed and jets come from above
};

struct ExperimentResult {
    ResponseMetrics metrics;
    std::vector<RunLogRecord> records;
    std::optional<std::string> run_log_path;
    std::optional<std::string> pixel_log_path;
    /// An active controller ended the run pinned at an MFC limit.
    bool saturated = false;
    double final_flow = 0.0;     // mean commanded flow, last 10% of the run
    double post_settling_std = 0.0; // region mean after the settling time
};

struct BumpOptions {
    double flow_from = 100.0;
    double flow_to = 150.0;
    double pre_step = 100.0; // s at flow_from before the step
    double duration = 3000.0; // s after the step
};

/// Single centre inlet (outlets at the plate ends), gun over the inlet,
/// warm-started at the flow_from equilibrium. Throws InvalidArgument for
/// flows outside [0, 300] L/min.
ExperimentResult run_bump_test(const BumpOptions& bump, const ExperimentOptions& opts);

struct TrackingOptions {
    double setpoint_from = 98.0;
    double setpoint_to = 75.0;
    /// Defaults to the engine's own bump-fit-tune pipeline.
    std::optional<PidGains> gains;
    double pre_step = 100.0;
    double duration = 3000.0;
};

/// Desired closed-loop time constant used by the engine's tuning step.
inline constexpr double default_closed_loop_tau = 273.3; // s

/// Bump test at the default 100 -> 150 L/min, FOPDT fit, direct synthesis.
PidGains engine_tuned_gains(const ExperimentOptions& opts, double target_tau_c = default_closed_loop_tau);

/// Single-inlet PI loop, warm-started at the flow that holds setpoint_from.
ExperimentResult run_setpoint_tracking(const TrackingOptions& tracking, const ExperimentOptions& opts);

struct PhaseFlows {
    double t_begin = 0.0;
    double t_end = 0.0;
    double mfc0 = 0.0; // mean commanded flow over the second half of the phase
    double mfc1 = 0.0;
};

struct DisturbanceReport {
    std::vector<RunLogRecord> records;
    std::optional<std::string> run_log_path;
    std::optional<std::string> pixel_log_path;
    /// [0, gun on), [gun on, relocation), [relocation, end).
    std::vector<PhaseFlows> phases;
    std::optional<double> crossover_time; // first sign change of mfc0 - mfc1 after relocation
    double final_slope_region0 = 0.0;     // degC/s, linear fit over the trailing window
    double final_slope_region1 = 0.0;
    bool resettled = false;
};

struct DisturbanceOptions {
    double gun_on = 50.0;
    double relocate = 1000.0;
    double end = 4000.0;
    double gun_power = 60.0;
    double bias_flow = 20.0; // both inlets before the controllers engage
    double slope_window = 100.0;
    double slope_limit = 0.01;
};

/// Five channels [Outlet, Inlet (MFC 1), Closed, Inlet (MFC 0), Outlet].
/// Region 0 sits over MFC 0 (channel 3), region 1 over MFC 1 (channel 1),
/// both PI at kp = 10, ki = 0.1, setpoint 100 degC. The gun starts over
/// MFC 1's zone and moves over MFC 0's zone.
DisturbanceReport run_disturbance_rejection(const DisturbanceOptions& dist, const ExperimentOptions& opts);

/// Least-squares slope of y(t).
double linear_slope(std::span<const double> t, std::span<const double> y);

struct CalibrationTargets {
    double temp_at_100 = 71.0; // degC, region mean at 100 L/min
    double temp_at_150 = 64.0; // degC at 150 L/min
    double t63 = 400.0;        // s, 100 -> 150 L/min step
    double t63_scale = 50.0;   // s of t63 error weighted like 1 degC
};

struct CalibrationFit {
    Calibration calibration;
    double temp_at_100 = 0.0;
    double temp_at_150 = 0.0;
    double t63 = 0.0;
    double temp_at_75 = 0.0; // not fitted; the tracking scenario's end point
    int evaluations = 0;
};

/// Steady region-mean temperature of the bump scenario at `flow`, noise-free.
double bump_steady_temperature(const Calibration& cal, double flow, const WorldConfig& base = {});
/// Noise-free t63 of the bump scenario between two flows, s after the step.
double bump_t63(const Calibration& cal, double flow_from, double flow_to, const WorldConfig& base = {});

/// Levenberg-Marquardt over (h_ref, jet_sigma, gun_power) on the targets.
CalibrationFit calibrate(const CalibrationTargets& targets, Calibration start = {},
                         const WorldConfig& base = {});

} // namespace jettwin
