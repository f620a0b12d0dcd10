#pragma once

#include "jettwin/hardware.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace jettwin {

enum class ControlMode { MfcDirect, TemperatureControl };

std::string_view to_string(ControlMode mode) noexcept;
/// "mfc" or "temperature".
ControlMode parse_control_mode(std::string_view text);

/// Rectangle in camera-pixel coordinates, half-open: x_min <= x < x_max.
struct Region {
    int id = 0;
    int x_min = 0;
    int x_max = IrFrame::width;
    int y_min = 0;
    int y_max = IrFrame::height;
    int bound_mfc = 0; // channel id driven by this region's loop

    bool valid() const noexcept {
        return 0 <= x_min && x_min < x_max && x_max <= IrFrame::width && 0 <= y_min &&
               y_min < y_max && y_max <= IrFrame::height;
    }
    void validate() const;
    bool operator==(const Region&) const = default;
};

/// 3 x 3 pixel region centred on the pixel containing `pixel`.
Region region_around(int id, int px, int py, int bound_mfc, int half_width = 1);

double region_mean(const IrFrame& frame, const Region& region);

/// kp in (L/min)/degC, ki in (L/min)/(degC s), kd in (L/min s)/degC.
struct PidGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;

    void validate() const;
    bool operator==(const PidGains&) const = default;
};

struct PidLoop {
    PidGains gains;
    double setpoint = 25.0;   // degC
    double integrator = 0.0;  // degC s
    double last_error = 0.0;  // degC
    double output_bias = 0.0; // L/min
    double output_min = 0.0;
    double output_max = 300.0;

    bool operator==(const PidLoop&) const = default;
};

struct PidStep {
    PidLoop loop;
    double output = 0.0; // clamped, L/min
    double raw = 0.0;    // before clamping
};

/// Error is measured - setpoint, so a hot plate asks for more flow with
/// non-negative gains. Conditional integration: the integrator update is
/// dropped when the unclamped output is saturated and the update would push
/// it further out.
PidStep pid_step(const PidLoop& loop, double measured, double dt);

/// Simplified static decoupler. gain_matrix[i][j] is the steady gain from
/// loop j's MFC to loop i's region temperature. Returns
///   u_i = m_i - sum_{j != i} (K_ij / K_ii) * m_j.
std::vector<double> decouple(std::span<const double> deltas,
                             const std::vector<std::vector<double>>& gain_matrix);

struct FopdtModel {
    double gain = 0.0;          // degC per L/min
    double time_constant = 1.0; // s
    double dead_time = 0.0;     // s

    void validate() const;
};

enum class FitMethod { TwoPoint28_63 };
std::string_view to_string(FitMethod method) noexcept;

struct StepRecordSample {
    double t = 0.0;
    double input = 0.0;
    double output = 0.0;
};

struct FopdtFit {
    FopdtModel model;
    FitMethod method = FitMethod::TwoPoint28_63;
    double step_time = 0.0;
    double input_before = 0.0;
    double input_after = 0.0;
    double output_before = 0.0;
    double output_after = 0.0;
};

/// Gain from the settled levels, tau = 1.5 (t63 - t28), theta = t63 - tau.
/// Throws NoStepDetected or NonSettling.
FopdtFit fit_fopdt(std::span<const StepRecordSample> record);

/// Direct-synthesis PI: kp = tau / (|K| (tau_c + theta)), ki = kp / tau.
PidGains direct_synthesis_tune(const FopdtModel& model, double target_tau_c);

/// Least-squares polynomial smoothing. For point i the window spans
/// [i - (w-1)/2, i + w/2], clipped at the series ends; clipped windows are
/// refitted with the degree reduced if fewer than order + 1 points remain.
std::vector<double> savgol_filter(std::span<const double> series, int window = 10,
                                  int poly_order = 1);

} // namespace jettwin
