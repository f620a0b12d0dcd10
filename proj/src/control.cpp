#include "jettwin/control.hpp"

#include "jettwin/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace jettwin {

std::string_view to_string(ControlMode mode) noexcept {
    return mode == ControlMode::MfcDirect ? "mfc" : "temperature";
}

ControlMode parse_control_mode(std::string_view text) {
    if (text == "mfc") return ControlMode::MfcDirect;
    if (text == "temperature") return ControlMode::TemperatureControl;
    fail(ErrorCode::InvalidArgument, "unknown control mode '" + std::string(text) + "'");
}

void Region::validate() const {
    if (!valid()) {
        fail(ErrorCode::InvalidRegion,
             "region " + std::to_string(id) + " bounds x[" + std::to_string(x_min) + "," +
                 std::to_string(x_max) + ") y[" + std::to_string(y_min) + "," +
                 std::to_string(y_max) + ") are outside 0..32 / 0..24 or empty");
    }
}

Region region_around(int id, int px, int py, int bound_mfc, int half_width) {
    Region r{id, px - half_width, px + half_width + 1, py - half_width, py + half_width + 1,
             bound_mfc};
    r.validate();
    return r;
}

double region_mean(const IrFrame& frame, const Region& region) {
    region.validate();
    double sum = 0.0;
    for (int y = region.y_min; y < region.y_max; ++y) {
        for (int x = region.x_min; x < region.x_max; ++x) sum += frame.at(x, y);
    }
    return sum / ((region.x_max - region.x_min) * (region.y_max - region.y_min));
}

void PidGains::validate() const {
    for (double g : {kp, ki, kd}) {
        if (!std::isfinite(g) || g < 0.0) {
            fail(ErrorCode::InvalidArgument, "PID gains must be finite and >= 0");
        }
    }
}

PidStep pid_step(const PidLoop& loop, double measured, double dt) {
    if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "PID step requires dt > 0");
    const auto& g = loop.gains;
    const double error = measured - loop.setpoint;
    const double derivative = g.kd * (error - loop.last_error) / dt;

    double integrator = loop.integrator + error * dt;
    double raw = loop.output_bias + g.kp * error + g.ki * integrator + derivative;
    const bool pushes_high = raw > loop.output_max && g.ki * error > 0.0;
    const bool pushes_low = raw < loop.output_min && g.ki * error < 0.0;
    if (pushes_high || pushes_low) {
        integrator = loop.integrator;
        raw = loop.output_bias + g.kp * error + g.ki * integrator + derivative;
    }

    PidStep out;
    out.loop = loop;
    out.loop.integrator = integrator;
    out.loop.last_error = error;
    out.raw = raw;
    out.output = std::clamp(raw, loop.output_min, loop.output_max);
    return out;
}

std::vector<double> decouple(std::span<const double> deltas,
                             const std::vector<std::vector<double>>& gain_matrix) {
    const auto n = deltas.size();
    if (gain_matrix.size() != n) {
        fail(ErrorCode::DimensionMismatch, "decoupler gain matrix must be square and match loops");
    }
    Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (gain_matrix[i].size() != n) {
            fail(ErrorCode::DimensionMismatch, "decoupler gain matrix must be square");
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = gain_matrix[i][j];
            if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "non-finite decoupler gain");
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
        if (gain_matrix[i][i] == 0.0) {
            fail(ErrorCode::InvalidArgument,
                 "decoupler gain matrix has zero diagonal at " + std::to_string(i));
        }
    }
    if (n > 0 && Eigen::FullPivLU<Eigen::MatrixXd>(k).rank() < static_cast<Eigen::Index>(n)) {
        fail(ErrorCode::InvalidArgument, "decoupler gain matrix is singular");
    }
    std::vector<double> out(deltas.begin(), deltas.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || gain_matrix[i][j] == 0.0) continue;
            out[i] -= gain_matrix[i][j] / gain_matrix[i][i] * deltas[j];
        }
    }
    return out;
}

void FopdtModel::validate() const {
    if (!std::isfinite(gain) || gain == 0.0) fail(ErrorCode::InvalidArgument, "FOPDT gain must be non-zero");
    if (!(time_constant > 0.0) || !std::isfinite(time_constant)) {
        fail(ErrorCode::InvalidArgument, "FOPDT time constant must be > 0");
    }
    if (!(dead_time >= 0.0) || !std::isfinite(dead_time)) {
        fail(ErrorCode::InvalidArgument, "FOPDT dead time must be >= 0");
    }
}

std::string_view to_string(FitMethod method) noexcept {
    switch (method) {
    case FitMethod::TwoPoint28_63: return "two-point-28.3/63.2";
    }
    return "unknown";
}

namespace {

double mean_output(std::span<const StepRecordSample> s) {
    double sum = 0.0;
    for (const auto& r : s) sum += r.output;
    return sum / static_cast<double>(s.size());
}

/// Time at which the normalised response first reaches `fraction`,
/// interpolating linearly between samples.
double crossing_time(std::span<const StepRecordSample> rec, std::size_t from, double y0,
                     double dy, double fraction) {
    double prev_t = rec[from].t;
    double prev_f = (rec[from].output - y0) / dy;
    for (std::size_t k = from; k < rec.size(); ++k) {
        const double f = (rec[k].output - y0) / dy;
        if (f >= fraction) {
            if (k == from || f == prev_f) return rec[k].t;
            return prev_t + (fraction - prev_f) / (f - prev_f) * (rec[k].t - prev_t);
        }
        prev_t = rec[k].t;
        prev_f = f;
    }
    fail(ErrorCode::NonSettling, "response never reaches the settled level");
}

} // namespace

FopdtFit fit_fopdt(std::span<const StepRecordSample> record) {
    if (record.size() < 4) fail(ErrorCode::NoStepDetected, "record too short to contain a step");
    const double u0 = record.front().input;
    const double tol = 1e-9 * std::max(1.0, std::abs(u0));
    std::size_t step = 0;
    for (std::size_t k = 1; k < record.size(); ++k) {
        if (std::abs(record[k].input - u0) > tol) {
            step = k;
            break;
        }
    }
    if (step == 0) fail(ErrorCode::NoStepDetected, "input is constant: no step in record");
    const double u1 = record[step].input;
    for (std::size_t k = step; k < record.size(); ++k) {
        if (std::abs(record[k].input - u1) > 1e-9 * std::max(1.0, std::abs(u1))) {
            fail(ErrorCode::InvalidArgument, "record contains more than one input step");
        }
    }
    const std::size_t after = record.size() - step;
    if (after < 10) fail(ErrorCode::NonSettling, "too few samples after the step");

    const std::size_t pre = std::min<std::size_t>(step, 10);
    const double y0 = mean_output(record.subspan(step - pre, pre));
    const std::size_t tail = std::max<std::size_t>(5, after / 10);
    const double y1 = mean_output(record.subspan(record.size() - tail, tail));
    const double y_prev = mean_output(record.subspan(record.size() - 2 * tail, tail));
    const double dy = y1 - y0;
    if (dy == 0.0 || !std::isfinite(dy)) {
        fail(ErrorCode::NoStepDetected, "output shows no response to the input step");
    }
    if (std::abs(y1 - y_prev) > 0.02 * std::abs(dy)) {
        fail(ErrorCode::NonSettling, "output still drifting at the end of the record");
    }

    const double t_step = record[step].t;
    const double t28 = crossing_time(record, step, y0, dy, 0.283) - t_step;
    const double t63 = crossing_time(record, step, y0, dy, 0.632) - t_step;

    FopdtFit fit;
    fit.step_time = t_step;
    fit.input_before = u0;
    fit.input_after = u1;
    fit.output_before = y0;
    fit.output_after = y1;
    fit.model.gain = dy / (u1 - u0);
    fit.model.time_constant = 1.5 * (t63 - t28);
    fit.model.dead_time = std::max(0.0, t63 - fit.model.time_constant);
    if (!(fit.model.time_constant > 0.0)) {
        fail(ErrorCode::NonSettling, "could not resolve a positive time constant");
    }
    return fit;
}

PidGains direct_synthesis_tune(const FopdtModel& model, double target_tau_c) {
    model.validate();
    if (!(target_tau_c > 0.0)) fail(ErrorCode::InvalidArgument, "target tau_c must be > 0");
    PidGains g;
    g.kp = model.time_constant / (std::abs(model.gain) * (target_tau_c + model.dead_time));
    g.ki = g.kp / model.time_constant;
    g.kd = 0.0;
    return g;
}

std::vector<double> savgol_filter(std::span<const double> series, int window, int poly_order) {
    if (poly_order < 0 || window < poly_order + 1) {
        fail(ErrorCode::InvalidArgument,
             "savgol window " + std::to_string(window) + " too short for order " +
                 std::to_string(poly_order));
    }
    const auto n = static_cast<long>(series.size());
    if (n < window) {
        fail(ErrorCode::InvalidArgument, "series shorter than the savgol window");
    }
    const long left = (window - 1) / 2;
    const long right = window - 1 - left;
    std::vector<double> out(series.size());
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - left);
        const long hi = std::min(n - 1, i + right);
        const long m = hi - lo + 1;
        const long order = std::min<long>(poly_order, m - 1);
        Eigen::MatrixXd a(m, order + 1);
        Eigen::VectorXd b(m);
        for (long r = 0; r < m; ++r) {
            const double x = static_cast<double>(lo + r - i);
            double p = 1.0;
            for (long c = 0; c <= order; ++c) {
                a(r, c) = p;
                p *= x;
            }
            b(r) = series[static_cast<std::size_t>(lo + r)];
        }
        const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
        out[static_cast<std::size_t>(i)] = coef(0);
    }
    return out;
}

} // namespace jettwin
