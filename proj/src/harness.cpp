#include "jettwin/harness.hpp"

#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jettwin {

namespace {

constexpr int centre_channel = 2;
constexpr double t63_fraction = 0.63212055882855767; // 1 - 1/e

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double interpolate_crossing(double t0, double f0, double t1, double f1, double level) {
    if (f1 == f0) return t1;
    return t0 + (level - f0) / (f1 - f0) * (t1 - t0);
}

WorldConfig scenario_config(const ExperimentOptions& o) {
    WorldConfig c = o.world;
    c.channel_count = 5;
    c.seed = o.seed;
    c.geometry.channel_positions.clear();
    c.geometry.h_ref = o.calibration.h_ref;
    c.geometry.jet_sigma = o.calibration.jet_sigma;
    return c;
}

Vec2 channel_position(const World& w, int id) {
    return w.config().geometry.channel_positions.at(static_cast<std::size_t>(id));
}

/// Pixel column/row whose centre the channel sits over.
std::pair<int, int> channel_pixel(const World& w, int id) {
    const auto p = channel_position(w, id);
    const auto& plate = w.config().plate;
    return {static_cast<int>(std::floor(p.x / plate.length_x * IrFrame::width)),
            static_cast<int>(std::floor(p.y / plate.length_y * IrFrame::height))};
}

StateFile single_inlet_state(const World& w, ControlMode mode, const PidGains& gains,
                             double setpoint) {
    StateFile s;
    s.mode = mode;
    s.roles = {ChannelRole::Outlet, ChannelRole::Closed, ChannelRole::Inlet, ChannelRole::Closed,
               ChannelRole::Outlet};
    const auto [px, py] = channel_pixel(w, centre_channel);
    s.regions.push_back(RegionState{region_around(0, px, py, centre_channel), gains, setpoint});
    s.decoupler_gains = {{-0.14}};
    return s;
}

HeatGun centre_gun(const World& w, const Calibration& cal, double power) {
    HeatGun g;
    g.center = channel_position(w, centre_channel);
    g.total_power = power;
    g.spread_sigma = cal.gun_sigma;
    g.enabled = true;
    return g;
}

/// Noise-free mean of region 0 once the plate has equilibrated.
double equilibrium_region_mean(const World& w, const HeatGun& gun) {
    const auto& cfg = w.config();
    const auto grid = equilibrium_field(w.channels(), gun, cfg.plate, cfg.geometry);
    return region_mean(capture_ir_frame(grid, 0.0, 0), w.regions().front());
}

void warm_start(World& w, const HeatGun& gun, double flow) {
    w.set_initial_flow(centre_channel, flow);
    const auto& cfg = w.config();
    w.set_plate(equilibrium_field(w.channels(), gun, cfg.plate, cfg.geometry));
}

/// Inlet flow whose equilibrium holds region 0 at `target`; clamps to the MFC range.
double flow_for_temperature(const World& w, const HeatGun& gun, double target) {
    auto channels = w.channels();
    const auto& cfg = w.config();
    auto temp_at = [&](double q) {
        auto& ch = channels[centre_channel];
        ch = command_mfc(ch, q);
        ch.mfc.actual_flow = ch.mfc.commanded_flow;
        const auto grid = equilibrium_field(channels, gun, cfg.plate, cfg.geometry);
        return region_mean(capture_ir_frame(grid, 0.0, 0), w.regions().front());
    };
    const auto& mfc = channels[centre_channel].mfc;
    if (temp_at(mfc.max_flow) >= target) return mfc.max_flow;
    if (temp_at(0.0) <= target) return 0.0;
    if (temp_at(mfc.min_flow) <= target) return mfc.min_flow;
    double lo = mfc.min_flow;
    double hi = mfc.max_flow;
    for (int k = 0; k < 60 && hi - lo > 1e-6; ++k) {
        const double mid = 0.5 * (lo + hi);
        (temp_at(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct RunOutput {
    std::vector<RunLogRecord> records;
    std::optional<std::string> run_path;
    std::optional<std::string> pixel_path;
};

/// Runs the world to `t_end`, logging every frame when `out_dir` is set.
/// The control columns are always written so every experiment log has the
/// same shape for its region count.
class ExperimentLog {
public:
    ExperimentLog(const World& w, const std::optional<std::string>& out_dir) {
        if (out_dir) {
            logger_ = std::make_unique<RunLogger>(RunLogger::in_directory(
                *out_dir, RunLogLayout{static_cast<int>(w.channels().size()),
                                       static_cast<int>(w.regions().size()), true}));
            out_.run_path = logger_->run_path();
            out_.pixel_path = logger_->pixel_path();
        }
    }

    void run(World& w, double t_end) {
        while (w.time() < t_end) {
            const auto frame = w.cycle();
            out_.records.push_back(run_log_record(frame));
            if (logger_) {
                logger_->append_run_log(out_.records.back());
                PixelLogRecord pix;
                pix.elapsed = frame.time;
                pix.pixels = frame.frame.pixels;
                logger_->append_pixel_log(pix);
            }
        }
    }

    RunOutput finish() {
        logger_.reset();
        return std::move(out_);
    }

private:
    std::unique_ptr<RunLogger> logger_;
    RunOutput out_;
};

std::size_t tail_count(std::size_t n) { return std::max<std::size_t>(1, n / 10); }

double tail_flow(const std::vector<RunLogRecord>& records, int channel) {
    const std::size_t n = tail_count(records.size());
    double sum = 0.0;
    for (std::size_t k = records.size() - n; k < records.size(); ++k) {
        sum += records[k].channels[static_cast<std::size_t>(channel)].commanded;
    }
    return sum / static_cast<double>(n);
}

bool tail_saturated(const std::vector<RunLogRecord>& records, int channel, const MfcState& mfc) {
    const std::size_t n = tail_count(records.size());
    for (std::size_t k = records.size() - n; k < records.size(); ++k) {
        const double q = records[k].channels[static_cast<std::size_t>(channel)].commanded;
        if (q > 0.0 && q < mfc.max_flow) return false;
    }
    return true;
}

double region_std_after(const std::vector<RunLogRecord>& records, int region, double t0) {
    std::vector<double> y;
    for (const auto& r : records) {
        if (r.elapsed >= t0) y.push_back(r.regions[static_cast<std::size_t>(region)].mean);
    }
    if (y.size() < 2) return 0.0;
    const double m = mean_of(y);
    double ss = 0.0;
    for (double v : y) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(y.size() - 1));
}

/// Metrics for a run without a step: the transient is null by construction.
ResponseMetrics null_transient(const std::vector<RunLogRecord>& records, int region,
                               double step_time, double input, bool setpoint_tracking) {
    ResponseMetrics m;
    m.degenerate = true;
    m.step_time = step_time;
    m.input_before = m.input_after = input;
    std::vector<double> y;
    for (const auto& r : records) y.push_back(r.regions[static_cast<std::size_t>(region)].mean);
    const auto filtered = savgol_filter(y);
    const std::size_t n = tail_count(filtered.size());
    m.output_before = filtered.front();
    m.output_after = mean_of(std::span(filtered).last(n));
    if (setpoint_tracking) m.steady_state_error = m.output_after - input;
    return m;
}

} // namespace

// ---------------------------------------------------------------------------

Calibration load_calibration(const std::string& path) {
    const auto doc = KeyValueDoc::load_file(path);
    Calibration c;
    c.h_ref = doc.require_double("jet.h_ref");
    c.jet_sigma = doc.require_double("jet.sigma");
    c.gun_power = doc.require_double("gun.power");
    c.gun_sigma = doc.require_double("gun.sigma");
    return c;
}

std::string calibration_to_text(const Calibration& cal) {
    KeyValueDoc doc;
    doc.set("jet.h_ref", cal.h_ref);
    doc.set("jet.sigma", cal.jet_sigma);
    doc.set("gun.power", cal.gun_power);
    doc.set("gun.sigma", cal.gun_sigma);
    return doc.to_text("plant calibration for the single-inlet bump scenario");
}

std::string default_calibration_path() { return std::string(JETTWIN_FIXTURE_DIR) + "/calibration.cfg"; }

// ---------------------------------------------------------------------------

ResponseMetrics summarize_response(std::span<const StepRecordSample> samples, bool setpoint_tracking) {
    const std::size_t n = samples.size();
    if (n < 3) fail(ErrorCode::NoStepDetected, "record too short to contain a step");
    const double u0 = samples.front().input;
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(samples[i].input - u0) > 1e-12 * std::max(1.0, std::abs(u0))) {
            k = i;
            break;
        }
    }
    if (k == 0) fail(ErrorCode::NoStepDetected, "input never changes");

    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = samples[i].output;
    const auto y = savgol_filter(raw);

    ResponseMetrics m;
    m.step_time = samples[k].t;
    m.input_before = u0;
    m.input_after = samples.back().input;
    // The filter window straddles the step, so the initial level comes from raw samples.
    const std::size_t pre = std::min<std::size_t>(k, 30);
    m.output_before = mean_of(std::span(raw).subspan(k - pre, pre));
    const std::size_t tail = std::min(n - k, std::max<std::size_t>(5, n / 10));
    m.output_after = mean_of(std::span(y).last(tail));
    if (setpoint_tracking) m.steady_state_error = m.output_after - m.input_after;

    const double dy = m.output_after - m.output_before;
    m.steady_gain = dy / (m.input_after - m.input_before);

    const std::size_t w = std::max<std::size_t>(5, n / 20);
    if (n - k >= 2 * w) {
        const double last = mean_of(std::span(y).last(w));
        const double prev = mean_of(std::span(y).subspan(n - 2 * w, w));
        m.converged = std::abs(last - prev) <= std::max(0.02 * std::abs(dy), 1e-9);
    } else {
        m.converged = false;
    }

    if (std::abs(dy) <= 1e-9 * std::max(1.0, std::abs(m.output_before))) {
        m.degenerate = true;
        m.steady_gain = 0.0;
        return m;
    }

    auto frac = [&](std::size_t i) { return (y[i] - m.output_before) / dy; };
    for (std::size_t i = k; i < n; ++i) {
        if (frac(i) >= t63_fraction) {
            const double t = i == k ? samples[i].t
                                    : interpolate_crossing(samples[i - 1].t, frac(i - 1), samples[i].t,
                                                           frac(i), t63_fraction);
            m.t63 = t - m.step_time;
            break;
        }
    }
    std::optional<std::size_t> last_out;
    double peak = 0.0;
    for (std::size_t i = k; i < n; ++i) {
        if (std::abs(y[i] - m.output_after) > 0.02 * std::abs(dy)) last_out = i;
        peak = std::max(peak, frac(i));
    }
    if (last_out) {
        const std::size_t j = std::min(*last_out + 1, n - 1);
        m.settling_time = samples[j].t - m.step_time;
    }
    m.overshoot = std::max(0.0, peak - 1.0) * 100.0;
    return m;
}

ResponseMetrics summarize_response(std::span<const RunLogRecord> log, int channel, int region,
                                   StepInput input) {
    std::vector<StepRecordSample> samples;
    samples.reserve(log.size());
    for (const auto& r : log) {
        if (channel < 0 || static_cast<std::size_t>(channel) >= r.channels.size()) {
            fail(ErrorCode::UnknownChannel, "run log has no channel " + std::to_string(channel));
        }
        if (region < 0 || static_cast<std::size_t>(region) >= r.regions.size()) {
            fail(ErrorCode::InvalidRegion, "run log has no region " + std::to_string(region));
        }
        const auto& g = r.regions[static_cast<std::size_t>(region)];
        const double u = input == StepInput::Flow ? r.channels[static_cast<std::size_t>(channel)].commanded
                                                  : g.setpoint;
        samples.push_back({r.elapsed, u, g.mean});
    }
    return summarize_response(samples, input == StepInput::Setpoint);
}

// ---------------------------------------------------------------------------

ExperimentResult run_bump_test(const BumpOptions& bump, const ExperimentOptions& opts) {
    for (double q : {bump.flow_from, bump.flow_to}) {
        if (!(q >= 0.0 && q <= 300.0)) {
            fail(ErrorCode::InvalidArgument, "bump flows must lie in [0, 300] L/min");
        }
    }
    if (!(bump.pre_step > 0.0) || !(bump.duration > 0.0)) {
        fail(ErrorCode::InvalidArgument, "bump phases must have positive length");
    }
    World w(scenario_config(opts));
    w.apply_state(single_inlet_state(w, ControlMode::MfcDirect, {}, 25.0));
    const auto gun = centre_gun(w, opts.calibration, opts.calibration.gun_power);
    w.set_gun(gun);
    warm_start(w, gun, bump.flow_from);
    w.attach_scheduler(SchedulerTable{ScheduleMode::Flow, {0.0, bump.pre_step}, {{bump.flow_from}, {bump.flow_to}}});

    ExperimentLog log(w, opts.out_dir);
    log.run(w, bump.pre_step + bump.duration);
    auto out = log.finish();

    ExperimentResult res;
    const auto& mfc = w.channels()[centre_channel].mfc;
    const double from = snap_flow_command(mfc, bump.flow_from);
    const double to = snap_flow_command(mfc, bump.flow_to);
    res.metrics = from == to ? null_transient(out.records, 0, bump.pre_step, from, false)
                             : summarize_response(out.records, centre_channel, 0, StepInput::Flow);
    res.final_flow = tail_flow(out.records, centre_channel);
    res.post_settling_std =
        region_std_after(out.records, 0, res.metrics.step_time + res.metrics.settling_time);
    res.records = std::move(out.records);
    res.run_log_path = out.run_path;
    res.pixel_log_path = out.pixel_path;
    return res;
}

PidGains engine_tuned_gains(const ExperimentOptions& opts, double target_tau_c) {
    ExperimentOptions quiet = opts;
    quiet.out_dir.reset();
    const auto bump = run_bump_test(BumpOptions{}, quiet);
    std::vector<double> raw;
    for (const auto& r : bump.records) raw.push_back(r.regions.front().mean);
    const auto y = savgol_filter(raw);
    std::vector<StepRecordSample> samples;
    for (std::size_t i = 0; i < bump.records.size(); ++i) {
        samples.push_back({bump.records[i].elapsed,
                           bump.records[i].channels[centre_channel].commanded, y[i]});
    }
    const auto fit = fit_fopdt(samples);
    return direct_synthesis_tune(fit.model, target_tau_c);
}

ExperimentResult run_setpoint_tracking(const TrackingOptions& tracking, const ExperimentOptions& opts) {
    if (!std::isfinite(tracking.setpoint_from) || !std::isfinite(tracking.setpoint_to)) {
        fail(ErrorCode::InvalidArgument, "setpoints must be finite");
    }
    if (!(tracking.pre_step > 0.0) || !(tracking.duration > 0.0)) {
        fail(ErrorCode::InvalidArgument, "tracking phases must have positive length");
    }
    const PidGains gains = tracking.gains ? *tracking.gains : engine_tuned_gains(opts);
    gains.validate();

    World w(scenario_config(opts));
    w.apply_state(single_inlet_state(w, ControlMode::MfcDirect, gains, tracking.setpoint_from));
    const auto gun = centre_gun(w, opts.calibration, opts.calibration.gun_power);
    w.set_gun(gun);
    warm_start(w, gun, flow_for_temperature(w, gun, tracking.setpoint_from));
    w.set_mode(ControlMode::TemperatureControl);
    w.attach_scheduler(SchedulerTable{ScheduleMode::Setpoint,
                                      {0.0, tracking.pre_step},
                                      {{tracking.setpoint_from}, {tracking.setpoint_to}}});

    ExperimentLog log(w, opts.out_dir);
    log.run(w, tracking.pre_step + tracking.duration);
    auto out = log.finish();

    ExperimentResult res;
    res.metrics = tracking.setpoint_from == tracking.setpoint_to
                      ? null_transient(out.records, 0, tracking.pre_step, tracking.setpoint_to, true)
                      : summarize_response(out.records, centre_channel, 0, StepInput::Setpoint);
    const auto& mfc = w.channels()[centre_channel].mfc;
    res.final_flow = tail_flow(out.records, centre_channel);
    res.saturated = tail_saturated(out.records, centre_channel, mfc);
    res.post_settling_std =
        region_std_after(out.records, 0, res.metrics.step_time + res.metrics.settling_time);
    res.records = std::move(out.records);
    res.run_log_path = out.run_path;
    res.pixel_log_path = out.pixel_path;
    return res;
}

// ---------------------------------------------------------------------------

double linear_slope(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size() || t.size() < 2) {
        fail(ErrorCode::InvalidArgument, "slope needs two or more paired samples");
    }
    const double tm = mean_of(t);
    const double ym = mean_of(y);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        num += (t[i] - tm) * (y[i] - ym);
        den += (t[i] - tm) * (t[i] - tm);
    }
    if (den == 0.0) fail(ErrorCode::InvalidArgument, "slope needs distinct times");
    return num / den;
}

DisturbanceReport run_disturbance_rejection(const DisturbanceOptions& dist, const ExperimentOptions& opts) {
    if (!(0.0 < dist.gun_on && dist.gun_on < dist.relocate && dist.relocate < dist.end)) {
        fail(ErrorCode::InvalidArgument, "need 0 < gun_on < relocate < end");
    }
    constexpr int mfc0 = 3;
    constexpr int mfc1 = 1;

    World w(scenario_config(opts));
    StateFile s;
    s.mode = ControlMode::MfcDirect;
    s.roles = {ChannelRole::Outlet, ChannelRole::Inlet, ChannelRole::Closed, ChannelRole::Inlet,
               ChannelRole::Outlet};
    const PidGains gains{10.0, 0.1, 0.0};
    const auto [x0, y0] = channel_pixel(w, mfc0);
    const auto [x1, y1] = channel_pixel(w, mfc1);
    s.regions = {RegionState{region_around(0, x0, y0, mfc0), gains, 100.0},
                 RegionState{region_around(1, x1, y1, mfc1), gains, 100.0}};
    s.decoupler_gains = {{-0.14, 0.0}, {0.0, -0.14}};
    w.apply_state(s);
    w.set_initial_flow(mfc0, dist.bias_flow);
    w.set_initial_flow(mfc1, dist.bias_flow);

    HeatGun g;
    g.total_power = dist.gun_power;
    g.spread_sigma = opts.calibration.gun_sigma;
    g.enabled = true;
    g.center = channel_position(w, mfc1);
    HeatGun g2 = g;
    g2.center = channel_position(w, mfc0);
    w.schedule_gun({GunEvent{dist.gun_on, g}, GunEvent{dist.relocate, g2}});

    // Controllers engage when the load arrives; until then both inlets idle at the bias.
    ExperimentLog log(w, opts.out_dir);
    log.run(w, dist.gun_on);
    w.set_mode(ControlMode::TemperatureControl);
    log.run(w, dist.end);
    auto out = log.finish();

    DisturbanceReport rep;
    const auto& rec = out.records;
    const double bounds[] = {0.0, dist.gun_on, dist.relocate, dist.end};
    for (int p = 0; p < 3; ++p) {
        PhaseFlows ph{bounds[p], bounds[p + 1], 0.0, 0.0};
        const double from = 0.5 * (ph.t_begin + ph.t_end);
        int n = 0;
        for (const auto& r : rec) {
            if (r.elapsed < from || r.elapsed >= ph.t_end) continue;
            ph.mfc0 += r.channels[mfc0].commanded;
            ph.mfc1 += r.channels[mfc1].commanded;
            ++n;
        }
        if (n > 0) {
            ph.mfc0 /= n;
            ph.mfc1 /= n;
        }
        rep.phases.push_back(ph);
    }

    std::vector<double> diff;
    for (const auto& r : rec) diff.push_back(r.channels[mfc0].commanded - r.channels[mfc1].commanded);
    const auto d = savgol_filter(diff);
    double before = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (rec[i].elapsed < dist.relocate) {
            if (d[i] != 0.0) before = d[i];
            continue;
        }
        if (before != 0.0 && d[i] != 0.0 && std::signbit(d[i]) != std::signbit(before)) {
            rep.crossover_time = rec[i].elapsed;
            break;
        }
    }

    std::vector<double> t;
    std::vector<double> r0;
    std::vector<double> r1;
    for (const auto& r : rec) {
        if (r.elapsed < dist.end - dist.slope_window) continue;
        t.push_back(r.elapsed);
        r0.push_back(r.regions[0].mean);
        r1.push_back(r.regions[1].mean);
    }
    rep.final_slope_region0 = linear_slope(t, r0);
    rep.final_slope_region1 = linear_slope(t, r1);
    rep.resettled = std::abs(rep.final_slope_region0) < dist.slope_limit &&
                    std::abs(rep.final_slope_region1) < dist.slope_limit;
    rep.records = std::move(out.records);
    rep.run_log_path = out.run_path;
    rep.pixel_log_path = out.pixel_path;
    return rep;
}

// ---------------------------------------------------------------------------

double bump_steady_temperature(const Calibration& cal, double flow, const WorldConfig& base) {
    ExperimentOptions o;
    o.calibration = cal;
    o.world = base;
    World w(scenario_config(o));
    w.apply_state(single_inlet_state(w, ControlMode::MfcDirect, {}, 25.0));
    w.set_initial_flow(centre_channel, flow);
    return equilibrium_region_mean(w, centre_gun(w, cal, cal.gun_power));
}

double bump_t63(const Calibration& cal, double flow_from, double flow_to, const WorldConfig& base) {
    ExperimentOptions o;
    o.calibration = cal;
    o.world = base;
    o.world.camera_noise = 0.0;
    World w(scenario_config(o));
    w.apply_state(single_inlet_state(w, ControlMode::MfcDirect, {}, 25.0));
    const auto gun = centre_gun(w, cal, cal.gun_power);
    w.set_gun(gun);
    warm_start(w, gun, flow_from);
    const double y0 = equilibrium_region_mean(w, gun);
    w.set_initial_flow(centre_channel, flow_to);
    const double y1 = equilibrium_region_mean(w, gun);
    w.set_initial_flow(centre_channel, flow_from);
    w.set_flow(centre_channel, flow_to);

    const double dy = y1 - y0;
    if (dy == 0.0) fail(ErrorCode::NoStepDetected, "flows give the same steady temperature");
    double t_prev = w.time();
    double f_prev = 0.0;
    while (w.time() < 1e5) {
        const auto frame = w.cycle();
        const double f = (frame.regions.front().mean - y0) / dy;
        if (f >= t63_fraction) return interpolate_crossing(t_prev, f_prev, frame.time, f, t63_fraction);
        t_prev = frame.time;
        f_prev = f;
    }
    fail(ErrorCode::NonSettling, "bump response never reached 63%");
}

namespace {

struct CalibrationResidual {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    CalibrationResidual(const CalibrationTargets& t, const Calibration& start, const WorldConfig& b)
        : targets(t), base_cal(start), base(b) {}

    int inputs() const { return 3; }
    int values() const { return 3; }

    Calibration at(const InputType& p) const {
        Calibration c = base_cal;
        c.h_ref = std::exp(p[0]);
        c.jet_sigma = std::exp(p[1]);
        c.gun_power = std::exp(p[2]);
        return c;
    }

    int operator()(const InputType& p, ValueType& r) const {
        const auto c = at(p);
        r[0] = bump_steady_temperature(c, 100.0, base) - targets.temp_at_100;
        r[1] = bump_steady_temperature(c, 150.0, base) - targets.temp_at_150;
        r[2] = (bump_t63(c, 100.0, 150.0, base) - targets.t63) / targets.t63_scale;
        ++*evaluations;
        return 0;
    }

    CalibrationTargets targets;
    Calibration base_cal;
    WorldConfig base;
    std::shared_ptr<int> evaluations = std::make_shared<int>(0);
};

} // namespace

CalibrationFit calibrate(const CalibrationTargets& targets, Calibration start, const WorldConfig& base) {
    CalibrationResidual f(targets, start, base);
    Eigen::NumericalDiff<CalibrationResidual> diff(f, 1e-4);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<CalibrationResidual>> lm(diff);
    Eigen::VectorXd p(3);
    p << std::log(start.h_ref), std::log(start.jet_sigma), std::log(start.gun_power);
    lm.parameters.maxfev = 400;
    lm.parameters.xtol = 1e-10;
    lm.parameters.ftol = 1e-12;
    lm.minimize(p);

    CalibrationFit fit;
    fit.calibration = f.at(p);
    fit.temp_at_100 = bump_steady_temperature(fit.calibration, 100.0, base);
    fit.temp_at_150 = bump_steady_temperature(fit.calibration, 150.0, base);
    fit.t63 = bump_t63(fit.calibration, 100.0, 150.0, base);
    fit.temp_at_75 = bump_steady_temperature(fit.calibration, 75.0, base);
    fit.evaluations = *f.evaluations;
    return fit;
}

} // namespace jettwin
