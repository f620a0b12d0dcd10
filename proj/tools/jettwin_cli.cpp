// jettwin: headless experiments, calibration and the live service.
//
// Exit codes: 0 success, 1 error, 2 the run did not converge.

#include "jettwin/error.hpp"
#include "jettwin/harness.hpp"
#include "jettwin/kv_config.hpp"
#include "jettwin/persistence.hpp"
#include "jettwin/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

using namespace jettwin;
using nlohmann::json;

namespace {

std::atomic<bool> interrupted{false};

extern "C" void on_signal(int) { interrupted = true; }

json metrics_json(const ResponseMetrics& m) {
    json j = {{"steady_gain", m.steady_gain},     {"t63_s", m.t63},
              {"settling_time_s", m.settling_time}, {"overshoot_pct", m.overshoot},
              {"step_time_s", m.step_time},       {"input_before", m.input_before},
              {"input_after", m.input_after},     {"output_before_c", m.output_before},
              {"output_after_c", m.output_after}, {"degenerate", m.degenerate},
              {"converged", m.converged}};
    if (m.steady_state_error) j["steady_state_error_c"] = *m.steady_state_error;
    return j;
}

void add_paths(json& j, const std::optional<std::string>& run, const std::optional<std::string>& pix) {
    if (run) j["run_log"] = *run;
    if (pix) j["pixel_log"] = *pix;
}

struct Common {
    std::string out_dir;
    std::uint64_t seed = 1;
    std::string calibration_path = default_calibration_path();
    std::string config_path;

    ExperimentOptions options() const {
        ExperimentOptions o;
        o.seed = seed;
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            o.out_dir = out_dir;
        }
        o.calibration = std::filesystem::exists(calibration_path) ? load_calibration(calibration_path)
                                                                  : Calibration{};
        if (!config_path.empty()) o.world = world_config_from(KeyValueDoc::load_file(config_path));
        return o;
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out_dir, "Directory for run/pixel logs (omit to skip logging)");
    sub->add_option("--seed", c.seed, "Camera noise seed");
    sub->add_option("--calibration", c.calibration_path, "Calibration fixture file");
    sub->add_option("--config", c.config_path, "Plate/world key=value config file");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Impinging-jet cooling twin: experiments and live service"};
    app.require_subcommand(1);
    Common common;

    BumpOptions bump;
    auto* bump_cmd = app.add_subcommand("bump", "Open-loop flow step on the single-inlet scenario");
    add_common(bump_cmd, common);
    bump_cmd->add_option("--from", bump.flow_from, "Initial flow, L/min");
    bump_cmd->add_option("--to", bump.flow_to, "Final flow, L/min");
    bump_cmd->add_option("--pre", bump.pre_step, "Seconds before the step");
    bump_cmd->add_option("--duration", bump.duration, "Seconds after the step");

    TrackingOptions track;
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    auto* track_cmd = app.add_subcommand("track", "PI setpoint step on the single-inlet scenario");
    add_common(track_cmd, common);
    track_cmd->add_option("--from", track.setpoint_from, "Initial setpoint, degC");
    track_cmd->add_option("--to", track.setpoint_to, "Final setpoint, degC");
    auto* kp_opt = track_cmd->add_option("--kp", kp, "Proportional gain (default: engine-tuned)");
    track_cmd->add_option("--ki", ki, "Integral gain, 1/s units")->needs(kp_opt);
    track_cmd->add_option("--kd", kd, "Derivative gain")->needs(kp_opt);
    track_cmd->add_option("--pre", track.pre_step, "Seconds before the step");
    track_cmd->add_option("--duration", track.duration, "Seconds after the step");

    DisturbanceOptions dist;
    auto* dist_cmd = app.add_subcommand("disturb", "Two-zone disturbance rejection");
    add_common(dist_cmd, common);
    dist_cmd->add_option("--power", dist.gun_power, "Heat-gun power, W");
    dist_cmd->add_option("--end", dist.end, "Run length, s");

    bool write_fixture = false;
    auto* cal_cmd = app.add_subcommand("calibrate", "Fit the plant to the reference bump test");
    add_common(cal_cmd, common);
    cal_cmd->add_flag("--write", write_fixture, "Overwrite the calibration fixture with the fit");

    std::string log_path;
    int channel = 2;
    int region = 0;
    std::string input = "flow";
    auto* sum_cmd = app.add_subcommand("summarize", "Response metrics of a run log");
    sum_cmd->add_option("log", log_path, "runlog CSV")->required();
    sum_cmd->add_option("--channel", channel, "Channel whose commanded flow is the input");
    sum_cmd->add_option("--region", region, "Region whose mean is the output");
    sum_cmd->add_option("--input", input, "flow or setpoint")->check(CLI::IsMember({"flow", "setpoint"}));

    ServiceOptions service;
    std::string state_path;
    auto* serve_cmd = app.add_subcommand("serve", "Run the live twin behind the HTTP API");
    add_common(serve_cmd, common);
    serve_cmd->add_option("--host", service.host, "Bind address");
    serve_cmd->add_option("--port", service.port, "Port (0 picks a free one)");
    serve_cmd->add_option("--realtime", service.realtime_factor,
                          "Simulated seconds per wall second (0 = unpaced)");
    serve_cmd->add_flag("--run", service.start_running, "Start cycling immediately");
    serve_cmd->add_option("--state", state_path, "State file applied at start-up");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*bump_cmd) {
            const auto res = run_bump_test(bump, common.options());
            json j = metrics_json(res.metrics);
            add_paths(j, res.run_log_path, res.pixel_log_path);
            std::cout << j.dump(2) << "\n";
            return res.metrics.converged ? 0 : 2;
        }
        if (*track_cmd) {
            if (*kp_opt) track.gains = PidGains{kp, ki, kd};
            const auto res = run_setpoint_tracking(track, common.options());
            json j = metrics_json(res.metrics);
            j["final_flow_lpm"] = res.final_flow;
            j["saturated"] = res.saturated;
            j["post_settling_std_c"] = res.post_settling_std;
            add_paths(j, res.run_log_path, res.pixel_log_path);
            std::cout << j.dump(2) << "\n";
            return res.metrics.converged ? 0 : 2;
        }
        if (*dist_cmd) {
            const auto rep = run_disturbance_rejection(dist, common.options());
            json phases = json::array();
            for (const auto& p : rep.phases) {
                phases.push_back({{"t_begin_s", p.t_begin}, {"t_end_s", p.t_end},
                                  {"mfc0_lpm", p.mfc0}, {"mfc1_lpm", p.mfc1}});
            }
            json j = {{"phases", phases},
                      {"crossover_time_s", rep.crossover_time ? json(*rep.crossover_time) : json(nullptr)},
                      {"final_slope_region0", rep.final_slope_region0},
                      {"final_slope_region1", rep.final_slope_region1},
                      {"resettled", rep.resettled}};
            add_paths(j, rep.run_log_path, rep.pixel_log_path);
            std::cout << j.dump(2) << "\n";
            return rep.resettled ? 0 : 2;
        }
        if (*cal_cmd) {
            const auto o = common.options();
            const auto fit = calibrate(CalibrationTargets{}, o.calibration, o.world);
            std::cout << calibration_to_text(fit.calibration);
            std::cout << "# steady region mean: 100 L/min " << format_double(fit.temp_at_100)
                      << ", 150 L/min " << format_double(fit.temp_at_150) << ", 75 L/min "
                      << format_double(fit.temp_at_75) << "; t63 " << format_double(fit.t63) << " s ("
                      << fit.evaluations << " evaluations)\n";
            if (write_fixture) write_text_file(common.calibration_path, calibration_to_text(fit.calibration));
            return 0;
        }
        if (*sum_cmd) {
            const auto parsed = parse_run_log(read_text_file(log_path));
            const auto m = summarize_response(parsed.records, channel, region,
                                              input == "flow" ? StepInput::Flow : StepInput::Setpoint);
            std::cout << metrics_json(m).dump(2) << "\n";
            return m.converged ? 0 : 2;
        }
        if (*serve_cmd) {
            const auto o = common.options();
            WorldConfig wc = o.world;
            wc.seed = o.seed;
            wc.geometry.h_ref = o.calibration.h_ref;
            wc.geometry.jet_sigma = o.calibration.jet_sigma;
            World world(wc);
            if (!state_path.empty()) world.apply_state(load_state(read_text_file(state_path)));
            Service svc(std::move(world), service);
            const int port = svc.listen();
            std::cout << "listening on http://" << service.host << ":" << port << "/api/v1\n" << std::flush;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            svc.stop();
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
