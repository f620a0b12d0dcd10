#pragma once

#include "jettwin/control.hpp"
#include "jettwin/hardware.hpp"
#include "jettwin/persistence.hpp"
#include "jettwin/plate.hpp"
#include "jettwin/scheduler.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace jettwin {

class KeyValueDoc;

struct LoopConfig {
    double control_period = 1.0; // s
    ControlMode mode = ControlMode::MfcDirect;
    bool decoupler_enabled = false;
    std::optional<SchedulerTable> scheduler;
    /// Inner MFC/plant sub-steps per control period.
    int inner_steps = 4;
};

/// Scenario-level construction parameters.
struct WorldConfig {
    PlateConfig plate;
    JetGeometry geometry; // positions filled from default_layout when empty
    int channel_count = 5;
    double camera_noise = 0.5; // degC
    std::uint64_t seed = 1;
    double control_period = 1.0;
    std::optional<double> initial_temp; // defaults to ambient
};

/// Reads `plate.*`, `jet.*`, `world.channels`, `camera.noise_sigma`,
/// `camera.seed` and `loop.control_period` over the defaults in `base`.
WorldConfig world_config_from(const KeyValueDoc& doc, WorldConfig base = {});

/// Heat-gun state change applied at the first cycle whose time is >= `time`.
struct GunEvent {
    double time = 0.0;
    HeatGun gun;
};

/// Heat-map display settings mirrored for the operator console.
struct PlotSettings {
    double min_temp = 20.0;
    double max_temp = 120.0;
    int points = 300;
    bool update = true;

    void validate() const;
    bool operator==(const PlotSettings&) const = default;
};

struct ChannelTelemetry {
    int id = 0;
    ChannelRole role = ChannelRole::Closed;
    bool solenoid_open = false;
    double commanded = 0.0;
    double actual = 0.0;
};

struct RegionTelemetry {
    Region region;
    double mean = 0.0;
    double setpoint = 0.0;
    PidGains gains;
    bool active = false; // bound channel is an Inlet and the loop is running
};

struct TelemetryFrame {
    std::uint64_t seq = 0;
    double time = 0.0;
    IrFrame frame;
    std::vector<ChannelTelemetry> channels;
    std::vector<RegionTelemetry> regions;
    ControlMode mode = ControlMode::MfcDirect;
    bool decoupler_enabled = false;
    HeatGun gun;
};

/// The run-log row describing `frame`, with elapsed time measured from `t0`.
RunLogRecord run_log_record(const TelemetryFrame& frame, double t0 = 0.0);

/// Everything the control loop owns: plant, hardware, controllers, loop
/// configuration, and the optional save-mode logger. Command methods apply
/// the same validation the service does; they either succeed completely or
/// throw without changing state.
class World {
public:
    explicit World(WorldConfig cfg = {});

    World(World&&) noexcept;
    World& operator=(World&&) noexcept;
    ~World();

    // Commands.
    void set_channel_role(int id, ChannelRole role);
    /// MFC mode only. Returns the snapped command actually applied.
    double set_flow(int id, double flow);
    void set_region(const Region& region);
    void set_gains(int region, const PidGains& gains);
    void set_setpoint(int region, double setpoint);
    /// Bumpless: loops restart from the current MFC commands.
    void set_mode(ControlMode mode);
    void set_decoupler(bool enabled, std::optional<std::vector<std::vector<double>>> gains = {});
    /// Flow tables need one column per Inlet (id order); setpoint tables one per region.
    void attach_scheduler(SchedulerTable table);
    void clear_scheduler();
    void set_gun(const HeatGun& gun);
    void schedule_gun(std::vector<GunEvent> events);
    void set_plot(const PlotSettings& plot);
    /// Starts a fresh pair of logs in `dir`; elapsed time restarts at 0.
    void start_save_mode(const std::string& dir);
    void stop_save_mode();

    StateFile state() const;
    void apply_state(const StateFile& state);

    /// One control period. See control_cycle.
    TelemetryFrame cycle();
    /// Runs until `time()` reaches `t_end` (exclusive), returning every frame.
    std::vector<TelemetryFrame> run_until(double t_end);

    /// Replaces the plate field (warm start); sim time follows the loop clock.
    void set_plate(ThermalGrid grid);
    void set_initial_flow(int id, double flow);

    double time() const { return static_cast<double>(cycles_) * loop_.control_period; }
    std::uint64_t cycles() const { return cycles_; }
    const WorldConfig& config() const { return cfg_; }
    const LoopConfig& loop_config() const { return loop_; }
    const ThermalGrid& plate() const { return grid_; }
    const std::vector<WyeChannel>& channels() const { return channels_; }
    const std::vector<Region>& regions() const { return regions_; }
    const std::vector<PidLoop>& loops() const { return loops_; }
    const std::vector<std::vector<double>>& decoupler_gains() const { return decoupler_gains_; }
    const HeatGun& gun() const { return gun_; }
    const PlotSettings& plot() const { return plot_; }
    bool save_mode() const { return static_cast<bool>(logger_); }
    const RunLogger* logger() const { return logger_.get(); }
    const std::optional<TelemetryFrame>& last_frame() const { return last_frame_; }

private:
    const WyeChannel& channel(int id) const;
    WyeChannel& channel(int id);
    void check_region_index(int region) const;
    std::vector<int> inlet_ids() const;
    void check_scheduler_fits(const SchedulerTable& table,
                              const std::vector<WyeChannel>& channels) const;
    void apply_gun_events();
    void run_controllers(const std::vector<double>& means);
    void advance_plant();
    RunLogLayout log_layout() const;
    const Field2D& current_forced_h();
    const Field2D& current_gun_flux();
    void log_frame(const TelemetryFrame& frame);

    WorldConfig cfg_;
    LoopConfig loop_;
    JetFootprints footprints_;
    ThermalGrid grid_;
    std::vector<WyeChannel> channels_;
    IrCamera camera_;
    std::vector<Region> regions_;
    std::vector<PidLoop> loops_;
    std::vector<std::vector<double>> decoupler_gains_;
    HeatGun gun_;
    Field2D gun_flux_;
    bool gun_flux_valid_ = false;
    std::vector<GunEvent> gun_events_;
    Field2D forced_h_;
    std::vector<double> forced_h_flows_;
    std::vector<ChannelRole> forced_h_roles_;
    PlotSettings plot_;
    std::uint64_t cycles_ = 0;
    std::unique_ptr<RunLogger> logger_;
    double save_start_ = 0.0;
    std::optional<TelemetryFrame> last_frame_;
};

/// capture IR frame -> region means -> controllers or scheduler/manual flows
/// -> MFC and plant integration over one control period -> telemetry.
inline TelemetryFrame control_cycle(World& world) { return world.cycle(); }

} // namespace jettwin
