#include "jettwin/world.hpp"

#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"

#include <algorithm>
#include <cmath>

namespace jettwin {

namespace {

JetGeometry resolve_geometry(const WorldConfig& cfg) {
    JetGeometry geom = cfg.geometry;
    if (geom.channel_positions.empty()) {
        geom.channel_positions =
            JetGeometry::default_layout(cfg.plate, cfg.channel_count).channel_positions;
    }
    if (geom.channel_positions.size() != static_cast<std::size_t>(cfg.channel_count)) {
        fail(ErrorCode::InvalidArgument, "jet positions must match the channel count");
    }
    geom.validate(cfg.plate);
    return geom;
}

WorldConfig validated(WorldConfig cfg) {
    cfg.plate.validate();
    if (cfg.channel_count < 1 || cfg.channel_count > 9) {
        fail(ErrorCode::InvalidArgument, "channel count must be in [1, 9]");
    }
    if (!(cfg.control_period > 0.0)) fail(ErrorCode::InvalidArgument, "control period must be > 0");
    if (!(cfg.camera_noise >= 0.0)) fail(ErrorCode::InvalidArgument, "camera noise must be >= 0");
    cfg.geometry = resolve_geometry(cfg);
    return cfg;
}

} // namespace

WorldConfig world_config_from(const KeyValueDoc& doc, WorldConfig base) {
    WorldConfig cfg = base;
    cfg.plate = plate_config_from(doc, base.plate);
    cfg.channel_count = static_cast<int>(doc.get_int("world.channels", base.channel_count));
    cfg.geometry = jet_geometry_from(doc, cfg.plate, cfg.channel_count, base.geometry);
    cfg.camera_noise = doc.get_double("camera.noise_sigma", base.camera_noise);
    cfg.seed = static_cast<std::uint64_t>(doc.get_int("camera.seed", static_cast<long long>(base.seed)));
    cfg.control_period = doc.get_double("loop.control_period", base.control_period);
    if (doc.contains("plate.initial_temp")) cfg.initial_temp = doc.require_double("plate.initial_temp");
    return validated(cfg);
}

RunLogRecord run_log_record(const TelemetryFrame& tf, double t0) {
    RunLogRecord rec;
    rec.elapsed = tf.time - t0;
    for (const auto& c : tf.channels) rec.channels.push_back({c.commanded, c.actual});
    for (const auto& r : tf.regions) {
        RegionLog g;
        g.mean = r.mean;
        g.x_min = r.region.x_min;
        g.x_max = r.region.x_max;
        g.y_min = r.region.y_min;
        g.y_max = r.region.y_max;
        g.setpoint = r.setpoint;
        g.gains = r.gains;
        rec.regions.push_back(g);
    }
    return rec;
}

void PlotSettings::validate() const {
    if (!(min_temp < max_temp) || !std::isfinite(min_temp) || !std::isfinite(max_temp)) {
        fail(ErrorCode::InvalidArgument, "plot min temperature must be below max");
    }
    if (points < 2) fail(ErrorCode::InvalidArgument, "plot needs at least 2 points");
}

World::World(WorldConfig cfg)
    : cfg_(validated(std::move(cfg))),
      footprints_(cfg_.geometry, cfg_.plate),
      grid_(ThermalGrid::uniform(cfg_.plate, cfg_.initial_temp.value_or(cfg_.plate.ambient_temp))),
      channels_(make_channels(cfg_.channel_count)),
      camera_(cfg_.camera_noise, cfg_.seed) {
    loop_.control_period = cfg_.control_period;
    for (int k = 0; k < cfg_.channel_count; ++k) {
        Region r;
        r.id = k;
        r.bound_mfc = k;
        regions_.push_back(r);
        loops_.emplace_back();
    }
    decoupler_gains_.assign(regions_.size(), std::vector<double>(regions_.size(), 0.0));
    for (std::size_t k = 0; k < regions_.size(); ++k) decoupler_gains_[k][k] = -0.14;
}

World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;
World::~World() = default;

const WyeChannel& World::channel(int id) const {
    if (id < 0 || id >= static_cast<int>(channels_.size())) {
        fail(ErrorCode::UnknownChannel, "unknown channel " + std::to_string(id));
    }
    return channels_[static_cast<std::size_t>(id)];
}

WyeChannel& World::channel(int id) {
    return const_cast<WyeChannel&>(std::as_const(*this).channel(id));
}

void World::check_region_index(int region) const {
    if (region < 0 || region >= static_cast<int>(regions_.size())) {
        fail(ErrorCode::InvalidRegion, "unknown region " + std::to_string(region));
    }
}

std::vector<int> World::inlet_ids() const {
    std::vector<int> ids;
    for (const auto& c : channels_) {
        if (c.role == ChannelRole::Inlet) ids.push_back(c.id);
    }
    return ids;
}

void World::check_scheduler_fits(const SchedulerTable& table,
                                 const std::vector<WyeChannel>& channels) const {
    if (table.mode == ScheduleMode::Flow) {
        const auto inlets = std::count_if(channels.begin(), channels.end(),
                                          [](const auto& c) { return c.role == ChannelRole::Inlet; });
        if (table.width() != static_cast<std::size_t>(inlets)) {
            fail(ErrorCode::SchedulerMismatch,
                 "flow scheduler has " + std::to_string(table.width()) + " columns but " +
                     std::to_string(inlets) + " inlet(s) are configured");
        }
    } else if (table.width() != regions_.size()) {
        fail(ErrorCode::SchedulerMismatch,
             "setpoint scheduler has " + std::to_string(table.width()) + " columns but " +
                 std::to_string(regions_.size()) + " region(s) exist");
    }
}

void World::set_channel_role(int id, ChannelRole role) {
    auto next = jettwin::set_channel_role(channels_, id, role);
    if (loop_.scheduler) check_scheduler_fits(*loop_.scheduler, next);
    channels_ = std::move(next);
}

double World::set_flow(int id, double flow) {
    if (!std::isfinite(flow)) fail(ErrorCode::InvalidArgument, "flow must be finite");
    auto& ch = channel(id);
    if (loop_.mode != ControlMode::MfcDirect) {
        fail(ErrorCode::InvalidArgument, "flows are controller-driven in temperature mode");
    }
    ch = command_mfc(ch, flow);
    return ch.mfc.commanded_flow;
}

void World::set_region(const Region& region) {
    check_region_index(region.id);
    region.validate();
    channel(region.bound_mfc);
    regions_[static_cast<std::size_t>(region.id)] = region;
}

void World::set_gains(int region, const PidGains& gains) {
    check_region_index(region);
    gains.validate();
    loops_[static_cast<std::size_t>(region)].gains = gains;
}

void World::set_setpoint(int region, double setpoint) {
    check_region_index(region);
    if (!std::isfinite(setpoint)) fail(ErrorCode::InvalidArgument, "setpoint must be finite");
    loops_[static_cast<std::size_t>(region)].setpoint = setpoint;
}

void World::set_mode(ControlMode mode) {
    if (mode == loop_.mode) return;
    if (loop_.scheduler) {
        fail(ErrorCode::SchedulerMismatch, "clear the scheduler before switching mode");
    }
    if (mode == ControlMode::TemperatureControl) {
        for (std::size_t r = 0; r < regions_.size(); ++r) {
            const auto& ch = channel(regions_[r].bound_mfc);
            auto& loop = loops_[r];
            loop.output_bias = ch.role == ChannelRole::Inlet ? ch.mfc.commanded_flow : 0.0;
            loop.integrator = 0.0;
            loop.last_error = 0.0;
        }
    }
    loop_.mode = mode;
}

void World::set_decoupler(bool enabled, std::optional<std::vector<std::vector<double>>> gains) {
    if (gains) {
        const std::vector<double> probe(regions_.size(), 0.0);
        decouple(probe, *gains); // validates shape, diagonal and rank
        decoupler_gains_ = std::move(*gains);
    }
    loop_.decoupler_enabled = enabled;
}

void World::attach_scheduler(SchedulerTable table) {
    if (table.empty()) fail(ErrorCode::SchedulerFormat, "scheduler has no rows");
    const bool flow_mode = loop_.mode == ControlMode::MfcDirect;
    if ((table.mode == ScheduleMode::Flow) != flow_mode) {
        fail(ErrorCode::SchedulerMismatch,
             std::string(to_string(table.mode)) + " scheduler needs " +
                 (table.mode == ScheduleMode::Flow ? "MFC" : "temperature") + " mode");
    }
    check_scheduler_fits(table, channels_);
    loop_.scheduler = std::move(table);
}

void World::clear_scheduler() { loop_.scheduler.reset(); }

void World::set_gun(const HeatGun& gun) {
    gun.validate();
    gun_ = gun;
    gun_flux_valid_ = false;
}

void World::schedule_gun(std::vector<GunEvent> events) {
    for (const auto& e : events) e.gun.validate();
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
    gun_events_ = std::move(events);
}

void World::set_plot(const PlotSettings& plot) {
    plot.validate();
    plot_ = plot;
}

RunLogLayout World::log_layout() const {
    return RunLogLayout{static_cast<int>(channels_.size()), static_cast<int>(regions_.size()),
                        loop_.mode == ControlMode::TemperatureControl};
}

void World::start_save_mode(const std::string& dir) {
    logger_ = std::make_unique<RunLogger>(RunLogger::in_directory(dir, log_layout()));
    save_start_ = time();
}

void World::stop_save_mode() { logger_.reset(); }

StateFile World::state() const {
    StateFile s;
    s.mode = loop_.mode;
    s.decoupler_enabled = loop_.decoupler_enabled;
    for (const auto& c : channels_) s.roles.push_back(c.role);
    for (std::size_t r = 0; r < regions_.size(); ++r) {
        s.regions.push_back(RegionState{regions_[r], loops_[r].gains, loops_[r].setpoint});
    }
    s.decoupler_gains = decoupler_gains_;
    return s;
}

void World::apply_state(const StateFile& s) {
    s.validate();
    if (s.roles.size() != channels_.size()) {
        fail(ErrorCode::DimensionMismatch, "state has " + std::to_string(s.roles.size()) +
                                               " channels, world has " +
                                               std::to_string(channels_.size()));
    }
    if (logger_ && s.regions.size() != regions_.size()) {
        fail(ErrorCode::InvalidArgument, "cannot change the region count while saving");
    }
    if (loop_.scheduler && s.mode != loop_.mode) {
        fail(ErrorCode::SchedulerMismatch, "clear the scheduler before loading a different mode");
    }
    if (!s.decoupler_gains.empty()) {
        decouple(std::vector<double>(s.regions.size(), 0.0), s.decoupler_gains);
    }

    std::vector<WyeChannel> channels = channels_;
    for (std::size_t k = 0; k < channels.size(); ++k) {
        auto& ch = channels[k];
        ch.role = s.roles[k];
        ch.solenoid_open = ch.role == ChannelRole::Outlet;
        if (ch.role != ChannelRole::Inlet) ch.mfc.commanded_flow = 0.0;
    }
    if (loop_.scheduler && loop_.scheduler->mode == ScheduleMode::Flow) {
        check_scheduler_fits(*loop_.scheduler, channels);
    }
    if (loop_.scheduler && loop_.scheduler->mode == ScheduleMode::Setpoint &&
        loop_.scheduler->width() != s.regions.size()) {
        fail(ErrorCode::SchedulerMismatch, "setpoint scheduler width differs from state regions");
    }

    channels_ = std::move(channels);
    regions_.clear();
    loops_.resize(s.regions.size());
    for (std::size_t r = 0; r < s.regions.size(); ++r) {
        regions_.push_back(s.regions[r].region);
        loops_[r].gains = s.regions[r].gains;
        loops_[r].setpoint = s.regions[r].setpoint;
    }
    if (s.decoupler_gains.empty()) {
        decoupler_gains_.assign(regions_.size(), std::vector<double>(regions_.size(), 0.0));
        for (std::size_t k = 0; k < regions_.size(); ++k) decoupler_gains_[k][k] = -0.14;
    } else {
        decoupler_gains_ = s.decoupler_gains;
    }
    loop_.decoupler_enabled = s.decoupler_enabled;
    if (s.mode != loop_.mode) {
        const auto sched = std::move(loop_.scheduler);
        loop_.scheduler.reset();
        set_mode(s.mode);
        loop_.scheduler = sched;
    }
}

void World::set_plate(ThermalGrid grid) {
    if (grid.temps.nx != cfg_.plate.grid_nx || grid.temps.ny != cfg_.plate.grid_ny) {
        fail(ErrorCode::DimensionMismatch, "plate field does not match the world's grid");
    }
    grid.sim_time = time();
    grid_ = std::move(grid);
}

void World::set_initial_flow(int id, double flow) {
    auto& ch = channel(id);
    ch = command_mfc(ch, flow);
    ch.mfc.actual_flow = ch.mfc.commanded_flow;
}

void World::apply_gun_events() {
    const double t = time();
    auto it = gun_events_.begin();
    while (it != gun_events_.end() && it->time <= t) {
        set_gun(it->gun);
        ++it;
    }
    gun_events_.erase(gun_events_.begin(), it);
}

void World::run_controllers(const std::vector<double>& means) {
    const double t = time();
    if (loop_.scheduler) {
        const auto sp = scheduler_lookup(*loop_.scheduler, t);
        for (std::size_t r = 0; r < loops_.size(); ++r) loops_[r].setpoint = sp[r];
    }
    const std::size_t n = regions_.size();
    std::vector<double> deltas(n, 0.0);
    std::vector<double> outputs(n, 0.0);
    std::vector<bool> active(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& ch = channel(regions_[r].bound_mfc);
        if (ch.role != ChannelRole::Inlet) continue;
        active[r] = true;
        const auto step = pid_step(loops_[r], means[r], loop_.control_period);
        loops_[r] = step.loop;
        outputs[r] = step.output;
        deltas[r] = step.output - loops_[r].output_bias;
    }
    if (loop_.decoupler_enabled) {
        const auto adjusted = decouple(deltas, decoupler_gains_);
        for (std::size_t r = 0; r < n; ++r) {
            outputs[r] = std::clamp(loops_[r].output_bias + adjusted[r], loops_[r].output_min,
                                    loops_[r].output_max);
        }
    }
    for (std::size_t r = 0; r < n; ++r) {
        if (!active[r]) continue;
        auto& ch = channel(regions_[r].bound_mfc);
        ch = command_mfc(ch, outputs[r]);
    }
}

const Field2D& World::current_forced_h() {
    std::vector<double> flows;
    std::vector<ChannelRole> roles;
    for (const auto& c : channels_) {
        flows.push_back(c.mfc.actual_flow);
        roles.push_back(c.role);
    }
    if (flows != forced_h_flows_ || roles != forced_h_roles_ || forced_h_.data.empty()) {
        forced_h_ = footprints_.forced_h(channels_);
        forced_h_flows_ = std::move(flows);
        forced_h_roles_ = std::move(roles);
    }
    return forced_h_;
}

const Field2D& World::current_gun_flux() {
    if (!gun_flux_valid_) {
        gun_flux_ = heat_gun_flux(gun_, cfg_.plate);
        gun_flux_valid_ = true;
    }
    return gun_flux_;
}

void World::advance_plant() {
    const int inner = std::max(1, loop_.inner_steps);
    const double h = loop_.control_period / inner;
    for (int s = 0; s < inner; ++s) {
        for (auto& ch : channels_) ch = step_mfc(ch, h);
        const PlantStepper stepper(current_forced_h(), current_gun_flux(), cfg_.plate);
        stepper.advance(grid_, h);
    }
}

void World::log_frame(const TelemetryFrame& tf) {
    const auto rec = run_log_record(tf, save_start_);
    logger_->append_run_log(rec);
    PixelLogRecord pix;
    pix.elapsed = rec.elapsed;
    pix.pixels = tf.frame.pixels;
    logger_->append_pixel_log(pix);
}

TelemetryFrame World::cycle() {
    const double t = time();
    apply_gun_events();
    IrFrame frame = camera_.capture(grid_);
    frame.timestamp = t;

    std::vector<double> means;
    means.reserve(regions_.size());
    for (const auto& r : regions_) means.push_back(region_mean(frame, r));

    if (loop_.mode == ControlMode::TemperatureControl) {
        run_controllers(means);
    } else if (loop_.scheduler) {
        const auto values = scheduler_lookup(*loop_.scheduler, t);
        const auto ids = inlet_ids();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            auto& ch = channel(ids[k]);
            ch = command_mfc(ch, values[k]);
        }
    }

    TelemetryFrame tf;
    tf.seq = cycles_;
    tf.time = t;
    tf.frame = frame;
    tf.mode = loop_.mode;
    tf.decoupler_enabled = loop_.decoupler_enabled;
    tf.gun = gun_;
    for (const auto& c : channels_) {
        tf.channels.push_back({c.id, c.role, c.solenoid_open, c.mfc.commanded_flow, c.mfc.actual_flow});
    }
    for (std::size_t r = 0; r < regions_.size(); ++r) {
        const bool active = loop_.mode == ControlMode::TemperatureControl &&
                            channel(regions_[r].bound_mfc).role == ChannelRole::Inlet;
        tf.regions.push_back({regions_[r], means[r], loops_[r].setpoint, loops_[r].gains, active});
    }
    if (logger_) log_frame(tf);

    advance_plant();
    ++cycles_;
    grid_.sim_time = time();
    last_frame_ = tf;
    return tf;
}

std::vector<TelemetryFrame> World::run_until(double t_end) {
    std::vector<TelemetryFrame> frames;
    while (time() < t_end) frames.push_back(cycle());
    return frames;
}

} // namespace jettwin
