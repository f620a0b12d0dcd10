#include "jettwin/service.hpp"

#include "jettwin/error.hpp"

#include <httplib.h>

#include <chrono>

namespace jettwin {

using nlohmann::json;

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void protocol(const std::string& message) { fail(ErrorCode::Protocol, message); }

const json& field(const json& m, const char* key) {
    const auto it = m.find(key);
    if (it == m.end()) protocol(std::string("missing field '") + key + "'");
    return *it;
}

int get_int(const json& m, const char* key) {
    const auto& v = field(m, key);
    if (!v.is_number_integer()) protocol(std::string("field '") + key + "' must be an integer");
    return v.get<int>();
}

double get_number(const json& m, const char* key) {
    const auto& v = field(m, key);
    if (!v.is_number()) protocol(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

bool get_bool(const json& m, const char* key) {
    const auto& v = field(m, key);
    if (!v.is_boolean()) protocol(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& m, const char* key) {
    const auto& v = field(m, key);
    if (!v.is_string()) protocol(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

template <class T, class Getter>
std::optional<T> get_opt(const json& m, const char* key, Getter g) {
    if (!m.contains(key) || m.at(key).is_null()) return std::nullopt;
    return g(m, key);
}

template <class Parse>
auto parse_enum(const json& m, const char* key, Parse p) {
    const auto text = get_string(m, key);
    try {
        return p(text);
    } catch (const Error& e) {
        protocol(e.what());
    }
}

json region_json(const Region& r) {
    return {{"id", r.id},       {"x_min", r.x_min}, {"x_max", r.x_max},
            {"y_min", r.y_min}, {"y_max", r.y_max}, {"bound_mfc", r.bound_mfc}};
}

json gains_json(const PidGains& g) { return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}}; }

json gun_json(const HeatGun& g) {
    return {{"x", g.center.x},
            {"y", g.center.y},
            {"power", g.total_power},
            {"sigma", g.spread_sigma},
            {"enabled", g.enabled}};
}

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

} // namespace

std::string_view command_name(const Command& command) {
    return std::visit(
        overloaded{
            [](const cmd::SetChannelRole&) { return "SetChannelRole"; },
            [](const cmd::SetFlow&) { return "SetFlow"; },
            [](const cmd::SetRegion&) { return "SetRegion"; },
            [](const cmd::SetGains&) { return "SetGains"; },
            [](const cmd::SetSetpoint&) { return "SetSetpoint"; },
            [](const cmd::SetMode&) { return "SetMode"; },
            [](const cmd::SetDecoupler&) { return "SetDecoupler"; },
            [](const cmd::LoadScheduler&) { return "LoadScheduler"; },
            [](const cmd::ClearScheduler&) { return "ClearScheduler"; },
            [](const cmd::SaveState&) { return "SaveState"; },
            [](const cmd::LoadState&) { return "LoadState"; },
            [](const cmd::SaveMode&) { return "SaveMode"; },
            [](const cmd::SetGun&) { return "SetGun"; },
            [](const cmd::PlotControl&) { return "PlotControl"; },
            [](const cmd::SetRunning&) { return "SetRunning"; },
            [](const cmd::Step&) { return "Step"; },
        },
        command);
}

json command_to_json(const Command& command) {
    json j = {{"v", protocol_version}, {"cmd", std::string(command_name(command))}};
    std::visit(overloaded{
                   [&](const cmd::SetChannelRole& c) {
                       j["channel"] = c.channel;
                       j["role"] = std::string(to_string(c.role));
                   },
                   [&](const cmd::SetFlow& c) {
                       j["channel"] = c.channel;
                       j["flow"] = c.flow;
                   },
                   [&](const cmd::SetRegion& c) {
                       j["region"] = c.region.id;
                       j["x_min"] = c.region.x_min;
                       j["x_max"] = c.region.x_max;
                       j["y_min"] = c.region.y_min;
                       j["y_max"] = c.region.y_max;
                       put_opt(j, "bound_mfc", c.bound_mfc);
                   },
                   [&](const cmd::SetGains& c) {
                       j["region"] = c.region;
                       j["kp"] = c.gains.kp;
                       j["ki"] = c.gains.ki;
                       j["kd"] = c.gains.kd;
                   },
                   [&](const cmd::SetSetpoint& c) {
                       j["region"] = c.region;
                       j["setpoint"] = c.setpoint;
                   },
                   [&](const cmd::SetMode& c) { j["mode"] = std::string(to_string(c.mode)); },
                   [&](const cmd::SetDecoupler& c) {
                       j["enabled"] = c.enabled;
                       put_opt(j, "gains", c.gains);
                   },
                   [&](const cmd::LoadScheduler& c) {
                       j["mode"] = std::string(to_string(c.mode));
                       put_opt(j, "csv", c.csv);
                       put_opt(j, "path", c.path);
                   },
                   [&](const cmd::ClearScheduler&) {},
                   [&](const cmd::SaveState& c) { put_opt(j, "path", c.path); },
                   [&](const cmd::LoadState& c) {
                       put_opt(j, "document", c.document);
                       put_opt(j, "path", c.path);
                   },
                   [&](const cmd::SaveMode& c) {
                       j["enabled"] = c.enabled;
                       put_opt(j, "dir", c.dir);
                   },
                   [&](const cmd::SetGun& c) {
                       put_opt(j, "x", c.x);
                       put_opt(j, "y", c.y);
                       put_opt(j, "power", c.power);
                       put_opt(j, "sigma", c.sigma);
                       put_opt(j, "enabled", c.enabled);
                   },
                   [&](const cmd::PlotControl& c) {
                       put_opt(j, "min_temp", c.min_temp);
                       put_opt(j, "max_temp", c.max_temp);
                       put_opt(j, "points", c.points);
                       put_opt(j, "update", c.update);
                   },
                   [&](const cmd::SetRunning& c) { j["running"] = c.running; },
                   [&](const cmd::Step& c) { j["cycles"] = c.cycles; },
               },
               command);
    return j;
}

Command parse_command(const json& m) {
    if (!m.is_object()) protocol("command must be a JSON object");
    if (m.contains("v") && (!m.at("v").is_number_integer() || m.at("v").get<int>() != protocol_version)) {
        protocol("unsupported protocol version");
    }
    const auto name = get_string(m, "cmd");
    if (name == "SetChannelRole") {
        return cmd::SetChannelRole{get_int(m, "channel"), parse_enum(m, "role", parse_role)};
    }
    if (name == "SetFlow") return cmd::SetFlow{get_int(m, "channel"), get_number(m, "flow")};
    if (name == "SetRegion") {
        cmd::SetRegion c;
        c.region.id = get_int(m, "region");
        c.region.x_min = get_int(m, "x_min");
        c.region.x_max = get_int(m, "x_max");
        c.region.y_min = get_int(m, "y_min");
        c.region.y_max = get_int(m, "y_max");
        c.bound_mfc = get_opt<int>(m, "bound_mfc", get_int);
        c.region.bound_mfc = c.bound_mfc.value_or(0);
        return c;
    }
    if (name == "SetGains") {
        return cmd::SetGains{get_int(m, "region"),
                             PidGains{get_number(m, "kp"), get_number(m, "ki"), get_number(m, "kd")}};
    }
    if (name == "SetSetpoint") return cmd::SetSetpoint{get_int(m, "region"), get_number(m, "setpoint")};
    if (name == "SetMode") return cmd::SetMode{parse_enum(m, "mode", parse_control_mode)};
    if (name == "SetDecoupler") {
        cmd::SetDecoupler c;
        c.enabled = get_bool(m, "enabled");
        if (m.contains("gains") && !m.at("gains").is_null()) {
            try {
                c.gains = m.at("gains").get<std::vector<std::vector<double>>>();
            } catch (const json::exception&) {
                protocol("field 'gains' must be an array of number arrays");
            }
        }
        return c;
    }
    if (name == "LoadScheduler") {
        cmd::LoadScheduler c;
        c.mode = parse_enum(m, "mode", parse_schedule_mode);
        c.csv = get_opt<std::string>(m, "csv", get_string);
        c.path = get_opt<std::string>(m, "path", get_string);
        if (c.csv.has_value() == c.path.has_value()) protocol("LoadScheduler needs exactly one of csv/path");
        return c;
    }
    if (name == "ClearScheduler") return cmd::ClearScheduler{};
    if (name == "SaveState") return cmd::SaveState{get_opt<std::string>(m, "path", get_string)};
    if (name == "LoadState") {
        cmd::LoadState c{get_opt<std::string>(m, "document", get_string),
                         get_opt<std::string>(m, "path", get_string)};
        if (c.document.has_value() == c.path.has_value()) protocol("LoadState needs exactly one of document/path");
        return c;
    }
    if (name == "SaveMode") {
        cmd::SaveMode c{get_bool(m, "enabled"), get_opt<std::string>(m, "dir", get_string)};
        if (c.enabled && !c.dir) protocol("SaveMode on needs 'dir'");
        return c;
    }
    if (name == "SetGun") {
        return cmd::SetGun{get_opt<double>(m, "x", get_number), get_opt<double>(m, "y", get_number),
                           get_opt<double>(m, "power", get_number),
                           get_opt<double>(m, "sigma", get_number),
                           get_opt<bool>(m, "enabled", get_bool)};
    }
    if (name == "PlotControl") {
        return cmd::PlotControl{get_opt<double>(m, "min_temp", get_number),
                                get_opt<double>(m, "max_temp", get_number),
                                get_opt<int>(m, "points", get_int),
                                get_opt<bool>(m, "update", get_bool)};
    }
    if (name == "SetRunning") return cmd::SetRunning{get_bool(m, "running")};
    if (name == "Step") {
        const int n = get_int(m, "cycles");
        if (n < 1) protocol("Step needs cycles >= 1");
        return cmd::Step{n};
    }
    protocol("unknown command '" + name + "'");
}

Command parse_command(std::string_view text) {
    json m = json::parse(text.begin(), text.end(), nullptr, false);
    if (m.is_discarded()) protocol("malformed JSON");
    return parse_command(m);
}

Ack Ack::failure(ErrorCode code, std::string message) {
    Ack a;
    a.ok = false;
    a.code = code;
    a.message = std::move(message);
    return a;
}

json ack_to_json(const Ack& ack) {
    json j = {{"v", protocol_version}, {"ok", ack.ok}};
    if (!ack.ok) {
        j["error"] = {{"code", std::string(to_string(ack.code.value_or(ErrorCode::Protocol)))},
                      {"message", ack.message}};
    }
    put_opt(j, "applied_flow", ack.applied_flow);
    put_opt(j, "document", ack.document);
    put_opt(j, "ran", ack.ran);
    return j;
}

Ack parse_ack(const json& m) {
    Ack a;
    a.ok = m.at("ok").get<bool>();
    if (!a.ok) {
        const auto code = m.at("error").at("code").get<std::string>();
        a.message = m.at("error").at("message").get<std::string>();
        a.code = ErrorCode::Protocol;
        for (int k = 0; k <= static_cast<int>(ErrorCode::Protocol); ++k) {
            if (to_string(static_cast<ErrorCode>(k)) == code) a.code = static_cast<ErrorCode>(k);
        }
    }
    if (m.contains("applied_flow")) a.applied_flow = m.at("applied_flow").get<double>();
    if (m.contains("document")) a.document = m.at("document").get<std::string>();
    if (m.contains("ran")) a.ran = m.at("ran").get<int>();
    return a;
}

json frame_to_json(const TelemetryFrame& f) {
    json channels = json::array();
    for (const auto& c : f.channels) {
        channels.push_back({{"id", c.id},
                            {"role", std::string(to_string(c.role))},
                            {"solenoid_open", c.solenoid_open},
                            {"commanded", c.commanded},
                            {"actual", c.actual}});
    }
    json regions = json::array();
    for (const auto& r : f.regions) {
        json jr = region_json(r.region);
        jr["mean"] = r.mean;
        jr["setpoint"] = r.setpoint;
        jr["gains"] = gains_json(r.gains);
        jr["active"] = r.active;
        regions.push_back(std::move(jr));
    }
    return {{"v", protocol_version},
            {"seq", f.seq},
            {"time", f.time},
            {"mode", std::string(to_string(f.mode))},
            {"decoupler", f.decoupler_enabled},
            {"gun", gun_json(f.gun)},
            {"frame", {{"width", IrFrame::width}, {"height", IrFrame::height}, {"pixels", f.frame.pixels}}},
            {"channels", std::move(channels)},
            {"regions", std::move(regions)}};
}

json world_to_json(const World& w) {
    json channels = json::array();
    for (const auto& c : w.channels()) {
        channels.push_back({{"id", c.id},
                            {"role", std::string(to_string(c.role))},
                            {"solenoid_open", c.solenoid_open},
                            {"commanded", c.mfc.commanded_flow},
                            {"actual", c.mfc.actual_flow}});
    }
    json regions = json::array();
    for (std::size_t r = 0; r < w.regions().size(); ++r) {
        json jr = region_json(w.regions()[r]);
        jr["gains"] = gains_json(w.loops()[r].gains);
        jr["setpoint"] = w.loops()[r].setpoint;
        regions.push_back(std::move(jr));
    }
    const auto& loop = w.loop_config();
    json scheduler = nullptr;
    if (loop.scheduler) {
        scheduler = {{"mode", std::string(to_string(loop.scheduler->mode))},
                     {"times", loop.scheduler->times},
                     {"rows", loop.scheduler->rows}};
    }
    const auto& plot = w.plot();
    return {{"v", protocol_version},
            {"time", w.time()},
            {"cycles", w.cycles()},
            {"control_period", loop.control_period},
            {"mode", std::string(to_string(loop.mode))},
            {"decoupler", {{"enabled", loop.decoupler_enabled}, {"gains", w.decoupler_gains()}}},
            {"channels", std::move(channels)},
            {"regions", std::move(regions)},
            {"scheduler", std::move(scheduler)},
            {"gun", gun_json(w.gun())},
            {"plot", {{"min_temp", plot.min_temp}, {"max_temp", plot.max_temp}, {"points", plot.points}, {"update", plot.update}}},
            {"save_mode", {{"active", w.save_mode()}, {"run_log", w.logger() ? json(w.logger()->run_path()) : json(nullptr)}}}};
}

Ack apply_command(World& world, const Command& command) {
    Ack ack;
    try {
        std::visit(
            overloaded{
                [&](const cmd::SetChannelRole& c) { world.set_channel_role(c.channel, c.role); },
                [&](const cmd::SetFlow& c) { ack.applied_flow = world.set_flow(c.channel, c.flow); },
                [&](const cmd::SetRegion& c) {
                    Region r = c.region;
                    if (c.bound_mfc) {
                        r.bound_mfc = *c.bound_mfc;
                    } else {
                        if (r.id < 0 || r.id >= static_cast<int>(world.regions().size())) {
                            fail(ErrorCode::InvalidRegion, "unknown region " + std::to_string(r.id));
                        }
                        r.bound_mfc = world.regions()[static_cast<std::size_t>(r.id)].bound_mfc;
                    }
                    world.set_region(r);
                },
                [&](const cmd::SetGains& c) { world.set_gains(c.region, c.gains); },
                [&](const cmd::SetSetpoint& c) { world.set_setpoint(c.region, c.setpoint); },
                [&](const cmd::SetMode& c) { world.set_mode(c.mode); },
                [&](const cmd::SetDecoupler& c) { world.set_decoupler(c.enabled, c.gains); },
                [&](const cmd::LoadScheduler& c) {
                    const auto text = c.csv ? *c.csv : read_text_file(*c.path);
                    world.attach_scheduler(load_scheduler(text, c.mode));
                },
                [&](const cmd::ClearScheduler&) { world.clear_scheduler(); },
                [&](const cmd::SaveState& c) {
                    ack.document = save_state(world.state());
                    if (c.path) write_text_file(*c.path, *ack.document);
                },
                [&](const cmd::LoadState& c) {
                    const auto text = c.document ? *c.document : read_text_file(*c.path);
                    world.apply_state(load_state(text));
                },
                [&](const cmd::SaveMode& c) {
                    if (c.enabled) world.start_save_mode(*c.dir);
                    else world.stop_save_mode();
                },
                [&](const cmd::SetGun& c) {
                    HeatGun g = world.gun();
                    if (c.x) g.center.x = *c.x;
                    if (c.y) g.center.y = *c.y;
                    if (c.power) g.total_power = *c.power;
                    if (c.sigma) g.spread_sigma = *c.sigma;
                    if (c.enabled) g.enabled = *c.enabled;
                    const auto& p = world.config().plate;
                    if (g.center.x < 0 || g.center.x > p.length_x || g.center.y < 0 || g.center.y > p.length_y) {
                        fail(ErrorCode::InvalidArgument, "heat gun must aim at the plate");
                    }
                    world.set_gun(g);
                },
                [&](const cmd::PlotControl& c) {
                    PlotSettings p = world.plot();
                    if (c.min_temp) p.min_temp = *c.min_temp;
                    if (c.max_temp) p.max_temp = *c.max_temp;
                    if (c.points) p.points = *c.points;
                    if (c.update) p.update = *c.update;
                    world.set_plot(p);
                },
                [&](const cmd::SetRunning&) {
                    fail(ErrorCode::Protocol, "SetRunning is handled by the service loop");
                },
                [&](const cmd::Step&) {
                    fail(ErrorCode::Protocol, "Step is handled by the service loop");
                },
            },
            command);
    } catch (const Error& e) {
        return Ack::failure(e.code(), e.what());
    } catch (const std::exception& e) {
        return Ack::failure(ErrorCode::InvalidArgument, e.what());
    }
    return ack;
}

// ---------------------------------------------------------------------------

void TelemetryHub::publish(TelemetryFrame frame) {
    {
        std::lock_guard lock(mutex_);
        ring_.push_back(std::move(frame));
        while (ring_.size() > capacity_) ring_.pop_front();
    }
    cv_.notify_all();
}

std::optional<TelemetryFrame> TelemetryHub::next_after(std::optional<std::uint64_t> after) const {
    std::lock_guard lock(mutex_);
    for (const auto& f : ring_) {
        if (!after || f.seq > *after) return f;
    }
    return std::nullopt;
}

std::optional<TelemetryFrame> TelemetryHub::wait_next(std::optional<std::uint64_t> after,
                                                      std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto ready = [&] {
        return closed_ || (!ring_.empty() && (!after || ring_.back().seq > *after));
    };
    if (!cv_.wait_for(lock, timeout, ready) || closed_) return std::nullopt;
    for (const auto& f : ring_) {
        if (!after || f.seq > *after) return f;
    }
    return std::nullopt;
}

std::vector<TelemetryFrame> TelemetryHub::frames_after(std::optional<std::uint64_t> after,
                                                       std::size_t max) const {
    std::lock_guard lock(mutex_);
    std::vector<TelemetryFrame> out;
    for (const auto& f : ring_) {
        if (out.size() >= max) break;
        if (!after || f.seq > *after) out.push_back(f);
    }
    return out;
}

void TelemetryHub::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool TelemetryHub::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

// ---------------------------------------------------------------------------

struct Service::Http {
    httplib::Server server;
};

Service::Service(World world, ServiceOptions options)
    : world_(std::move(world)), options_(std::move(options)) {
    running_ = options_.start_running;
    refresh_snapshot();
}

Service::~Service() { stop(); }

void Service::start_loop() {
    if (loop_thread_.joinable()) return;
    stop_ = false;
    loop_thread_ = std::thread([this] { loop(); });
}

namespace {

std::optional<std::uint64_t> after_param(const httplib::Request& req) {
    if (!req.has_param("after")) return std::nullopt;
    try {
        return std::stoull(req.get_param_value("after"));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace

int Service::listen() {
    start_loop();
    http_ = std::make_unique<Http>();
    auto& srv = http_->server;

    srv.Post("/api/v1/command", [this](const httplib::Request& req, httplib::Response& res) {
        const auto reply = handle_message(req.body);
        const bool protocol_error = !reply.at("ok").get<bool>() &&
                                    reply.at("error").at("code") == to_string(ErrorCode::Protocol);
        res.status = protocol_error ? 400 : 200;
        res.set_content(reply.dump(), "application/json");
    });
    srv.Get("/api/v1/snapshot", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(snapshot().dump(), "application/json");
    });
    srv.Get("/api/v1/frames", [this](const httplib::Request& req, httplib::Response& res) {
        std::size_t max = 64;
        if (req.has_param("max")) {
            try {
                max = std::stoul(req.get_param_value("max"));
            } catch (const std::exception&) {
                res.status = 400;
                res.set_content(ack_to_json(Ack::failure(ErrorCode::Protocol, "max must be a count")).dump(),
                                "application/json");
                return;
            }
        }
        json frames = json::array();
        for (const auto& f : hub_.frames_after(after_param(req), max)) frames.push_back(frame_to_json(f));
        res.set_content(json{{"frames", std::move(frames)}}.dump(), "application/json");
    });
    auto stream = [this](bool sse) {
        return [this, sse](const httplib::Request& req, httplib::Response& res) {
            auto cursor = std::make_shared<std::optional<std::uint64_t>>(after_param(req));
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                sse ? "text/event-stream" : "application/x-ndjson",
                [this, cursor, sse](std::size_t, httplib::DataSink& sink) {
                    while (!stop_) {
                        auto f = hub_.wait_next(*cursor, std::chrono::milliseconds(200));
                        if (!f) {
                            if (hub_.closed()) break;
                            if (!sink.is_writable()) return false;
                            continue;
                        }
                        *cursor = f->seq;
                        const auto body = frame_to_json(*f).dump();
                        const auto msg = sse ? "data: " + body + "\n\n" : body + "\n";
                        return sink.write(msg.data(), msg.size());
                    }
                    sink.done();
                    return true;
                });
        };
    };
    srv.Get("/api/v1/telemetry", stream(true));
    srv.Get("/api/v1/telemetry.ndjson", stream(false));

    bound_port_ = options_.port == 0 ? srv.bind_to_any_port(options_.host)
                                     : (srv.bind_to_port(options_.host, options_.port) ? options_.port : -1);
    if (bound_port_ < 0) {
        fail(ErrorCode::Io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    http_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
    srv.wait_until_ready();
    return bound_port_;
}

void Service::stop() {
    stop_ = true;
    hub_.close();
    mailbox_cv_.notify_all();
    if (http_) http_->server.stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (loop_thread_.joinable()) loop_thread_.join();
    std::lock_guard lock(mailbox_mutex_);
    for (auto& p : mailbox_) p.done.set_value(Ack::failure(ErrorCode::Io, "service stopped"));
    mailbox_.clear();
}

std::future<Ack> Service::submit(Command command) {
    Pending p{std::move(command), {}};
    auto fut = p.done.get_future();
    {
        std::lock_guard lock(mailbox_mutex_);
        if (stop_) {
            p.done.set_value(Ack::failure(ErrorCode::Io, "service stopped"));
            return fut;
        }
        mailbox_.push_back(std::move(p));
    }
    mailbox_cv_.notify_all();
    return fut;
}

Ack Service::apply(Command command) {
    auto fut = submit(std::move(command));
    if (fut.wait_for(options_.ack_timeout) != std::future_status::ready) {
        return Ack::failure(ErrorCode::Io, "timed out waiting for the control loop");
    }
    return fut.get();
}

json Service::handle_message(std::string_view text) {
    try {
        return ack_to_json(apply(parse_command(text)));
    } catch (const Error& e) {
        return ack_to_json(Ack::failure(e.code(), e.what()));
    }
}

json Service::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Service::refresh_snapshot() {
    json s = world_to_json(world_);
    s["running"] = running_;
    s["latest_frame"] = world_.last_frame() ? frame_to_json(*world_.last_frame()) : json(nullptr);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(s);
}

void Service::publish_cycle() { hub_.publish(world_.cycle()); }

Ack Service::execute(const Command& command) {
    if (const auto* run = std::get_if<cmd::SetRunning>(&command)) {
        running_ = run->running;
        return {};
    }
    if (const auto* step = std::get_if<cmd::Step>(&command)) {
        Ack ack;
        try {
            for (int k = 0; k < step->cycles; ++k) publish_cycle();
        } catch (const Error& e) {
            return Ack::failure(e.code(), e.what());
        }
        ack.ran = step->cycles;
        return ack;
    }
    return apply_command(world_, command);
}

void Service::drain() {
    std::deque<Pending> batch;
    {
        std::lock_guard lock(mailbox_mutex_);
        batch.swap(mailbox_);
    }
    if (batch.empty()) return;
    std::vector<Ack> acks;
    acks.reserve(batch.size());
    for (auto& p : batch) acks.push_back(execute(p.command));
    // Snapshot first, so a client that saw its ack never reads older state.
    refresh_snapshot();
    for (std::size_t k = 0; k < batch.size(); ++k) batch[k].done.set_value(std::move(acks[k]));
}

void Service::loop() {
    using clock = std::chrono::steady_clock;
    auto next_tick = clock::now();
    while (!stop_) {
        drain();
        if (running_) {
            try {
                publish_cycle();
            } catch (const Error&) {
                running_ = false; // fatal plant error: hold the last state
            }
            refresh_snapshot();
            if (options_.realtime_factor > 0.0) {
                next_tick += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
                    world_.loop_config().control_period / options_.realtime_factor));
                std::unique_lock lock(mailbox_mutex_);
                mailbox_cv_.wait_until(lock, next_tick, [this] { return stop_.load(); });
            }
        } else {
            std::unique_lock lock(mailbox_mutex_);
            mailbox_cv_.wait_for(lock, std::chrono::milliseconds(50),
                                 [this] { return stop_.load() || !mailbox_.empty(); });
            next_tick = clock::now();
        }
    }
}

} // namespace jettwin
