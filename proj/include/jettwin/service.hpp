#pragma once

// Wire protocol, version 1. All payloads are JSON objects.
//
//   POST /api/v1/command          body: Command        -> Ack
//   GET  /api/v1/snapshot                               -> Snapshot
//   GET  /api/v1/frames?after=S&max=N                   -> {"frames": [TelemetryFrame...]}
//   GET  /api/v1/telemetry?after=S                      -> text/event-stream, one
//                                                          "data: <TelemetryFrame>\n\n" per frame
//   GET  /api/v1/telemetry.ndjson?after=S               -> one TelemetryFrame per line
//
// Command: {"v": 1, "cmd": <name>, ...fields}. Names and fields:
//   SetChannelRole  channel:int, role:"inlet"|"outlet"|"closed"
//   SetFlow         channel:int, flow:number (L/min)
//   SetRegion       region:int, x_min, x_max, y_min, y_max:int, [bound_mfc:int]
//   SetGains        region:int, kp, ki, kd:number
//   SetSetpoint     region:int, setpoint:number (degC)
//   SetMode         mode:"mfc"|"temperature"
//   SetDecoupler    enabled:bool, [gains:number[][]]
//   LoadScheduler   mode:"flow"|"setpoint", csv:string | path:string
//   ClearScheduler
//   SaveState       [path:string]            ack.document holds the state file text
//   LoadState       document:string | path:string
//   SaveMode        enabled:bool, [dir:string]
//   SetGun          [x, y, power, sigma:number], [enabled:bool]
//   PlotControl     [min_temp, max_temp:number], [points:int], [update:bool]
//   SetRunning      running:bool
//   Step            cycles:int
//
// Ack: {"v": 1, "ok": true, [applied_flow], [document], [ran]} or
//      {"v": 1, "ok": false, "error": {"code": <ErrorCode name>, "message": string}}.
// Malformed JSON, unknown names and missing/mistyped fields give code "ProtocolError".

#include "jettwin/error.hpp"
#include "jettwin/world.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace jettwin {

inline constexpr int protocol_version = 1;

namespace cmd {
struct SetChannelRole { int channel = 0; ChannelRole role = ChannelRole::Closed; bool operator==(const SetChannelRole&) const = default; };
struct SetFlow { int channel = 0; double flow = 0.0; bool operator==(const SetFlow&) const = default; };
struct SetRegion { Region region; std::optional<int> bound_mfc; bool operator==(const SetRegion&) const = default; };
struct SetGains { int region = 0; PidGains gains; bool operator==(const SetGains&) const = default; };
struct SetSetpoint { int region = 0; double setpoint = 0.0; bool operator==(const SetSetpoint&) const = default; };
struct SetMode { ControlMode mode = ControlMode::MfcDirect; bool operator==(const SetMode&) const = default; };
struct SetDecoupler { bool enabled = false; std::optional<std::vector<std::vector<double>>> gains; bool operator==(const SetDecoupler&) const = default; };
struct LoadScheduler { ScheduleMode mode = ScheduleMode::Flow; std::optional<std::string> csv; std::optional<std::string> path; bool operator==(const LoadScheduler&) const = default; };
struct ClearScheduler { bool operator==(const ClearScheduler&) const = default; };
struct SaveState { std::optional<std::string> path; bool operator==(const SaveState&) const = default; };
struct LoadState { std::optional<std::string> document; std::optional<std::string> path; bool operator==(const LoadState&) const = default; };
struct SaveMode { bool enabled = false; std::optional<std::string> dir; bool operator==(const SaveMode&) const = default; };
struct SetGun { std::optional<double> x, y, power, sigma; std::optional<bool> enabled; bool operator==(const SetGun&) const = default; };
struct PlotControl { std::optional<double> min_temp, max_temp; std::optional<int> points; std::optional<bool> update; bool operator==(const PlotControl&) const = default; };
struct SetRunning { bool running = false; bool operator==(const SetRunning&) const = default; };
struct Step { int cycles = 1; bool operator==(const Step&) const = default; };
} // namespace cmd

using Command = std::variant<cmd::SetChannelRole, cmd::SetFlow, cmd::SetRegion, cmd::SetGains,
                             cmd::SetSetpoint, cmd::SetMode, cmd::SetDecoupler,
                             cmd::LoadScheduler, cmd::ClearScheduler, cmd::SaveState,
                             cmd::LoadState, cmd::SaveMode, cmd::SetGun, cmd::PlotControl,
                             cmd::SetRunning, cmd::Step>;

std::string_view command_name(const Command& command);
nlohmann::json command_to_json(const Command& command);
/// Throws Error(Protocol).
Command parse_command(const nlohmann::json& message);
Command parse_command(std::string_view text);

struct Ack {
    bool ok = true;
    std::optional<ErrorCode> code;
    std::string message;
    std::optional<double> applied_flow;
    std::optional<std::string> document;
    std::optional<int> ran; // cycles executed by Step

    static Ack failure(ErrorCode code, std::string message);
    bool operator==(const Ack&) const = default;
};

nlohmann::json ack_to_json(const Ack& ack);
Ack parse_ack(const nlohmann::json& message);

nlohmann::json frame_to_json(const TelemetryFrame& frame);
/// Configuration, roles, gains, regions, scheduler, gun and plot settings.
nlohmann::json world_to_json(const World& world);

/// Executes one command against the world. Step/SetRunning are service-level
/// and are rejected here. Errors come back as a failed Ack, never thrown.
Ack apply_command(World& world, const Command& command);

/// Latest-frames ring. Subscribers ask for the next frame after the last
/// sequence number they saw; if it has been overwritten they get the oldest
/// one still held, so order is preserved and slow readers skip.
class TelemetryHub {
public:
    explicit TelemetryHub(std::size_t capacity = 64) : capacity_(capacity) {}

    void publish(TelemetryFrame frame);
    /// Next frame with seq > after (or any frame when `after` is empty).
    std::optional<TelemetryFrame> next_after(std::optional<std::uint64_t> after) const;
    std::optional<TelemetryFrame> wait_next(std::optional<std::uint64_t> after,
                                            std::chrono::milliseconds timeout) const;
    std::vector<TelemetryFrame> frames_after(std::optional<std::uint64_t> after,
                                             std::size_t max) const;
    void close();
    bool closed() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::deque<TelemetryFrame> ring_;
    bool closed_ = false;
};

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8765;
    bool start_running = false;
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    double realtime_factor = 1.0;
    std::chrono::milliseconds ack_timeout{10000};
};

/// Owns the world on a single loop thread. Commands from any thread go
/// through the mailbox, which the loop drains once per cycle.
class Service {
public:
    Service(World world, ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Starts the loop thread only (no network).
    void start_loop();
    /// Starts the loop and the HTTP listener; returns the bound port.
    int listen();
    void stop();

    std::future<Ack> submit(Command command);
    /// Blocking submit; times out with a failed Ack.
    Ack apply(Command command);
    /// Parses, submits and serialises; protocol errors are acked, not thrown.
    nlohmann::json handle_message(std::string_view text);

    nlohmann::json snapshot() const;
    const TelemetryHub& telemetry() const { return hub_; }
    int port() const { return bound_port_; }

private:
    struct Pending {
        Command command;
        std::promise<Ack> done;
    };

    void loop();
    void drain();
    Ack execute(const Command& command);
    void refresh_snapshot();
    void publish_cycle();

    World world_;
    ServiceOptions options_;
    TelemetryHub hub_;

    std::mutex mailbox_mutex_;
    std::condition_variable mailbox_cv_;
    std::deque<Pending> mailbox_;

    mutable std::mutex snapshot_mutex_;
    nlohmann::json snapshot_;

    std::atomic<bool> stop_{false};
    bool running_ = false; // loop thread only
    std::thread loop_thread_;

    struct Http;
    std::unique_ptr<Http> http_;
    std::thread http_thread_;
    int bound_port_ = 0;
};

} // namespace jettwin
