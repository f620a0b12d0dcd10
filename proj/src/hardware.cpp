#include "jettwin/hardware.hpp"

#include "jettwin/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace jettwin {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void apply_role(WyeChannel& ch, ChannelRole role) {
    ch.role = role;
    switch (role) {
    case ChannelRole::Inlet:
        ch.solenoid_open = false;
        break;
    case ChannelRole::Outlet:
        ch.solenoid_open = true;
        ch.mfc.commanded_flow = 0.0;
        break;
    case ChannelRole::Closed:
        ch.solenoid_open = false;
        ch.mfc.commanded_flow = 0.0;
        break;
    }
}

} // namespace

std::vector<WyeChannel> make_channels(int count) {
    if (count < 1) fail(ErrorCode::InvalidArgument, "need at least one channel");
    std::vector<WyeChannel> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)].id = k;
    return out;
}

bool arrangement_valid(std::span<const WyeChannel> channels) noexcept {
    const bool any_inlet = std::any_of(channels.begin(), channels.end(),
                                       [](const auto& c) { return c.role == ChannelRole::Inlet; });
    const bool any_outlet = std::any_of(channels.begin(), channels.end(),
                                        [](const auto& c) { return c.role == ChannelRole::Outlet; });
    return !any_inlet || any_outlet;
}

bool channel_consistent(const WyeChannel& ch) noexcept {
    const auto& m = ch.mfc;
    if (m.actual_flow < 0.0 || m.actual_flow > m.max_flow) return false;
    const bool cmd_ok = m.commanded_flow == 0.0 ||
                        (m.commanded_flow >= m.min_flow && m.commanded_flow <= m.max_flow);
    if (!cmd_ok) return false;
    switch (ch.role) {
    case ChannelRole::Inlet: return !ch.solenoid_open;
    case ChannelRole::Outlet: return ch.solenoid_open && m.commanded_flow == 0.0;
    case ChannelRole::Closed: return !ch.solenoid_open && m.commanded_flow == 0.0;
    }
    return false;
}

std::vector<WyeChannel> set_channel_role(std::span<const WyeChannel> channels, int id,
                                         ChannelRole role) {
    std::vector<WyeChannel> next(channels.begin(), channels.end());
    const auto it = std::find_if(next.begin(), next.end(), [id](const auto& c) { return c.id == id; });
    if (it == next.end()) fail(ErrorCode::UnknownChannel, "unknown channel " + std::to_string(id));
    if (it->role == role) return next;
    apply_role(*it, role);
    if (!arrangement_valid(next)) {
        fail(ErrorCode::ArrangementViolation,
             "channel " + std::to_string(id) + " -> " + std::string(to_string(role)) +
                 " would leave inlets without an outlet");
    }
    return next;
}

double snap_flow_command(const MfcState& mfc, double flow) noexcept {
    if (!(flow >= mfc.min_flow / 2.0)) return 0.0; // also catches NaN
    if (flow < mfc.min_flow) return mfc.min_flow;
    return std::min(flow, mfc.max_flow);
}

WyeChannel command_mfc(WyeChannel channel, double flow) {
    if (channel.role != ChannelRole::Inlet) {
        fail(ErrorCode::NotAnInlet,
             "channel " + std::to_string(channel.id) + " is " +
                 std::string(to_string(channel.role)) + ", not an inlet");
    }
    channel.mfc.commanded_flow = snap_flow_command(channel.mfc, flow);
    return channel;
}

WyeChannel step_mfc(WyeChannel channel, double dt) {
    if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "MFC step requires dt > 0");
    auto& m = channel.mfc;
    const double decay = std::exp(-dt / m.time_constant);
    m.actual_flow = m.commanded_flow + (m.actual_flow - m.commanded_flow) * decay;
    m.actual_flow = std::clamp(m.actual_flow, 0.0, m.max_flow);
    return channel;
}

IrFrame capture_ir_frame(const ThermalGrid& grid, double noise_sigma, std::uint64_t rng_seed) {
    const auto& t = grid.temps;
    if (t.nx <= 0 || t.ny <= 0 || t.nx % IrFrame::width != 0 || t.ny % IrFrame::height != 0) {
        fail(ErrorCode::DimensionMismatch,
             "grid " + std::to_string(t.nx) + " x " + std::to_string(t.ny) +
                 " is not a multiple of the 32 x 24 sensor");
    }
    if (!(noise_sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
    const int bx = t.nx / IrFrame::width;
    const int by = t.ny / IrFrame::height;
    const double inv = 1.0 / (bx * by);

    IrFrame frame;
    frame.timestamp = grid.sim_time;
    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
    for (int py = 0; py < IrFrame::height; ++py) {
        for (int px = 0; px < IrFrame::width; ++px) {
            double sum = 0.0;
            for (int j = py * by; j < (py + 1) * by; ++j) {
                for (int i = px * bx; i < (px + 1) * bx; ++i) sum += t(i, j);
            }
            double v = sum * inv;
            if (noise_sigma > 0.0) v += noise(rng);
            frame.at(px, py) = v;
        }
    }
    return frame;
}

IrFrame IrCamera::capture(const ThermalGrid& grid) {
    const auto frame_seed = splitmix64(seed_ ^ splitmix64(frame_index_++));
    return capture_ir_frame(grid, noise_sigma_, frame_seed);
}

} // namespace jettwin
