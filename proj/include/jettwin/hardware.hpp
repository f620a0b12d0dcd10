#pragma once

#include "jettwin/channel.hpp"
#include "jettwin/plate.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace jettwin {

/// `count` channels, all Closed with idle MFCs.
std::vector<WyeChannel> make_channels(int count);

/// At least one Outlet whenever any Inlet exists (the chamber must vent).
bool arrangement_valid(std::span<const WyeChannel> channels) noexcept;

/// Role/solenoid/flow consistency of a single channel.
bool channel_consistent(const WyeChannel& channel) noexcept;

/// Applies the arrangement logic: Inlet closes the solenoid and arms the MFC,
/// Outlet opens the solenoid and zeroes the MFC command, Closed shuts both.
/// Throws UnknownChannel or ArrangementViolation; the input is never modified.
std::vector<WyeChannel> set_channel_role(std::span<const WyeChannel> channels, int id,
                                         ChannelRole role);

/// Snaps sub-range commands: below min/2 -> 0, [min/2, min) -> min, above max -> max.
double snap_flow_command(const MfcState& mfc, double flow) noexcept;

/// Throws NotAnInlet unless the channel is an Inlet.
WyeChannel command_mfc(WyeChannel channel, double flow);

/// Exact first-order lag of the actual flow toward the command.
WyeChannel step_mfc(WyeChannel channel, double dt);

struct IrFrame {
    static constexpr int width = 32;
    static constexpr int height = 24;
    static constexpr int pixel_count = width * height;

    std::array<double, pixel_count> pixels{}; // degC, index y * 32 + x
    double timestamp = 0.0;

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y * width + x)]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
    bool operator==(const IrFrame&) const = default;
};

/// Block-averages the grid down to 32 x 24 and adds seeded Gaussian noise.
IrFrame capture_ir_frame(const ThermalGrid& grid, double noise_sigma, std::uint64_t rng_seed);

/// Camera owned by the control loop: frame k uses a seed derived from
/// (seed, k), so a run is reproducible frame by frame.
class IrCamera {
public:
    explicit IrCamera(double noise_sigma = 0.5, std::uint64_t seed = 1)
        : noise_sigma_(noise_sigma), seed_(seed) {}

    IrFrame capture(const ThermalGrid& grid);

    double noise_sigma() const { return noise_sigma_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t frames_taken() const { return frame_index_; }

private:
    double noise_sigma_;
    std::uint64_t seed_;
    std::uint64_t frame_index_ = 0;
};

} // namespace jettwin
