#pragma once

#include <string_view>

namespace jettwin {

enum class ChannelRole { Inlet, Outlet, Closed };

std::string_view to_string(ChannelRole role) noexcept;
/// Accepts "inlet", "outlet", "closed" (case-insensitive).
ChannelRole parse_role(std::string_view text);

/// Flows in L/min, time constant in s.
struct MfcState {
    double commanded_flow = 0.0;
    double actual_flow = 0.0;
    double min_flow = 9.0;
    double max_flow = 300.0;
    double time_constant = 0.125;

    bool operator==(const MfcState&) const = default;
};

/// One chamber orifice with its wye: the MFC feeds it as an inlet, the
/// solenoid vents it as an outlet.
struct WyeChannel {
    int id = 0;
    ChannelRole role = ChannelRole::Closed;
    MfcState mfc;
    bool solenoid_open = false;

    bool operator==(const WyeChannel&) const = default;
};

} // namespace jettwin
