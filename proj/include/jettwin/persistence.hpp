#pragma once

// State files and run logs.
//
// State file (plain text, one `key = value` per line, '#' comments):
//
//   version = 1
//   mode = mfc | temperature
//   decoupler = on | off
//   channels = N
//   channel.<i>.role = inlet | outlet | closed           (i = 0..N-1)
//   regions = M
//   region.<r>.bounds = <x_min> <x_max> <y_min> <y_max>  (camera pixels)
//   region.<r>.mfc = <channel id>
//   region.<r>.setpoint = <degC>
//   region.<r>.kp = ... / .ki = ... / .kd = ...
//   decoupler.gain.<r> = <K_r0> <K_r1> ...               (optional, all M rows)
//
// Run log CSV header (one group per channel, then per region):
//
//   elapsed_s,mfc<i>_cmd_lpm,mfc<i>_act_lpm,...,
//   region<r>_mean_c,region<r>_x_min_px,region<r>_x_max_px,region<r>_y_min_px,region<r>_y_max_px,
//   [region<r>_setpoint_c,region<r>_kp,region<r>_ki,region<r>_kd]   (temperature-mode runs)
//
// Pixel log CSV header: elapsed_s,px_<x>_<y>_c for y = 0..23, x = 0..31 (row-major).
// Numbers use the shortest text that reads back to the same double.

#include "jettwin/control.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace jettwin {

struct RegionState {
    Region region;
    PidGains gains;
    double setpoint = 25.0;
    bool operator==(const RegionState&) const = default;
};

struct StateFile {
    static constexpr int current_version = 1;

    ControlMode mode = ControlMode::MfcDirect;
    bool decoupler_enabled = false;
    std::vector<ChannelRole> roles;
    std::vector<RegionState> regions;
    std::vector<std::vector<double>> decoupler_gains; // empty when unset

    /// Arrangement rule, region bounds, channel bindings, gains and matrix shape.
    void validate() const;
    bool operator==(const StateFile&) const = default;
};

std::string save_state(const StateFile& state);
/// Throws StateFormat (unknown version, missing key named in the message,
/// malformed value) or the invariant's own error code.
StateFile load_state(std::string_view text);

struct RunLogLayout {
    int channel_count = 0;
    int region_count = 0;
    bool control_columns = false;
    bool operator==(const RunLogLayout&) const = default;
};

struct ChannelFlowLog {
    double commanded = 0.0;
    double actual = 0.0;
    bool operator==(const ChannelFlowLog&) const = default;
};

struct RegionLog {
    double mean = 0.0;
    int x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    double setpoint = 0.0;
    PidGains gains;
    bool operator==(const RegionLog&) const = default;
};

struct RunLogRecord {
    double elapsed = 0.0;
    std::vector<ChannelFlowLog> channels;
    std::vector<RegionLog> regions;
    bool operator==(const RunLogRecord&) const = default;
};

struct PixelLogRecord {
    double elapsed = 0.0;
    std::array<double, 768> pixels{};
    bool operator==(const PixelLogRecord&) const = default;
};

std::string run_log_header(const RunLogLayout& layout);
std::string format_run_row(const RunLogRecord& record, const RunLogLayout& layout);
std::string pixel_log_header();
std::string format_pixel_row(const PixelLogRecord& record);

struct ParsedRunLog {
    RunLogLayout layout;
    std::vector<RunLogRecord> records;
};

/// Throws LogFormat on header/row mismatch.
ParsedRunLog parse_run_log(std::string_view text);
std::vector<PixelLogRecord> parse_pixel_log(std::string_view text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

/// The pair of CSV files produced while save mode is active. Headers are
/// written with the first record; elapsed time is the caller's business.
class RunLogger {
public:
    RunLogger(std::string run_path, std::string pixel_path, RunLogLayout layout);

    /// Next unused "<dir>/runlog_<k>.csv" / "<dir>/pixels_<k>.csv" pair.
    static RunLogger in_directory(const std::string& dir, RunLogLayout layout);

    void append_run_log(const RunLogRecord& record);
    void append_pixel_log(const PixelLogRecord& record);

    const std::string& run_path() const { return run_path_; }
    const std::string& pixel_path() const { return pixel_path_; }
    const RunLogLayout& layout() const { return layout_; }

private:
    void open(std::ofstream& out, const std::string& path, const std::string& header);

    std::string run_path_;
    std::string pixel_path_;
    RunLogLayout layout_;
    std::ofstream run_;
    std::ofstream pixel_;
};

} // namespace jettwin
