#include "jettwin/persistence.hpp"

#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace jettwin {

namespace {

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ' ';
        out += format_double(values[k]);
    }
    return out;
}

std::vector<double> parse_doubles(std::string_view text, const std::string& key) {
    std::vector<double> out;
    for (auto part : split(trim(text), ' ')) {
        if (trim(part).empty()) continue;
        try {
            out.push_back(parse_double(part, key));
        } catch (const Error& e) {
            fail(ErrorCode::StateFormat, e.what());
        }
    }
    return out;
}

std::string region_key(std::size_t r, const char* field) {
    return "region." + std::to_string(r) + "." + field;
}

} // namespace

void StateFile::validate() const {
    std::vector<WyeChannel> channels = make_channels(static_cast<int>(roles.size()));
    for (std::size_t k = 0; k < roles.size(); ++k) channels[k].role = roles[k];
    if (!arrangement_valid(channels)) {
        fail(ErrorCode::ArrangementViolation, "state arrangement has inlets but no outlet");
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& rs = regions[r];
        rs.region.validate();
        if (rs.region.id != static_cast<int>(r)) {
            fail(ErrorCode::InvalidRegion, "region ids must be 0..M-1 in order");
        }
        if (rs.region.bound_mfc < 0 || rs.region.bound_mfc >= static_cast<int>(roles.size())) {
            fail(ErrorCode::UnknownChannel,
                 "region " + std::to_string(r) + " bound to unknown channel " +
                     std::to_string(rs.region.bound_mfc));
        }
        rs.gains.validate();
        if (!std::isfinite(rs.setpoint)) fail(ErrorCode::InvalidArgument, "non-finite setpoint");
    }
    if (!decoupler_gains.empty()) {
        if (decoupler_gains.size() != regions.size()) {
            fail(ErrorCode::DimensionMismatch, "decoupler matrix must be regions x regions");
        }
        for (const auto& row : decoupler_gains) {
            if (row.size() != regions.size()) {
                fail(ErrorCode::DimensionMismatch, "decoupler matrix must be regions x regions");
            }
        }
    }
}

std::string save_state(const StateFile& state) {
    state.validate();
    KeyValueDoc doc;
    doc.set("version", std::to_string(StateFile::current_version));
    doc.set("mode", std::string(to_string(state.mode)));
    doc.set("decoupler", state.decoupler_enabled ? "on" : "off");
    doc.set("channels", std::to_string(state.roles.size()));
    for (std::size_t k = 0; k < state.roles.size(); ++k) {
        doc.set("channel." + std::to_string(k) + ".role", std::string(to_string(state.roles[k])));
    }
    doc.set("regions", std::to_string(state.regions.size()));
    for (std::size_t r = 0; r < state.regions.size(); ++r) {
        const auto& rs = state.regions[r];
        const auto& g = rs.region;
        doc.set(region_key(r, "bounds"), std::to_string(g.x_min) + " " + std::to_string(g.x_max) +
                                             " " + std::to_string(g.y_min) + " " +
                                             std::to_string(g.y_max));
        doc.set(region_key(r, "mfc"), std::to_string(g.bound_mfc));
        doc.set(region_key(r, "setpoint"), rs.setpoint);
        doc.set(region_key(r, "kp"), rs.gains.kp);
        doc.set(region_key(r, "ki"), rs.gains.ki);
        doc.set(region_key(r, "kd"), rs.gains.kd);
    }
    for (std::size_t r = 0; r < state.decoupler_gains.size(); ++r) {
        doc.set("decoupler.gain." + std::to_string(r), join_doubles(state.decoupler_gains[r]));
    }
    return doc.to_text("jettwin state file");
}

StateFile load_state(std::string_view text) {
    const auto doc = KeyValueDoc::parse(text);
    const auto version = doc.require_int("version");
    if (version != StateFile::current_version) {
        fail(ErrorCode::StateFormat, "unknown state file version " + std::to_string(version));
    }
    StateFile state;
    try {
        state.mode = parse_control_mode(doc.require("mode"));
        const auto& dec = doc.require("decoupler");
        if (dec != "on" && dec != "off") fail(ErrorCode::StateFormat, "decoupler must be on/off");
        state.decoupler_enabled = dec == "on";
        const auto channels = doc.require_int("channels");
        if (channels < 1 || channels > 64) fail(ErrorCode::StateFormat, "bad channel count");
        for (long long k = 0; k < channels; ++k) {
            state.roles.push_back(parse_role(doc.require("channel." + std::to_string(k) + ".role")));
        }
        const auto regions = doc.require_int("regions");
        if (regions < 0 || regions > 64) fail(ErrorCode::StateFormat, "bad region count");
        for (std::size_t r = 0; r < static_cast<std::size_t>(regions); ++r) {
            RegionState rs;
            const auto bounds = parse_doubles(doc.require(region_key(r, "bounds")), region_key(r, "bounds"));
            if (bounds.size() != 4) fail(ErrorCode::StateFormat, region_key(r, "bounds") + ": need 4 integers");
            rs.region.id = static_cast<int>(r);
            rs.region.x_min = static_cast<int>(bounds[0]);
            rs.region.x_max = static_cast<int>(bounds[1]);
            rs.region.y_min = static_cast<int>(bounds[2]);
            rs.region.y_max = static_cast<int>(bounds[3]);
            rs.region.bound_mfc = static_cast<int>(doc.require_int(region_key(r, "mfc")));
            rs.setpoint = doc.require_double(region_key(r, "setpoint"));
            rs.gains.kp = doc.require_double(region_key(r, "kp"));
            rs.gains.ki = doc.require_double(region_key(r, "ki"));
            rs.gains.kd = doc.require_double(region_key(r, "kd"));
            state.regions.push_back(rs);
        }
        if (doc.contains("decoupler.gain.0")) {
            for (std::size_t r = 0; r < static_cast<std::size_t>(regions); ++r) {
                const auto key = "decoupler.gain." + std::to_string(r);
                state.decoupler_gains.push_back(parse_doubles(doc.require(key), key));
            }
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) fail(ErrorCode::StateFormat, e.what());
        throw;
    }
    state.validate();
    return state;
}

std::string run_log_header(const RunLogLayout& layout) {
    std::string h = "elapsed_s";
    for (int k = 0; k < layout.channel_count; ++k) {
        const auto p = "mfc" + std::to_string(k);
        h += "," + p + "_cmd_lpm," + p + "_act_lpm";
    }
    for (int r = 0; r < layout.region_count; ++r) {
        const auto p = "region" + std::to_string(r);
        h += "," + p + "_mean_c," + p + "_x_min_px," + p + "_x_max_px," + p + "_y_min_px," + p +
             "_y_max_px";
        if (layout.control_columns) {
            h += "," + p + "_setpoint_c," + p + "_kp," + p + "_ki," + p + "_kd";
        }
    }
    return h;
}

std::string format_run_row(const RunLogRecord& rec, const RunLogLayout& layout) {
    if (rec.channels.size() != static_cast<std::size_t>(layout.channel_count) ||
        rec.regions.size() != static_cast<std::size_t>(layout.region_count)) {
        fail(ErrorCode::LogFormat, "run log record does not match the file layout");
    }
    std::string row = format_double(rec.elapsed);
    for (const auto& c : rec.channels) {
        row += "," + format_double(c.commanded) + "," + format_double(c.actual);
    }
    for (const auto& r : rec.regions) {
        row += "," + format_double(r.mean) + "," + std::to_string(r.x_min) + "," +
               std::to_string(r.x_max) + "," + std::to_string(r.y_min) + "," +
               std::to_string(r.y_max);
        if (layout.control_columns) {
            row += "," + format_double(r.setpoint) + "," + format_double(r.gains.kp) + "," +
                   format_double(r.gains.ki) + "," + format_double(r.gains.kd);
        }
    }
    return row;
}

std::string pixel_log_header() {
    std::string h = "elapsed_s";
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) h += ",px_" + std::to_string(x) + "_" + std::to_string(y) + "_c";
    }
    return h;
}

std::string format_pixel_row(const PixelLogRecord& rec) {
    std::string row = format_double(rec.elapsed);
    for (double v : rec.pixels) {
        row += ',';
        row += format_double(v);
    }
    return row;
}

namespace {

std::vector<std::string_view> data_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    for (auto line : split(text, '\n')) {
        line = trim(line);
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) fail(ErrorCode::LogFormat, "log is empty");
    return lines;
}

double cell(std::string_view text, std::size_t row, std::size_t col) {
    try {
        return parse_double(text, "row " + std::to_string(row) + ", column " + std::to_string(col + 1));
    } catch (const Error& e) {
        fail(ErrorCode::LogFormat, e.what());
    }
}

} // namespace

ParsedRunLog parse_run_log(std::string_view text) {
    const auto lines = data_lines(text);
    const auto header = split(lines[0], ',');
    ParsedRunLog out;
    auto& layout = out.layout;
    for (const auto h : header) {
        if (h.ends_with("_cmd_lpm")) ++layout.channel_count;
        if (h.ends_with("_mean_c")) ++layout.region_count;
        if (h.ends_with("_setpoint_c")) layout.control_columns = true;
    }
    if (run_log_header(layout) != lines[0]) {
        fail(ErrorCode::LogFormat, "unrecognised run log header");
    }
    const std::size_t per_region = layout.control_columns ? 9 : 5;
    const std::size_t width = 1 + 2 * static_cast<std::size_t>(layout.channel_count) +
                              per_region * static_cast<std::size_t>(layout.region_count);
    for (std::size_t l = 1; l < lines.size(); ++l) {
        const auto cells = split(lines[l], ',');
        if (cells.size() != width) {
            fail(ErrorCode::LogFormat, "row " + std::to_string(l + 1) + ": expected " +
                                           std::to_string(width) + " fields");
        }
        RunLogRecord rec;
        std::size_t c = 0;
        auto next = [&] {
            const double v = cell(cells[c], l + 1, c);
            ++c;
            return v;
        };
        rec.elapsed = next();
        for (int k = 0; k < layout.channel_count; ++k) {
            ChannelFlowLog f;
            f.commanded = next();
            f.actual = next();
            rec.channels.push_back(f);
        }
        for (int r = 0; r < layout.region_count; ++r) {
            RegionLog g;
            g.mean = next();
            g.x_min = static_cast<int>(next());
            g.x_max = static_cast<int>(next());
            g.y_min = static_cast<int>(next());
            g.y_max = static_cast<int>(next());
            if (layout.control_columns) {
                g.setpoint = next();
                g.gains.kp = next();
                g.gains.ki = next();
                g.gains.kd = next();
            }
            rec.regions.push_back(g);
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

std::vector<PixelLogRecord> parse_pixel_log(std::string_view text) {
    const auto lines = data_lines(text);
    if (lines[0] != pixel_log_header()) fail(ErrorCode::LogFormat, "unrecognised pixel log header");
    std::vector<PixelLogRecord> out;
    for (std::size_t l = 1; l < lines.size(); ++l) {
        const auto cells = split(lines[l], ',');
        if (cells.size() != 769) {
            fail(ErrorCode::LogFormat, "row " + std::to_string(l + 1) + ": expected 769 fields");
        }
        PixelLogRecord rec;
        rec.elapsed = cell(cells[0], l + 1, 0);
        for (std::size_t k = 0; k < 768; ++k) rec.pixels[k] = cell(cells[k + 1], l + 1, k + 1);
        out.push_back(rec);
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

RunLogger::RunLogger(std::string run_path, std::string pixel_path, RunLogLayout layout)
    : run_path_(std::move(run_path)), pixel_path_(std::move(pixel_path)), layout_(layout) {}

RunLogger RunLogger::in_directory(const std::string& dir, RunLogLayout layout) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir + "': " + ec.message());
    for (int k = 1;; ++k) {
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "%03d", k);
        const auto run = (fs::path(dir) / ("runlog_" + std::string(suffix) + ".csv")).string();
        const auto pix = (fs::path(dir) / ("pixels_" + std::string(suffix) + ".csv")).string();
        if (!fs::exists(run) && !fs::exists(pix)) return RunLogger(run, pix, layout);
    }
}

void RunLogger::open(std::ofstream& out, const std::string& path, const std::string& header) {
    out.open(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open log '" + path + "'");
    out << header << '\n';
}

void RunLogger::append_run_log(const RunLogRecord& record) {
    const auto row = format_run_row(record, layout_);
    if (!run_.is_open()) open(run_, run_path_, run_log_header(layout_));
    run_ << row << '\n';
    run_.flush();
    if (!run_) fail(ErrorCode::Io, "write failed for '" + run_path_ + "'");
}

void RunLogger::append_pixel_log(const PixelLogRecord& record) {
    if (!pixel_.is_open()) open(pixel_, pixel_path_, pixel_log_header());
    pixel_ << format_pixel_row(record) << '\n';
    pixel_.flush();
    if (!pixel_) fail(ErrorCode::Io, "write failed for '" + pixel_path_ + "'");
}

} // namespace jettwin
