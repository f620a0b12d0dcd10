#include "jettwin/scheduler.hpp"

#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jettwin {

std::string_view to_string(ScheduleMode mode) noexcept {
    return mode == ScheduleMode::Flow ? "flow" : "setpoint";
}

ScheduleMode parse_schedule_mode(std::string_view text) {
    if (text == "flow") return ScheduleMode::Flow;
    if (text == "setpoint") return ScheduleMode::Setpoint;
    fail(ErrorCode::InvalidArgument, "unknown scheduler mode '" + std::string(text) + "'");
}

SchedulerTable load_scheduler(std::string_view csv, ScheduleMode mode) {
    SchedulerTable table;
    table.mode = mode;
    int line_no = 0;
    bool seen_content = false;
    for (auto line : split(csv, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split(line, ',');
        if (!seen_content) {
            seen_content = true;
            if (trim(cells.front()).substr(0, 4) == "time") continue;
        }
        const auto where = [&](std::size_t col) {
            return "row " + std::to_string(line_no) + ", column " + std::to_string(col + 1);
        };
        if (cells.size() < 2) {
            fail(ErrorCode::SchedulerFormat,
                 "row " + std::to_string(line_no) + ": need a time and at least one value");
        }
        if (!table.rows.empty() && cells.size() != table.width() + 1) {
            fail(ErrorCode::SchedulerFormat,
                 "row " + std::to_string(line_no) + ": expected " +
                     std::to_string(table.width() + 1) + " cells, got " +
                     std::to_string(cells.size()));
        }
        std::vector<double> values;
        double time = 0.0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            try {
                v = parse_double(cells[c], where(c));
            } catch (const Error& e) {
                fail(ErrorCode::SchedulerFormat, e.what());
            }
            if (!std::isfinite(v)) fail(ErrorCode::SchedulerFormat, where(c) + ": non-finite value");
            if (c == 0) time = v;
            else values.push_back(v);
        }
        if (!table.times.empty() && !(time > table.times.back())) {
            fail(ErrorCode::SchedulerFormat,
                 where(0) + ": time " + format_double(time) + " does not increase");
        }
        table.times.push_back(time);
        table.rows.push_back(std::move(values));
    }
    if (table.rows.empty()) fail(ErrorCode::SchedulerFormat, "scheduler has no rows");
    return table;
}

std::span<const double> scheduler_lookup(const SchedulerTable& table, double t) {
    if (table.empty()) fail(ErrorCode::InvalidArgument, "lookup in an empty scheduler");
    const auto it = std::upper_bound(table.times.begin(), table.times.end(), t);
    const auto idx = it == table.times.begin() ? 0 : (it - table.times.begin()) - 1;
    return table.rows[static_cast<std::size_t>(idx)];
}

std::string scheduler_to_csv(const SchedulerTable& table) {
    std::string out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out += format_double(table.times[r]);
        for (double v : table.rows[r]) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

} // namespace jettwin
