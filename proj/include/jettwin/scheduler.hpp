#pragma once

// Scheduler CSV grammar:
//
//   file    := { line '\n' } [ line ]
//   line    := blank | comment | header | row
//   comment := '#' any text
//   header  := first non-comment line whose first cell starts with "time"
//   row     := number { ',' number }         (time in s, then one value per column)
//
// Cells may carry surrounding spaces/tabs and lines may end in "\r\n".
// Times must be strictly increasing and every row must have the same
// number of cells (at least two). Values are L/min in flow mode and degC
// in setpoint mode.

#include <span>
#include <string_view>
#include <vector>

namespace jettwin {

enum class ScheduleMode { Flow, Setpoint };

std::string_view to_string(ScheduleMode mode) noexcept;
ScheduleMode parse_schedule_mode(std::string_view text);

struct SchedulerTable {
    ScheduleMode mode = ScheduleMode::Flow;
    std::vector<double> times;
    std::vector<std::vector<double>> rows;

    std::size_t width() const { return rows.empty() ? 0 : rows.front().size(); }
    bool empty() const { return rows.empty(); }
    bool operator==(const SchedulerTable&) const = default;
};

/// Throws SchedulerFormat with 1-based row/column diagnostics.
SchedulerTable load_scheduler(std::string_view csv, ScheduleMode mode);

/// Zero-order hold; a row takes effect exactly at its time, and times
/// before the first row use the first row.
std::span<const double> scheduler_lookup(const SchedulerTable& table, double t);

std::string scheduler_to_csv(const SchedulerTable& table);

} // namespace jettwin
