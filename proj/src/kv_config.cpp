#include "jettwin/kv_config.hpp"

#include "jettwin/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace jettwin {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ArrangementViolation: return "ArrangementViolation";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::NotAnInlet: return "NotAnInlet";
    case ErrorCode::InvalidRegion: return "InvalidRegion";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SimulationDiverged: return "SimulationDiverged";
    case ErrorCode::SchedulerFormat: return "SchedulerFormat";
    case ErrorCode::SchedulerMismatch: return "SchedulerMismatch";
    case ErrorCode::StateFormat: return "StateFormat";
    case ErrorCode::LogFormat: return "LogFormat";
    case ErrorCode::NoStepDetected: return "NoStepDetected";
    case ErrorCode::NonSettling: return "NonSettling";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Protocol: return "ProtocolError";
    }
    return "Unknown";
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view context) {
    text = trim(text);
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        fail(ErrorCode::InvalidArgument,
             std::string(context) + ": not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text, std::string_view context) {
    text = trim(text);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        fail(ErrorCode::InvalidArgument,
             std::string(context) + ": not an integer: '" + std::string(text) + "'");
    }
    return value;
}

std::string_view trim(std::string_view text) noexcept {
    const auto ws = " \t\r\n";
    const auto first = text.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(ws);
    return text.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

KeyValueDoc KeyValueDoc::parse(std::string_view text) {
    KeyValueDoc doc;
    int line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorCode::StateFormat,
                 "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = std::string(trim(line.substr(0, eq)));
        if (key.empty()) {
            fail(ErrorCode::StateFormat, "line " + std::to_string(line_no) + ": empty key");
        }
        if (doc.contains(key)) {
            fail(ErrorCode::StateFormat,
                 "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        doc.set(key, std::string(trim(line.substr(eq + 1))));
    }
    return doc;
}

KeyValueDoc KeyValueDoc::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> KeyValueDoc::find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

const std::string& KeyValueDoc::require(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(ErrorCode::StateFormat, "missing required key '" + key + "'");
    return it->second;
}

double KeyValueDoc::require_double(const std::string& key) const {
    try {
        return parse_double(require(key), key);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::StateFormat) throw;
        fail(ErrorCode::StateFormat, e.what());
    }
}

long long KeyValueDoc::require_int(const std::string& key) const {
    try {
        return parse_int(require(key), key);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::StateFormat) throw;
        fail(ErrorCode::StateFormat, e.what());
    }
}

double KeyValueDoc::get_double(const std::string& key, double fallback) const {
    return contains(key) ? require_double(key) : fallback;
}

long long KeyValueDoc::get_int(const std::string& key, long long fallback) const {
    return contains(key) ? require_int(key) : fallback;
}

std::string KeyValueDoc::get(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

void KeyValueDoc::set(const std::string& key, std::string value) {
    if (entries_.count(key) == 0) order_.push_back(key);
    entries_[key] = std::move(value);
}

std::string KeyValueDoc::to_text(std::string_view header_comment) const {
    std::string out;
    if (!header_comment.empty()) {
        for (auto line : split(header_comment, '\n')) {
            out += "# ";
            out += line;
            out += '\n';
        }
    }
    for (const auto& key : order_) {
        out += key;
        out += " = ";
        out += entries_.at(key);
        out += '\n';
    }
    return out;
}

} // namespace jettwin
