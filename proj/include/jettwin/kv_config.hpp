#pragma once

// Plain-text `key = value` documents, shared by the plate/scenario config
// files and the state file. Lines starting with '#' are comments.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jettwin {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view context);
long long parse_int(std::string_view text, std::string_view context);

std::string_view trim(std::string_view text) noexcept;
std::vector<std::string_view> split(std::string_view text, char sep);

class KeyValueDoc {
public:
    static KeyValueDoc parse(std::string_view text);
    static KeyValueDoc load_file(const std::string& path);

    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    std::optional<std::string> find(const std::string& key) const;

    /// These throw Error(StateFormat) naming the key when it is absent or malformed.
    const std::string& require(const std::string& key) const;
    double require_double(const std::string& key) const;
    long long require_int(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::string get(const std::string& key, const std::string& fallback) const;

    void set(const std::string& key, std::string value);
    void set(const std::string& key, double value) { set(key, format_double(value)); }

    /// Keys in insertion order.
    const std::vector<std::string>& keys() const { return order_; }
    std::string to_text(std::string_view header_comment = {}) const;

private:
    std::map<std::string, std::string> entries_;
    std::vector<std::string> order_;
};

} // namespace jettwin
