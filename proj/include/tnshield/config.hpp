#pragma once

#include <map>
#include <string>
#include <vector>

#include "tnshield/errors.hpp"

namespace tnshield {

/// Flat key=value configuration with [section] headers; keys are exposed as
/// "section.key". '#' starts a comment. Later assignments win, which is how
/// command-line overrides are layered on top.
class Config {
public:
    Config() = default;
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Comma-separated list value.
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace tnshield
