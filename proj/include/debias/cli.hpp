// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace debias::cli {

inline constexpr std::string_view kVersion = "1.0.0";

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kValidationError = 2;

/// Resolved key=value settings. Sources are applied in order
/// defaults < config file < DEBIAS_SEED < --set / dedicated flags.
class Settings {
public:
    Settings();

    /// Parses `key = value` lines; '#' starts a comment. Errors name the line.
    void apply_file(std::string_view contents, const std::string& origin);
    /// Errors name the field and `origin`.
    void set(const std::string& key, const std::string& value, const std::string& origin);

    const std::string& get(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    /// FNV-1a over the sorted "key=value\n" lines.
    std::uint64_t hash() const;
    static bool known(const std::string& key);

private:
    std::map<std::string, std::string> values_;
};

/// Entry point of the `debias` executable; returns the process exit code.
int run(int argc, char** argv);

}  // namespace debias::cli
