#pragma once

// Strict reader for the TOML-style config files: [section] headers, key =
// value pairs, quoted strings, [a, b, c] arrays, # comments. Emits dotted
// "--section.key" argument pairs for CLI11; malformed lines report their line
// number, unknown keys surface through the parser as ordinary errors.

#include <fstream>
#include <string>
#include <vector>

#include "es/errors.hpp"

namespace escli {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

/// Expands the file into argv-style tokens: "--section.key" followed by its
/// value(s).
inline std::vector<std::string> read_config_args(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw es::ConfigError("cannot open config file: " + path);
    std::vector<std::string> args;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw es::ConfigError(path + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw es::ConfigError(path + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw es::ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw es::ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        if (value.empty()) throw es::ConfigError(path + ":" + std::to_string(lineno) + ": empty value for key " + key);
        args.push_back("--" + (section.empty() ? key : section + "." + key));
        if (value.front() == '[') {
            if (value.back() != ']')
                throw es::ConfigError(path + ":" + std::to_string(lineno) + ": unterminated array for key " + key);
            std::string body = value.substr(1, value.size() - 2);
            std::size_t start = 0;
            bool any = false;
            while (start <= body.size()) {
                const auto comma = body.find(',', start);
                const std::string elem = trim(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
                if (!elem.empty()) {
                    args.push_back(unquote(elem));
                    any = true;
                }
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (!any) throw es::ConfigError(path + ":" + std::to_string(lineno) + ": empty array for key " + key);
        } else {
            args.push_back(unquote(value));
        }
    }
    return args;
}

} // namespace escli
