#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rnnlab {

// Configuration / usage errors; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat `section.key = value` text, one pair per line, `#` comments. Parsing is
// strict: malformed lines and (at validation time) unknown keys are reported
// with their line number.
class FlatConfig {
public:
    void set(const std::string& key, const std::string& value, int line = 0) {
        kv_[key] = value;
        lines_[key] = line;
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    int line_of(const std::string& key) const {
        auto it = lines_.find(key);
        return it == lines_.end() ? 0 : it->second;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string require_str(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(bad_value(key, it->second, "number"));
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(bad_value(key, it->second, "non-negative integer"));
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(bad_value(key, it->second, "true/false"));
    }

    // Canonical text: sorted keys, `key = value`, LF endings.
    std::string text() const {
        std::ostringstream os;
        for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
        return os.str();
    }

    static FlatConfig parse_text(const std::string& text) {
        FlatConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = trim(line);
            if (s.empty() || s[0] == '#') continue;
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + s + "'");
            }
            const std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (key.empty() || !valid_key(key)) {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
            }
            if (value.empty()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": empty value for '" +
                                  key + "'");
            }
            if (cfg.has(key)) {
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
            }
            cfg.set(key, value, lineno);
        }
        return cfg;
    }

    static FlatConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_text(buf.str());
    }

private:
    std::map<std::string, std::string> kv_;
    std::map<std::string, int> lines_;

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static bool valid_key(const std::string& k) {
        for (char c : k) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
        }
        return true;
    }

    static std::string bad_value(const std::string& key, const std::string& v, const char* want) {
        return "config: key '" + key + "' has value '" + v + "', expected " + std::string(want);
    }
};

}  // namespace rnnlab
