#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlink/error.hpp"

namespace mlink {

/// Flat key/value configuration: UTF-8 text, `key = value` lines, `#`
/// comments, `[section]` headers prefixing the keys that follow as
/// `section.key`.
class Config {
public:
    static Config parse_string(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#') continue;
            if (s.front() == '[') {
                require(s.back() == ']', "config line " + std::to_string(line_no) +
                                             ": unterminated section header");
                section = strip(s.substr(1, s.size() - 2));
                continue;
            }
            auto eq = s.find('=');
            require(eq != std::string::npos,
                    "config line " + std::to_string(line_no) + ": expected key = value");
            std::string key = strip(s.substr(0, eq));
            std::string value = strip(s.substr(eq + 1));
            require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream f(path);
        require(f.good(), "config: cannot open " + path);
        std::stringstream buf;
        buf << f.rdbuf();
        return parse_string(buf.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key) const {
        auto it = values_.find(key);
        require(it != values_.end(), "config: missing key '" + key + "'");
        return it->second;
    }
    std::string str_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key) const { return to_number(key, str(key)); }
    double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    std::int64_t integer(const std::string& key) const {
        double v = number(key);
        auto i = std::int64_t(v);
        require(double(i) == v, "config: '" + key + "' is not an integer");
        return i;
    }
    std::int64_t integer_or(const std::string& key, std::int64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    bool boolean_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        std::string v = str(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail("config: '" + key + "' is not a boolean");
    }

    /// Comma-separated integer list; empty value gives an empty list.
    std::vector<std::int64_t> integer_list_or(const std::string& key) const {
        std::vector<std::int64_t> out;
        if (!has(key)) return out;
        std::istringstream in(str(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            item = strip(item);
            if (!item.empty()) out.push_back(std::int64_t(to_number(key, item)));
        }
        return out;
    }

    /// Section names under a prefix: keys `model.a.task`, `model.b.dim`
    /// yield {"a", "b"} for prefix "model".
    std::vector<std::string> subsections(const std::string& prefix) const {
        std::vector<std::string> out;
        const std::string p = prefix + ".";
        for (const auto& [key, _] : values_) {
            if (key.rfind(p, 0) != 0) continue;
            auto rest = key.substr(p.size());
            auto dot = rest.find('.');
            if (dot == std::string::npos) continue;
            std::string name = rest.substr(0, dot);
            if (out.empty() || out.back() != name) {
                bool seen = false;
                for (const auto& s : out) seen = seen || s == name;
                if (!seen) out.push_back(name);
            }
        }
        return out;
    }

private:
    static std::string strip(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static double to_number(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            double x = std::stod(v, &used);
            require(used == v.size(), "config: trailing characters in '" + key + "'");
            return x;
        } catch (const std::exception&) {
            fail("config: '" + key + "' is not a number (value '" + v + "')");
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace mlink
