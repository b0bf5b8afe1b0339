#include "ner/config.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include "ner/errors.hpp"

namespace ner {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& in,
                                                const std::set<std::string>& allowed) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw DataError("config line " + std::to_string(lineno) + ": empty key");
        if (allowed.find(key) == allowed.end())
            throw DataError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                            "'");
        if (!out.emplace(key, value).second)
            throw DataError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                            "'");
    }
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::set<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    return parse_config(in, allowed);
}

namespace {
[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw DataError("config: key '" + key + "' has malformed value '" + value + "'");
}
}  // namespace

double config_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                     double fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    std::istringstream ss(it->second);
    double v;
    char extra;
    if (!(ss >> v) || ss >> extra) bad_value(key, it->second);
    return v;
}

std::uint64_t config_u64(const std::map<std::string, std::string>& cfg, const std::string& key,
                         std::uint64_t fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    std::istringstream ss(it->second);
    std::uint64_t v;
    char extra;
    if (!it->second.empty() && it->second[0] == '-') bad_value(key, it->second);
    if (!(ss >> v) || ss >> extra) bad_value(key, it->second);
    return v;
}

bool config_bool(const std::map<std::string, std::string>& cfg, const std::string& key,
                 bool fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    bad_value(key, it->second);
}

}  // namespace ner
