#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>

namespace ner {

// Line-oriented "key = value" text; blank lines and '#' comments are
// skipped. Keys outside `allowed` and duplicate keys raise DataError with
// the line number.
std::map<std::string, std::string> parse_config(std::istream& in,
                                                const std::set<std::string>& allowed);
std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::set<std::string>& allowed);

// Conversions that raise DataError naming the key on malformed values.
double config_double(const std::map<std::string, std::string>& cfg, const std::string& key,
                     double fallback);
std::uint64_t config_u64(const std::map<std::string, std::string>& cfg, const std::string& key,
                         std::uint64_t fallback);
bool config_bool(const std::map<std::string, std::string>& cfg, const std::string& key,
                 bool fallback);

}  // namespace ner
