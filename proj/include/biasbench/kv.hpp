#ifndef BIASBENCH_KV_HPP
#define BIASBENCH_KV_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace biasbench {

// Structured key-value text, the format for every report/manifest artifact:
// one "key = value" per line, '#' comment lines ignored. Writing preserves
// the given order; reading keeps the last occurrence of a duplicate key.
using KvPairs = std::vector<std::pair<std::string, std::string>>;

void write_kv_file(const std::string& path, const KvPairs& pairs);
std::map<std::string, std::string> read_kv_file(const std::string& path);

// INI-style config: "[section]" headers over the same key = value lines.
// Keys are returned flattened as "section.key".
std::map<std::string, std::string> read_ini_file(const std::string& path);
std::map<std::string, std::string> parse_ini(const std::string& text,
                                             const std::string& origin);

// Strict scalar parsing for config values; throws Error(Parse) on junk.
long long parse_int(const std::string& value, const std::string& key);
double parse_real(const std::string& value, const std::string& key);
bool parse_bool(const std::string& value, const std::string& key);

std::string format_real(double value);  // round-trip-exact decimal form

}  // namespace biasbench

#endif  // BIASBENCH_KV_HPP
