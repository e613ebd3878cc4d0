#include "biasbench/kv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "biasbench/common.hpp"

namespace biasbench {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_kv_file(const std::string& path, const KvPairs& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  for (const auto& [key, value] : pairs) {
    out << key << " = " << value << "\n";
  }
  if (!out.flush()) fail(ErrorKind::Io, "write failed: " + path);
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> parse_ini(const std::string& text,
                                             const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        fail(ErrorKind::Parse, origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Parse, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      fail(ErrorKind::Parse, origin + ":" + std::to_string(lineno) + ": empty key");
    }
    out[section.empty() ? key : section + "." + key] = trim(t.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_ini_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str(), path);
}

long long parse_int(const std::string& value, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0') {
    fail(ErrorKind::Parse, "expected integer for '" + key + "', got '" + value + "'");
  }
  return v;
}

double parse_real(const std::string& value, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0') {
    fail(ErrorKind::Parse, "expected number for '" + key + "', got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  fail(ErrorKind::Parse, "expected boolean for '" + key + "', got '" + value + "'");
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf);
}

}  // namespace biasbench
