#include "spigot/util/keyvalue.hpp"

#include <charconv>
#include <set>
#include <sstream>

namespace spigot {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const KeyValue& kv, const std::string& source, const char* what) {
  T out{};
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(source, kv.line, "'" + kv.key + "' expects " + what + ", got '" + kv.value + "'");
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::invalid_argument(source + ":" + std::to_string(line) + ": " + message) {}

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value'");
    KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (kv.key.empty()) throw ConfigError(source, line, "empty key");
    if (kv.value.empty()) throw ConfigError(source, line, "empty value for '" + kv.key + "'");
    if (!seen.insert(kv.key).second) throw ConfigError(source, line, "duplicate key '" + kv.key + "'");
    out.push_back(std::move(kv));
  }
  return out;
}

double kv_double(const KeyValue& kv, const std::string& source) {
  return parse_number<double>(kv, source, "a number");
}

long kv_int(const KeyValue& kv, const std::string& source) { return parse_number<long>(kv, source, "an integer"); }

std::uint64_t kv_u64(const KeyValue& kv, const std::string& source) {
  return parse_number<std::uint64_t>(kv, source, "a non-negative integer");
}

bool kv_bool(const KeyValue& kv, const std::string& source) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "yes") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "no") return false;
  throw ConfigError(source, kv.line, "'" + kv.key + "' expects true|false, got '" + kv.value + "'");
}

std::vector<std::string> kv_list(const KeyValue& kv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : kv.value + ",") {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

std::vector<std::uint64_t> kv_u64_list(const KeyValue& kv, const std::string& source) {
  std::vector<std::uint64_t> out;
  for (const auto& item : kv_list(kv)) {
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const auto lo = kv_u64({kv.key, item.substr(0, dots), kv.line}, source);
      const auto hi = kv_u64({kv.key, item.substr(dots + 2), kv.line}, source);
      if (hi < lo) throw ConfigError(source, kv.line, "empty range '" + item + "'");
      for (auto v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(kv_u64({kv.key, item, kv.line}, source));
    }
  }
  if (out.empty()) throw ConfigError(source, kv.line, "'" + kv.key + "' is empty");
  return out;
}

}  // namespace spigot
