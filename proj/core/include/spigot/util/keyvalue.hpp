#pragma once

// Flat "key = value" text configuration. Blank lines and anything after '#'
// are ignored; keys may repeat only if the caller allows it.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spigot {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Throws ConfigError on malformed lines or duplicate keys.
std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source);

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
};

double kv_double(const KeyValue& kv, const std::string& source);
long kv_int(const KeyValue& kv, const std::string& source);
std::uint64_t kv_u64(const KeyValue& kv, const std::string& source);
bool kv_bool(const KeyValue& kv, const std::string& source);
/// Comma- or space-separated list, e.g. "1,2,3" or "1..10" for integers.
std::vector<std::string> kv_list(const KeyValue& kv);
std::vector<std::uint64_t> kv_u64_list(const KeyValue& kv, const std::string& source);

}  // namespace spigot
