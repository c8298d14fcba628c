#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridpv/synthcity.hpp"

namespace gridpv {

/// One published config key. Wildcard keys ("city.*.seed") match any city
/// name in the middle segment. The same table drives validation and --help.
struct SchemaEntry {
    const char* key;
    const char* type;  // string | int | real | bool | ints | reals | strings
    const char* default_value;
    const char* description;
};

/// Flat `key = value` configuration with `#` comments and dotted prefixes.
/// Unknown keys and type mismatches are rejected at set time.
class Config {
  public:
    static const std::vector<SchemaEntry>& schema();
    static std::string help_text();

    void load_file(const std::string& path);
    /// Parses `key = value` lines from a string (exposed for tests).
    void load_text(const std::string& text, const std::string& origin = "<inline>");
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<long> get_ints(const std::string& key) const;
    std::vector<double> get_reals(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

/// Builds the synthetic-city spec for `name` from city.<name>.* keys; the
/// per-city seed defaults to one derived from the global seed and the city's
/// position in the `cities` list.
CitySpec city_spec_from_config(const Config& config, const std::string& name);

}  // namespace gridpv
