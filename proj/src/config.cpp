#include "gridpv/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gridpv {

const std::vector<SchemaEntry>& Config::schema() {
    static const std::vector<SchemaEntry> entries = {
        {"cities", "strings", "", "city names in arrival order"},
        {"approach", "string", "brg-vlad", "br-ml | brg-vlad | brg-fv | brg-avg"},
        {"seed", "int", "7", "master random seed"},
        {"jobs", "int", "0", "worker threads (0 = all cores)"},
        {"threshold", "real", "0.90", "weighted-F1 stopping threshold"},
        {"weight", "real", "0.5", "weight of the mean city F1 vs the global F1"},
        {"balance", "bool", "true", "augment minority-class training rooftops"},
        {"data", "string", "data", "prepared dataset root"},
        {"registry", "string", "registry", "model registry directory"},
        {"grid.sizes", "ints", "64,96,128", "candidate grid tile sizes (pixels)"},
        {"grid.min_coverage", "real", "0.5", "minimum footprint coverage to keep a tile"},
        {"encode.k", "ints", "2,3,4", "candidate codebook sizes"},
        {"encode.signed_sqrt", "bool", "true", "signed square root on encoded descriptors"},
        {"encode.l2", "bool", "true", "global L2 normalization on encoded descriptors"},
        {"extractor.kind", "string", "baseline", "baseline | precomputed | onnx"},
        {"extractor.input_size", "int", "0",
         "side images are resized to before extraction (0 = native tiles, 224 whole rooftops)"},
        {"extractor.model", "string", "", "model file for extractor.kind = onnx"},
        {"extractor.features", "string", "",
         "directory of <city>.features files for extractor.kind = precomputed"},
        {"families", "strings", "lr,rf,svc", "classifier families in the search grid"},
        {"lr.c", "reals", "0.01,0.1,1,10", "logistic-regression C values"},
        {"lr.solvers", "strings", "liblinear,lbfgs", "logistic-regression solver labels"},
        {"rf.n_estimators", "ints", "50,100,200", "random-forest tree counts"},
        {"rf.max_depth", "ints", "0,10,20", "random-forest depth limits (0 = unlimited)"},
        {"svc.c", "reals", "0.1,1,10", "SVC C values"},
        {"svc.kernels", "strings", "linear,rbf", "SVC kernels"},
        {"city.*.n_with_pv", "int", "0", "rooftops with panels"},
        {"city.*.n_no_pv", "int", "0", "rooftops without panels"},
        {"city.*.hue_min", "real", "15", "roof hue range start (degrees)"},
        {"city.*.hue_max", "real", "40", "roof hue range end (degrees)"},
        {"city.*.texture_scale", "real", "16", "pixels per roof texture cell"},
        {"city.*.panel_count_min", "int", "1", "minimum panels per positive rooftop"},
        {"city.*.panel_count_max", "int", "3", "maximum panels per positive rooftop"},
        {"city.*.panel_cell", "int", "6", "panel cell pitch (pixels)"},
        {"city.*.noise_sigma", "real", "4", "pixel noise sigma"},
        {"city.*.size_min", "int", "96", "minimum rooftop side (pixels)"},
        {"city.*.size_max", "int", "160", "maximum rooftop side (pixels)"},
        {"city.*.train_fraction", "real", "0.7", "train share of the stratified split"},
        {"city.*.seed", "int", "-1", "per-city seed (-1 = derive from the master seed)"},
    };
    return entries;
}

namespace {

// wildcard segment match for city.*.field
bool key_matches(const std::string& pattern, const std::string& key) {
    if (pattern == key) return true;
    std::size_t star = pattern.find('*');
    if (star == std::string::npos) return false;
    std::string prefix = pattern.substr(0, star);
    std::string suffix = pattern.substr(star + 1);
    if (key.size() < prefix.size() + suffix.size()) return false;
    if (key.compare(0, prefix.size(), prefix) != 0) return false;
    if (key.compare(key.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
    std::string middle = key.substr(prefix.size(), key.size() - prefix.size() - suffix.size());
    return !middle.empty() && middle.find('.') == std::string::npos;
}

const SchemaEntry* find_entry(const std::string& key) {
    for (const SchemaEntry& entry : Config::schema())
        if (key_matches(entry.key, key)) return &entry;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

long parse_int(const std::string& value, const std::string& key) {
    char* end = nullptr;
    long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0')
        throw Error("config", "key '" + key + "': '" + value + "' is not an integer");
    return v;
}

double parse_real(const std::string& value, const std::string& key) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw Error("config", "key '" + key + "': '" + value + "' is not a number");
    return v;
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw Error("config", "key '" + key + "': '" + value + "' is not a boolean");
}

void check_type(const SchemaEntry& entry, const std::string& key, const std::string& value) {
    std::string type = entry.type;
    if (type == "string" || type == "strings") return;
    if (type == "int") {
        parse_int(value, key);
    } else if (type == "real") {
        parse_real(value, key);
    } else if (type == "bool") {
        parse_bool(value, key);
    } else if (type == "ints") {
        for (const std::string& item : split_list(value)) parse_int(item, key);
    } else if (type == "reals") {
        for (const std::string& item : split_list(value)) parse_real(item, key);
    }
}

}  // namespace

std::string Config::help_text() {
    std::string out = "configuration keys (key = value, '#' comments):\n";
    for (const SchemaEntry& entry : schema()) {
        char line[192];
        std::string key_type = std::string(entry.key) + " <" + entry.type + ">";
        std::snprintf(line, sizeof(line), "  %-34s %s", key_type.c_str(), entry.description);
        out += line;
        if (entry.default_value[0] != '\0')
            out += std::string(" [") + entry.default_value + "]";
        out += "\n";
    }
    return out;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config", "cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    load_text(buffer.str(), path);
}

void Config::load_text(const std::string& text, const std::string& origin) {
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config", origin + ":" + std::to_string(line_no) +
                                      ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            set(key, value);
        } catch (const Error& e) {
            throw Error("config",
                        origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void Config::set(const std::string& key, const std::string& value) {
    const SchemaEntry* entry = find_entry(key);
    if (!entry) throw Error("config", "unknown key '" + key + "'");
    check_type(*entry, key, value);
    values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    const SchemaEntry* entry = find_entry(key);
    if (!entry) throw Error("config", "unknown key '" + key + "'");
    return entry->default_value;
}

long Config::get_int(const std::string& key) const { return parse_int(get_string(key), key); }

double Config::get_real(const std::string& key) const { return parse_real(get_string(key), key); }

bool Config::get_bool(const std::string& key) const { return parse_bool(get_string(key), key); }

std::vector<long> Config::get_ints(const std::string& key) const {
    std::vector<long> out;
    for (const std::string& item : split_list(get_string(key))) out.push_back(parse_int(item, key));
    return out;
}

std::vector<double> Config::get_reals(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split_list(get_string(key)))
        out.push_back(parse_real(item, key));
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key) const {
    return split_list(get_string(key));
}

CitySpec city_spec_from_config(const Config& config, const std::string& name) {
    auto key = [&](const char* field) { return "city." + name + "." + field; };
    CitySpec spec;
    spec.name = name;
    spec.n_with_pv = int(config.get_int(key("n_with_pv")));
    spec.n_no_pv = int(config.get_int(key("n_no_pv")));
    spec.hue_min = config.get_real(key("hue_min"));
    spec.hue_max = config.get_real(key("hue_max"));
    spec.texture_scale = config.get_real(key("texture_scale"));
    spec.panel_count_min = int(config.get_int(key("panel_count_min")));
    spec.panel_count_max = int(config.get_int(key("panel_count_max")));
    spec.panel_cell = int(config.get_int(key("panel_cell")));
    spec.noise_sigma = config.get_real(key("noise_sigma"));
    spec.size_min = int(config.get_int(key("size_min")));
    spec.size_max = int(config.get_int(key("size_max")));
    spec.train_fraction = config.get_real(key("train_fraction"));

    long seed = config.get_int(key("seed"));
    if (seed >= 0) {
        spec.seed = std::uint64_t(seed);
    } else {
        std::vector<std::string> cities = config.get_strings("cities");
        auto it = std::find(cities.begin(), cities.end(), name);
        std::uint64_t position = it == cities.end()
                                     ? std::uint64_t(std::hash<std::string>{}(name))
                                     : std::uint64_t(it - cities.begin());
        spec.seed = derive_seed(std::uint64_t(config.get_int("seed")), position + 1);
    }
    return spec;
}

}  // namespace gridpv
