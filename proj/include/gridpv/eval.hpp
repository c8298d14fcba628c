#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace gridpv {

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;

    void add(int truth, int predicted);
    ConfusionCounts& operator+=(const ConfusionCounts& other);
};

/// F1 of the positive (with_pv) class; 0 when the denominator vanishes.
double f1_score(const ConfusionCounts& c);

/// weight * mean(per-city F1) + (1 - weight) * F1 over the pooled counts.
double weighted_f1(const std::vector<double>& city_f1, double global_f1, double weight = 0.5);

struct ScoreReport {
    // insertion-ordered city names alongside the map for stable rendering
    std::vector<std::string> city_order;
    std::map<std::string, ConfusionCounts> per_city;
    double global_f1 = 0;
    double weighted = 0;
    double rounded = 0;  // half away from zero, 2 decimals
    double elapsed_seconds = 0;

    ConfusionCounts pooled() const;
};

ScoreReport score(const std::vector<int>& truth, const std::vector<int>& predicted,
                  const std::vector<std::string>& cities, double elapsed_seconds = 0,
                  double weight = 0.5);

std::string render_text(const ScoreReport& report);
nlohmann::json render_json(const ScoreReport& report);

/// Inverse of render_json (cities come back in alphabetical order).
ScoreReport report_from_json(const nlohmann::json& j);

}  // namespace gridpv
