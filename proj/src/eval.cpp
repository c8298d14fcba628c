#include "gridpv/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "gridpv/common.hpp"

namespace gridpv {

void ConfusionCounts::add(int truth, int predicted) {
    if (truth == 1 && predicted == 1)
        ++tp;
    else if (truth == 0 && predicted == 1)
        ++fp;
    else if (truth == 1 && predicted == 0)
        ++fn;
    else
        ++tn;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
}

double f1_score(const ConfusionCounts& c) {
    double denom = 2.0 * double(c.tp) + double(c.fp) + double(c.fn);
    if (denom == 0) return 0.0;
    return 2.0 * double(c.tp) / denom;
}

double weighted_f1(const std::vector<double>& city_f1, double global_f1, double weight) {
    if (city_f1.empty()) throw Error("weighted_f1", "no per-city scores");
    double mean = 0;
    for (double v : city_f1) mean += v;
    mean /= double(city_f1.size());
    return weight * mean + (1.0 - weight) * global_f1;
}

ConfusionCounts ScoreReport::pooled() const {
    ConfusionCounts total;
    for (const auto& [city, counts] : per_city) total += counts;
    return total;
}

ScoreReport score(const std::vector<int>& truth, const std::vector<int>& predicted,
                  const std::vector<std::string>& cities, double elapsed_seconds, double weight) {
    if (truth.size() != predicted.size() || truth.size() != cities.size())
        throw Error("score", "truth/prediction/city length mismatch");
    if (truth.empty()) throw Error("score", "nothing to score");

    ScoreReport report;
    report.elapsed_seconds = elapsed_seconds;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (report.per_city.find(cities[i]) == report.per_city.end())
            report.city_order.push_back(cities[i]);
        report.per_city[cities[i]].add(truth[i], predicted[i]);
    }

    std::vector<double> city_f1;
    for (const std::string& city : report.city_order)
        city_f1.push_back(f1_score(report.per_city.at(city)));
    report.global_f1 = f1_score(report.pooled());
    report.weighted = weighted_f1(city_f1, report.global_f1, weight);
    report.rounded = round2(report.weighted);
    return report;
}

std::string render_text(const ScoreReport& report) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %6s %6s %6s %6s %8s\n", "city", "tp", "fp", "fn", "tn",
                  "f1");
    out += buf;
    for (const std::string& city : report.city_order) {
        const ConfusionCounts& c = report.per_city.at(city);
        std::snprintf(buf, sizeof(buf), "%-16s %6ld %6ld %6ld %6ld %8.4f\n", city.c_str(), c.tp,
                      c.fp, c.fn, c.tn, f1_score(c));
        out += buf;
    }
    ConfusionCounts pooled = report.pooled();
    std::snprintf(buf, sizeof(buf), "%-16s %6ld %6ld %6ld %6ld %8.4f\n", "(all)", pooled.tp,
                  pooled.fp, pooled.fn, pooled.tn, report.global_f1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "weighted F1 %.4f (rounded %.2f), %.1f s\n", report.weighted,
                  report.rounded, report.elapsed_seconds);
    out += buf;
    return out;
}

nlohmann::json render_json(const ScoreReport& report) {
    nlohmann::json per_city = nlohmann::json::object();
    for (const std::string& city : report.city_order) {
        const ConfusionCounts& c = report.per_city.at(city);
        per_city[city] = {{"tp", c.tp}, {"fp", c.fp},
                          {"fn", c.fn}, {"tn", c.tn},
                          {"f1", f1_score(c)}};
    }
    return nlohmann::json{{"per_city", per_city},
                          {"global_f1", report.global_f1},
                          {"weighted_f1", report.weighted},
                          {"rounded", report.rounded},
                          {"elapsed_seconds", report.elapsed_seconds}};
}

ScoreReport report_from_json(const nlohmann::json& j) {
    ScoreReport report;
    for (const auto& [city, counts] : j.at("per_city").items()) {
        ConfusionCounts c;
        c.tp = counts.at("tp").get<long>();
        c.fp = counts.at("fp").get<long>();
        c.fn = counts.at("fn").get<long>();
        c.tn = counts.at("tn").get<long>();
        report.city_order.push_back(city);
        report.per_city[city] = c;
    }
    report.global_f1 = j.at("global_f1").get<double>();
    report.weighted = j.at("weighted_f1").get<double>();
    report.rounded = j.at("rounded").get<double>();
    report.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    return report;
}

}  // namespace gridpv
