#include "gridpv/phases.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "gridpv/onnx.hpp"
#include "gridpv/synthcity.hpp"
#include "gridpv/tiler.hpp"

namespace gridpv {

namespace fs = std::filesystem;
using nlohmann::json;

const char* approach_name(Approach a) {
    switch (a) {
        case Approach::BR_ML: return "br-ml";
        case Approach::BRG_VLAD_ML: return "brg-vlad";
        case Approach::BRG_FV_ML: return "brg-fv";
        case Approach::BRG_AVG_ML: return "brg-avg";
    }
    return "?";
}

Approach parse_approach(const std::string& s) {
    if (s == "br-ml" || s == "br") return Approach::BR_ML;
    if (s == "brg-vlad" || s == "brg-vlad-ml") return Approach::BRG_VLAD_ML;
    if (s == "brg-fv" || s == "brg-fv-ml") return Approach::BRG_FV_ML;
    if (s == "brg-avg" || s == "brg-avg-ml") return Approach::BRG_AVG_ML;
    throw Error("parse_approach", "unknown approach '" + s + "'");
}

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::P1: return "p1";
        case Phase::P2: return "p2";
        case Phase::P3: return "p3";
    }
    return "?";
}

bool threshold_met(double weighted, double threshold) {
    return hundredths(round2(weighted)) >= hundredths(threshold);
}

void PipelineConfig::validate() const {
    if (threshold <= 0 || threshold > 1)
        throw Error("PipelineConfig", "threshold must lie in (0,1]");
    if (weight < 0 || weight > 1) throw Error("PipelineConfig", "weight must lie in [0,1]");
    if (families.empty()) throw Error("PipelineConfig", "no classifier families configured");
    if (classifier_grid().empty()) throw Error("PipelineConfig", "empty classifier grid");
    if (uses_tiles() && grid_sizes.empty())
        throw Error("PipelineConfig", "grid approaches need at least one grid size");
    if ((uses_codebook() || uses_gmm()) && k_values.empty())
        throw Error("PipelineConfig", "VLAD/FV approaches need at least one K");
    if (min_coverage < 0 || min_coverage > 1)
        throw Error("PipelineConfig", "min_coverage must lie in [0,1]");
    if (extractor.kind == ExtractorKind::PrecomputedFile && features_dir.empty())
        throw Error("PipelineConfig", "precomputed extractor needs features_dir");
}

std::vector<HyperparameterCombo> PipelineConfig::classifier_grid() const {
    std::vector<HyperparameterCombo> grid;
    for (ModelFamily family : families) {
        HyperparameterCombo combo;
        combo.family = family;
        switch (family) {
            case ModelFamily::LR:
                for (double c : lr_c)
                    for (const std::string& solver : lr_solvers) {
                        combo.c = c;
                        combo.solver_label = solver;
                        grid.push_back(combo);
                    }
                break;
            case ModelFamily::RF:
                for (int n : rf_n_estimators)
                    for (int depth : rf_max_depth) {
                        combo.n_estimators = n;
                        combo.max_depth =
                            depth > 0 ? std::optional<int>(depth) : std::nullopt;
                        grid.push_back(combo);
                    }
                break;
            case ModelFamily::SVC:
                for (double c : svc_c)
                    for (const std::string& kernel : svc_kernels) {
                        combo.c = c;
                        combo.kernel = kernel;
                        grid.push_back(combo);
                    }
                break;
        }
    }
    return grid;
}

PipelineConfig PipelineConfig::from_config(const Config& config) {
    PipelineConfig pc;
    pc.approach = parse_approach(config.get_string("approach"));

    std::string kind = config.get_string("extractor.kind");
    if (kind == "baseline") {
        pc.extractor.kind = ExtractorKind::Baseline;
    } else if (kind == "precomputed") {
        pc.extractor.kind = ExtractorKind::PrecomputedFile;
    } else if (kind == "onnx") {
        pc.extractor.kind = ExtractorKind::ExternalModel;
        pc.extractor.model_path = config.get_string("extractor.model");
    } else {
        throw Error("PipelineConfig", "unknown extractor.kind '" + kind + "'");
    }
    pc.extractor.input_size = int(config.get_int("extractor.input_size"));
    pc.features_dir = config.get_string("extractor.features");

    pc.grid_sizes.clear();
    for (long v : config.get_ints("grid.sizes")) pc.grid_sizes.push_back(int(v));
    pc.min_coverage = config.get_real("grid.min_coverage");
    pc.k_values.clear();
    for (long v : config.get_ints("encode.k")) pc.k_values.push_back(int(v));
    pc.encode.signed_sqrt = config.get_bool("encode.signed_sqrt");
    pc.encode.l2_normalize = config.get_bool("encode.l2");

    pc.families.clear();
    for (const std::string& f : config.get_strings("families"))
        pc.families.push_back(parse_family(f));
    pc.lr_c = config.get_reals("lr.c");
    pc.lr_solvers = config.get_strings("lr.solvers");
    pc.rf_n_estimators.clear();
    for (long v : config.get_ints("rf.n_estimators")) pc.rf_n_estimators.push_back(int(v));
    pc.rf_max_depth.clear();
    for (long v : config.get_ints("rf.max_depth")) pc.rf_max_depth.push_back(int(v));
    pc.svc_c = config.get_reals("svc.c");
    pc.svc_kernels = config.get_strings("svc.kernels");

    pc.threshold = config.get_real("threshold");
    pc.weight = config.get_real("weight");
    pc.seed = std::uint64_t(config.get_int("seed"));
    pc.jobs = int(config.get_int("jobs"));
    pc.balance = config.get_bool("balance");
    pc.validate();
    return pc;
}

// ---------------------------------------------------------------------------
// registry

const StepRecord* ModelRegistry::latest_with_models() const {
    for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        if (!it->models.empty()) return &*it;
    return nullptr;
}

const StoredModel* ModelRegistry::current_best() const {
    const StepRecord* step = latest_with_models();
    if (!step) return nullptr;
    if (step->best_index < 0 || step->best_index >= int(step->models.size()))
        throw Error("ModelRegistry", "best pointer does not reference a stored model");
    return &step->models[std::size_t(step->best_index)];
}

namespace {

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("ModelRegistry", "cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("ModelRegistry", "cannot read '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("ModelRegistry", path.string() + ": " + e.what());
    }
    return j;
}

std::string sniff_kind(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    if (!in || !std::getline(in, line)) return "";
    try {
        return json::parse(line).value("kind", "");
    } catch (const json::exception&) {
        return "";
    }
}

}  // namespace

void ModelRegistry::save(const std::string& dir) const {
    fs::create_directories(dir);
    for (const StepRecord& step : steps) {
        fs::path step_dir = fs::path(dir) / (std::to_string(step.index) + "_" + step.city);
        fs::create_directories(step_dir);

        json best;
        best["index"] = step.index;
        best["city"] = step.city;
        best["approach"] = approach_name(step.approach);
        best["stopped_phase"] = phase_name(step.stopped_phase);
        best["passed"] = step.passed;
        best["best_order"] = step.best_index;
        best["chosen"] = step.chosen ? step.chosen->to_json() : json(nullptr);
        best["report"] = render_json(step.final_report);
        best["seconds"] = {{"p1", step.p1_seconds}, {"p2", step.p2_seconds},
                           {"p3", step.p3_seconds}};
        best["models"] = step.models.size();
        write_json_file(step_dir / "best.json", best);

        for (std::size_t i = 0; i < step.models.size(); ++i) {
            const StoredModel& sm = step.models[i];
            fs::path model_dir = step_dir / approach_name(step.approach) / sm.combo.key();
            fs::create_directories(model_dir);
            save_model(sm.model, (model_dir / "model.bin").string());
            json meta;
            meta["order"] = i;
            meta["combo"] = sm.combo.to_json();
            meta["validation_weighted"] =
                sm.validation_weighted >= 0 ? json(sm.validation_weighted) : json(nullptr);
            meta["test_weighted"] = sm.test_weighted;
            meta["rounded_test"] = sm.rounded_test;
            meta["seconds"] = sm.seconds;
            write_json_file(model_dir / "meta.json", meta);
            if (sm.codebook) save_codebook(*sm.codebook, (model_dir / "codebook.bin").string());
            if (sm.gmm) save_gmm(*sm.gmm, (model_dir / "codebook.bin").string());
        }
    }
}

ModelRegistry ModelRegistry::load(const std::string& dir) {
    if (!fs::is_directory(dir)) throw Error("ModelRegistry", "no registry at '" + dir + "'");
    ModelRegistry registry;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        std::string name = entry.path().filename().string();
        std::size_t underscore = name.find('_');
        if (underscore == std::string::npos) continue;

        json best = read_json_file(entry.path() / "best.json");
        StepRecord step;
        step.index = best.at("index").get<int>();
        step.city = best.at("city").get<std::string>();
        step.approach = parse_approach(best.at("approach").get<std::string>());
        std::string phase = best.at("stopped_phase").get<std::string>();
        step.stopped_phase = phase == "p1" ? Phase::P1 : phase == "p2" ? Phase::P2 : Phase::P3;
        step.passed = best.at("passed").get<bool>();
        step.best_index = best.at("best_order").get<int>();
        if (!best.at("chosen").is_null())
            step.chosen = HyperparameterCombo::from_json(best["chosen"]);
        step.final_report = report_from_json(best.at("report"));
        step.p1_seconds = best.at("seconds").at("p1").get<double>();
        step.p2_seconds = best.at("seconds").at("p2").get<double>();
        step.p3_seconds = best.at("seconds").at("p3").get<double>();

        fs::path models_dir = entry.path() / approach_name(step.approach);
        if (fs::is_directory(models_dir)) {
            std::vector<std::pair<std::size_t, StoredModel>> loaded;
            for (const auto& model_entry : fs::directory_iterator(models_dir)) {
                if (!model_entry.is_directory()) continue;
                json meta = read_json_file(model_entry.path() / "meta.json");
                StoredModel sm;
                sm.combo = HyperparameterCombo::from_json(meta.at("combo"));
                sm.model = load_model((model_entry.path() / "model.bin").string());
                if (!meta.at("validation_weighted").is_null())
                    sm.validation_weighted = meta["validation_weighted"].get<double>();
                sm.test_weighted = meta.at("test_weighted").get<double>();
                sm.rounded_test = meta.at("rounded_test").get<double>();
                sm.seconds = meta.at("seconds").get<double>();
                fs::path codebook_path = model_entry.path() / "codebook.bin";
                if (fs::exists(codebook_path)) {
                    std::string kind = sniff_kind(codebook_path);
                    if (kind == "gmm")
                        sm.gmm = load_gmm(codebook_path.string());
                    else
                        sm.codebook = load_codebook(codebook_path.string());
                }
                loaded.emplace_back(meta.at("order").get<std::size_t>(), std::move(sm));
            }
            std::sort(loaded.begin(), loaded.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (auto& [order, sm] : loaded) step.models.push_back(std::move(sm));
        }
        registry.steps.push_back(std::move(step));
    }
    std::sort(registry.steps.begin(), registry.steps.end(),
              [](const StepRecord& a, const StepRecord& b) { return a.index < b.index; });
    return registry;
}

// ---------------------------------------------------------------------------
// runner

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= std::uint64_t(std::uint8_t(c));
        h *= 1099511628211ull;
    }
    return h;
}

std::string base_id(const std::string& id) {
    std::size_t pos = id.find("_aug");
    return pos == std::string::npos ? id : id.substr(0, pos);
}

}  // namespace

PhaseRunner::PhaseRunner(PipelineConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.jobs <= 0)
        config_.jobs = int(std::max(1u, std::thread::hardware_concurrency()));
}

void PhaseRunner::add_city(CityDataset city) {
    CityEntry entry;
    entry.data = std::move(city);

    if (config_.balance) {
        long n_with = 0, n_without = 0;
        for (const RooftopImage& roof : entry.data.train)
            (roof.label == Label::WithPV ? n_with : n_without) += 1;
        if (n_with > 0 && n_without > 0 && n_with != n_without &&
            config_.extractor.kind != ExtractorKind::PrecomputedFile) {
            CityDataset balanced;
            balanced.city_id = entry.data.city_id;
            balanced.train = entry.data.train;
            std::size_t original = balanced.train.size();
            balance_minority(balanced,
                             derive_seed(config_.seed, 0xba100 + cities_.size()));
            entry.train_copies.assign(
                std::make_move_iterator(balanced.train.begin() + std::ptrdiff_t(original)),
                std::make_move_iterator(balanced.train.end()));
        }
    }
    cities_.push_back(std::move(entry));
}

const std::map<std::string, LocalFeatureSet>& PhaseRunner::precomputed_city(
    const std::string& city_id) {
    auto it = precomputed_.find(city_id);
    if (it != precomputed_.end()) return it->second;
    std::string path = config_.features_dir + "/" + city_id + ".features";
    std::map<std::string, LocalFeatureSet> by_id;
    for (LocalFeatureSet& set : load_features(path)) by_id[set.rooftop_id] = std::move(set);
    return precomputed_.emplace(city_id, std::move(by_id)).first->second;
}

std::vector<LocalFeatureSet> extract_features(const std::vector<RooftopImage>& rooftops,
                                              const ExtractorSpec& spec, int grid,
                                              double min_coverage, int jobs) {
    std::vector<LocalFeatureSet> out(rooftops.size());

    auto extract_images = [&](std::vector<ImageU8> images) {
        if (spec.kind == ExtractorKind::Baseline) {
            std::vector<FeatureVector> vectors;
            vectors.reserve(images.size());
            for (const ImageU8& img : images) vectors.push_back(extract_baseline(img));
            return vectors;
        }
        return extract_external(images, spec);
    };

    parallel_chunks(rooftops.size(), 4, jobs,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const RooftopImage& roof = rooftops[i];
            std::vector<ImageU8> images;
            if (grid == 0) {
                int side = spec.input_size > 0 ? spec.input_size : 224;
                ImageU8 masked = roof.pixels;
                for (std::size_t p = 0; p < roof.valid_mask.size(); ++p)
                    if (!roof.valid_mask[p])
                        for (int c = 0; c < 3; ++c) masked.pixels[p * 3 + std::size_t(c)] = 0;
                images.push_back(resize_bilinear(masked, side, side));
            } else {
                for (GridTile& t : tile(roof, grid, min_coverage)) {
                    if (spec.input_size > 0 && spec.input_size != grid)
                        images.push_back(
                            resize_bilinear(t.pixels, spec.input_size, spec.input_size));
                    else
                        images.push_back(std::move(t.pixels));
                }
            }
            LocalFeatureSet set;
            set.rooftop_id = roof.rooftop_id;
            set.city_id = roof.city_id;
            set.vectors = extract_images(std::move(images));
            set.label = roof.label;
            out[i] = std::move(set);
        }
    });
    return out;
}

std::vector<LocalFeatureSet> PhaseRunner::extract_pool(
    const std::vector<RooftopImage>& rooftops, const std::string& city_id, int grid) {
    if (config_.extractor.kind == ExtractorKind::PrecomputedFile) {
        std::vector<LocalFeatureSet> out(rooftops.size());
        const auto& by_id = precomputed_city(city_id);
        for (std::size_t i = 0; i < rooftops.size(); ++i) {
            // augmented copies reuse their source rooftop's stored features
            auto it = by_id.find(base_id(rooftops[i].rooftop_id));
            if (it == by_id.end())
                throw Error("phases", "no precomputed features for rooftop '" +
                                          rooftops[i].rooftop_id + "'");
            LocalFeatureSet set = it->second;
            set.rooftop_id = rooftops[i].rooftop_id;
            set.label = rooftops[i].label;
            if (grid == 0 && set.vectors.size() != 1)
                throw Error("phases",
                            "whole-rooftop mode needs exactly one precomputed vector per "
                            "rooftop, got " +
                                std::to_string(set.vectors.size()));
            out[i] = std::move(set);
        }
        return out;
    }
    return extract_features(rooftops, config_.extractor, grid, config_.min_coverage,
                            config_.jobs);
}

const std::vector<LocalFeatureSet>& PhaseRunner::features_for(int city, Pool pool, int grid) {
    PoolKey key{city, pool, grid};
    auto it = feature_cache_.find(key);
    if (it != feature_cache_.end()) return it->second;

    const CityEntry& entry = cities_[std::size_t(city)];
    const std::vector<RooftopImage>* rooftops = nullptr;
    switch (pool) {
        case Pool::TrainRaw: rooftops = &entry.data.train; break;
        case Pool::TrainCopies: rooftops = &entry.train_copies; break;
        case Pool::Test: rooftops = &entry.data.test; break;
    }
    return feature_cache_
        .emplace(key, extract_pool(*rooftops, entry.data.city_id, grid))
        .first->second;
}

Vector PhaseRunner::encode_one(const LocalFeatureSet& set, const Codebook* codebook,
                               const GmmModel* gmm) const {
    switch (config_.approach) {
        case Approach::BR_ML: {
            const FeatureVector& v = set.vectors.front();
            Vector out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) out(Eigen::Index(i)) = v[i];
            return out;
        }
        case Approach::BRG_VLAD_ML:
            if (!codebook) throw Error("phases", "VLAD encoding without a codebook");
            return vlad_encode(*codebook, set, config_.encode).values;
        case Approach::BRG_FV_ML:
            if (!gmm) throw Error("phases", "Fisher encoding without a GMM");
            return fv_encode(*gmm, set, config_.encode).values;
        case Approach::BRG_AVG_ML:
            return avg_encode(set).values;
    }
    throw Error("phases", "unhandled approach");
}

Dataset2D PhaseRunner::train_dataset(int grid, const Codebook* codebook, const GmmModel* gmm,
                                     bool balanced) {
    std::vector<Vector> rows;
    Dataset2D d;
    for (int city = 0; city < int(cities_.size()); ++city) {
        for (Pool pool : {Pool::TrainRaw, Pool::TrainCopies}) {
            if (pool == Pool::TrainCopies && !balanced) continue;
            for (const LocalFeatureSet& set : features_for(city, pool, grid)) {
                if (!set.label)
                    throw Error("phases", "unlabeled rooftop '" + set.rooftop_id +
                                              "' in a training pool");
                rows.push_back(encode_one(set, codebook, gmm));
                d.y.push_back(*set.label == Label::WithPV ? 1 : 0);
                d.ids.push_back(set.rooftop_id);
                d.cities.push_back(set.city_id);
            }
        }
    }
    if (rows.empty()) throw Error("phases", "empty training data");
    d.x.resize(Eigen::Index(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d.x.cols())
            throw Error("phases", "inconsistent descriptor dimension in training pool");
        d.x.row(Eigen::Index(i)) = rows[i].transpose();
    }
    return d;
}

Dataset2D PhaseRunner::test_dataset(int grid, const Codebook* codebook, const GmmModel* gmm) {
    std::vector<Vector> rows;
    Dataset2D d;
    for (int city = 0; city < int(cities_.size()); ++city) {
        for (const LocalFeatureSet& set : features_for(city, Pool::Test, grid)) {
            if (!set.label)
                throw Error("phases",
                            "unlabeled rooftop '" + set.rooftop_id + "' in a test pool");
            rows.push_back(encode_one(set, codebook, gmm));
            d.y.push_back(*set.label == Label::WithPV ? 1 : 0);
            d.ids.push_back(set.rooftop_id);
            d.cities.push_back(set.city_id);
        }
    }
    if (rows.empty()) throw Error("phases", "empty test data");
    d.x.resize(Eigen::Index(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d.x.cols())
            throw Error("phases", "inconsistent descriptor dimension in test pool");
        d.x.row(Eigen::Index(i)) = rows[i].transpose();
    }
    return d;
}

Matrix PhaseRunner::gather_train_vectors(int grid, std::uint64_t subsample_seed) {
    std::vector<const LocalFeatureSet*> sets;
    for (int city = 0; city < int(cities_.size()); ++city)
        for (Pool pool : {Pool::TrainRaw, Pool::TrainCopies}) {
            if (pool == Pool::TrainCopies && !config_.balance) continue;
            for (const LocalFeatureSet& set : features_for(city, pool, grid))
                sets.push_back(&set);
        }
    std::size_t total = 0;
    for (const LocalFeatureSet* set : sets) total += set->vectors.size();
    if (total == 0) throw Error("phases", "no local features in the training pool");

    std::size_t dim = sets.front()->vectors.front().size();
    Matrix all(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
    Eigen::Index row = 0;
    for (const LocalFeatureSet* set : sets)
        for (const FeatureVector& v : set->vectors) {
            for (std::size_t j = 0; j < dim; ++j) all(row, Eigen::Index(j)) = v[j];
            ++row;
        }

    constexpr std::size_t kCap = 100000;
    if (total <= kCap) return all;

    // seeded subsample without replacement
    Rng rng(subsample_seed);
    std::vector<std::size_t> index(total);
    for (std::size_t i = 0; i < total; ++i) index[i] = i;
    for (std::size_t i = 0; i < kCap; ++i) {
        std::size_t j = i + rng.uniform_int(std::uint64_t(total - i));
        std::swap(index[i], index[j]);
    }
    Matrix sub(static_cast<Eigen::Index>(kCap), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < kCap; ++i) sub.row(Eigen::Index(i)) = all.row(Eigen::Index(index[i]));
    return sub;
}

void PhaseRunner::assert_no_leakage() const {
    std::set<std::string> test_ids;
    for (const CityEntry& entry : cities_)
        for (const RooftopImage& roof : entry.data.test) test_ids.insert(roof.rooftop_id);
    for (const CityEntry& entry : cities_) {
        for (const RooftopImage& roof : entry.data.train)
            if (test_ids.count(base_id(roof.rooftop_id)))
                throw Error("phases", "train/test leakage: rooftop '" + roof.rooftop_id + "'");
        for (const RooftopImage& roof : entry.train_copies)
            if (test_ids.count(base_id(roof.rooftop_id)))
                throw Error("phases", "train/test leakage: rooftop '" + roof.rooftop_id + "'");
    }
}

bool PhaseRunner::meets_threshold(double rounded) const {
    return hundredths(rounded) >= hundredths(config_.threshold);
}

ScoreReport PhaseRunner::evaluate_stored(const StoredModel& stored, bool on_test) {
    auto start = std::chrono::steady_clock::now();
    int grid = stored.combo.grid_size.value_or(0);
    const Codebook* cb = stored.codebook ? &*stored.codebook : nullptr;
    const GmmModel* gm = stored.gmm ? &*stored.gmm : nullptr;

    Dataset2D data = on_test ? test_dataset(grid, cb, gm)
                             : train_dataset(grid, cb, gm, /*balanced=*/false);
    Predictions preds = predict(stored.model, data.x);
    return score(data.y, preds.labels, data.cities, seconds_since(start), config_.weight);
}

TrainedModel PhaseRunner::fit_combo(const HyperparameterCombo& combo, const Dataset2D& train) {
    ++counters_.classifier_fits;
    std::uint64_t seed =
        derive_seed(config_.seed, fnv1a(combo.key()) + 0x9e3779b9ull * registry_.steps.size());
    TrainedModel model;
    switch (combo.family) {
        case ModelFamily::LR: {
            auto it = std::find(config_.lr_solvers.begin(), config_.lr_solvers.end(),
                                combo.solver_label);
            int position = it == config_.lr_solvers.end()
                               ? 0
                               : int(it - config_.lr_solvers.begin());
            model = lr_fit(train, combo.c, solver_from_label(combo.solver_label, position), seed);
            break;
        }
        case ModelFamily::RF:
            model = rf_fit(train, combo.n_estimators, combo.max_depth, seed, config_.jobs);
            break;
        case ModelFamily::SVC:
            model = svm_fit(train, combo.c, combo.kernel, seed);
            break;
    }
    model.combo = combo;
    return model;
}

PhaseOutcome PhaseRunner::run_phase1() {
    auto start = std::chrono::steady_clock::now();
    if (cities_.empty()) throw Error("run_phase1", "no city data");
    const StoredModel* best = registry_.current_best();
    if (!best)
        throw Error("run_phase1",
                    "registry has no trained model yet (the first city goes straight to "
                    "Phase-3)");
    if (cities_.back().data.test.empty())
        throw Error("run_phase1", "city '" + cities_.back().data.city_id + "' has no test split");

    assert_no_leakage();
    ScoreReport report = evaluate_stored(*best, /*on_test=*/true);
    report.elapsed_seconds = seconds_since(start);

    PhaseOutcome outcome;
    outcome.phase = Phase::P1;
    outcome.report = report;
    outcome.stopped = meets_threshold(report.rounded);
    outcome.chosen_combo = best->combo;
    if (log)
        log("phase-1 " + cities_.back().data.city_id + ": weighted F1 " +
            std::to_string(report.weighted) + (outcome.stopped ? " (stop)" : " (continue)"));
    return outcome;
}

PhaseOutcome PhaseRunner::run_phase2() {
    auto start = std::chrono::steady_clock::now();
    StepRecord* prior = nullptr;
    for (auto it = registry_.steps.rbegin(); it != registry_.steps.rend(); ++it)
        if (!it->models.empty()) {
            prior = &*it;
            break;
        }
    if (!prior) throw Error("run_phase2", "prior step stored no models");

    assert_no_leakage();
    double best_val = -1;
    int best_index = -1;
    for (std::size_t i = 0; i < prior->models.size(); ++i) {
        ScoreReport val = evaluate_stored(prior->models[i], /*on_test=*/false);
        prior->models[i].validation_weighted = val.weighted;
        if (val.weighted > best_val) {
            best_val = val.weighted;
            best_index = int(i);
        }
    }

    const StoredModel& chosen = prior->models[std::size_t(best_index)];
    ScoreReport report = evaluate_stored(chosen, /*on_test=*/true);
    report.elapsed_seconds = seconds_since(start);

    PhaseOutcome outcome;
    outcome.phase = Phase::P2;
    outcome.report = report;
    outcome.stopped = meets_threshold(report.rounded);
    outcome.chosen_combo = chosen.combo;
    if (log)
        log("phase-2 " + cities_.back().data.city_id + ": best combo " + chosen.combo.key() +
            ", weighted F1 " + std::to_string(report.weighted) +
            (outcome.stopped ? " (stop)" : " (continue)"));
    return outcome;
}

PhaseOutcome PhaseRunner::run_phase3() {
    auto start = std::chrono::steady_clock::now();
    if (cities_.empty()) throw Error("run_phase3", "no city data");
    bool any_train = false;
    for (const CityEntry& entry : cities_) any_train |= !entry.data.train.empty();
    if (!any_train) throw Error("run_phase3", "empty training data");
    assert_no_leakage();

    std::vector<StoredModel> models;
    std::vector<ScoreReport> reports;
    std::string last_failure;

    auto run_block = [&](int grid, std::optional<int> k) {
        std::optional<Codebook> codebook;
        std::optional<GmmModel> gmm;
        try {
            if (config_.uses_codebook() || config_.uses_gmm()) {
                std::uint64_t fit_seed = derive_seed(
                    config_.seed, 0xcb00 + std::uint64_t(grid) * 131 +
                                      std::uint64_t(k.value_or(0)) +
                                      0x51edull * registry_.steps.size());
                Matrix vectors = gather_train_vectors(grid, derive_seed(fit_seed, 1));
                if (config_.uses_codebook()) {
                    codebook = kmeans_fit(vectors, *k, fit_seed);
                    ++counters_.codebook_fits;
                } else {
                    gmm = gmm_fit(vectors, *k, fit_seed);
                    ++counters_.gmm_fits;
                }
            }
        } catch (const std::exception& e) {
            last_failure = e.what();
            if (log) log(std::string("phase-3 block failed: ") + e.what());
            return;
        }

        const Codebook* cb = codebook ? &*codebook : nullptr;
        const GmmModel* gm = gmm ? &*gmm : nullptr;
        Dataset2D train, test;
        try {
            train = train_dataset(grid, cb, gm, config_.balance);
            test = test_dataset(grid, cb, gm);
        } catch (const std::exception& e) {
            last_failure = e.what();
            if (log) log(std::string("phase-3 block failed: ") + e.what());
            return;
        }

        for (const HyperparameterCombo& base : config_.classifier_grid()) {
            auto combo_start = std::chrono::steady_clock::now();
            HyperparameterCombo combo = base;
            if (config_.uses_tiles()) combo.grid_size = grid;
            combo.k = k;
            try {
                StoredModel sm;
                sm.combo = combo;
                sm.model = fit_combo(combo, train);
                sm.codebook = codebook;
                sm.gmm = gmm;
                Predictions preds = predict(sm.model, test.x);
                ScoreReport report =
                    score(test.y, preds.labels, test.cities, 0, config_.weight);
                report.elapsed_seconds = seconds_since(combo_start);
                sm.test_weighted = report.weighted;
                sm.rounded_test = report.rounded;
                sm.seconds = report.elapsed_seconds;
                models.push_back(std::move(sm));
                reports.push_back(std::move(report));
            } catch (const std::exception& e) {
                last_failure = e.what();
                if (log) log("phase-3 combo " + combo.key() + " failed: " + e.what());
            }
        }
    };

    if (!config_.uses_tiles()) {
        run_block(0, std::nullopt);
    } else if (config_.uses_codebook() || config_.uses_gmm()) {
        for (int grid : config_.grid_sizes)
            for (int k : config_.k_values) run_block(grid, k);
    } else {
        for (int grid : config_.grid_sizes) run_block(grid, std::nullopt);
    }

    if (models.empty())
        throw Error("run_phase3", "every grid combo failed" +
                                      (last_failure.empty() ? std::string()
                                                            : ": last error: " + last_failure));

    int best_index = 0;
    for (int i = 1; i < int(models.size()); ++i)
        if (models[std::size_t(i)].test_weighted >
            models[std::size_t(best_index)].test_weighted)
            best_index = i;

    ScoreReport final_report = reports[std::size_t(best_index)];
    final_report.elapsed_seconds = seconds_since(start);

    StepRecord step;
    step.index = int(registry_.steps.size());
    step.city = cities_.back().data.city_id;
    step.approach = config_.approach;
    step.models = std::move(models);
    step.best_index = best_index;
    step.chosen = step.models[std::size_t(best_index)].combo;
    step.stopped_phase = Phase::P3;
    step.passed = meets_threshold(final_report.rounded);
    step.final_report = final_report;
    step.p3_seconds = final_report.elapsed_seconds;
    registry_.steps.push_back(std::move(step));

    PhaseOutcome outcome;
    outcome.phase = Phase::P3;
    outcome.report = final_report;
    outcome.stopped = meets_threshold(final_report.rounded);
    outcome.chosen_combo = registry_.steps.back().chosen;
    if (log)
        log("phase-3 " + registry_.steps.back().city + ": best combo " +
            registry_.steps.back().chosen->key() + ", weighted F1 " +
            std::to_string(final_report.weighted) +
            (outcome.stopped ? " (stop)" : " (below threshold)"));
    return outcome;
}

StepSummary PhaseRunner::run_step(CityDataset city) {
    add_city(std::move(city));

    StepSummary summary;
    summary.city = cities_.back().data.city_id;

    double p1_seconds = 0, p2_seconds = 0;
    std::optional<PhaseOutcome> finished;
    Phase stopped_phase = Phase::P3;

    if (!registry_.steps.empty()) {
        PhaseOutcome o1 = run_phase1();
        summary.phases_run.push_back(Phase::P1);
        p1_seconds = o1.report.elapsed_seconds;
        if (o1.stopped) {
            finished = o1;
            stopped_phase = Phase::P1;
        } else {
            PhaseOutcome o2 = run_phase2();
            summary.phases_run.push_back(Phase::P2);
            p2_seconds = o2.report.elapsed_seconds;
            if (o2.stopped) {
                finished = o2;
                stopped_phase = Phase::P2;
            }
        }
    }

    if (!finished) {
        PhaseOutcome o3 = run_phase3();
        summary.phases_run.push_back(Phase::P3);
        StepRecord& step = registry_.steps.back();
        step.p1_seconds = p1_seconds;
        step.p2_seconds = p2_seconds;
        summary.stopped_phase = Phase::P3;
        summary.passed = o3.stopped;
        summary.report = o3.report;
        summary.minutes = (p1_seconds + p2_seconds + step.p3_seconds) / 60.0;
        return summary;
    }

    StepRecord step;
    step.index = int(registry_.steps.size());
    step.city = summary.city;
    step.approach = config_.approach;
    step.chosen = finished->chosen_combo;
    step.stopped_phase = stopped_phase;
    step.passed = true;
    step.final_report = finished->report;
    step.p1_seconds = p1_seconds;
    step.p2_seconds = p2_seconds;
    registry_.steps.push_back(step);

    summary.stopped_phase = stopped_phase;
    summary.passed = true;
    summary.report = finished->report;
    summary.minutes = (p1_seconds + p2_seconds) / 60.0;
    return summary;
}

PipelineReport PhaseRunner::run_pipeline(std::vector<CityDataset> cities) {
    if (!cities_.empty())
        throw Error("run_pipeline", "runner already holds city data; use a fresh runner");
    if (cities.empty()) throw Error("run_pipeline", "no cities");

    PipelineReport report;
    report.approach = config_.approach;
    report.threshold = config_.threshold;
    for (CityDataset& city : cities) {
        StepSummary summary = run_step(std::move(city));
        report.total_minutes += summary.minutes;
        report.all_passed = report.all_passed && summary.passed;
        report.steps.push_back(std::move(summary));
    }
    return report;
}

nlohmann::json PipelineReport::to_json() const {
    json steps_json = json::array();
    for (const StepSummary& step : steps) {
        json phases = json::array();
        for (Phase p : step.phases_run) phases.push_back(phase_name(p));
        steps_json.push_back({{"city", step.city},
                              {"phases", phases},
                              {"stopped_phase", phase_name(step.stopped_phase)},
                              {"passed", step.passed},
                              {"weighted_f1", step.report.weighted},
                              {"rounded", step.report.rounded},
                              {"minutes", std::round(step.minutes * 10) / 10},
                              {"report", render_json(step.report)}});
    }
    return json{{"approach", approach_name(approach)},
                {"threshold", threshold},
                {"steps", steps_json},
                {"total_minutes", std::round(total_minutes * 10) / 10},
                {"all_passed", all_passed}};
}

std::string PipelineReport::to_text() const {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "approach %s (threshold %.2f)\n", approach_name(approach),
                  threshold);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-4s %-16s %-6s %-8s %-8s %s\n", "step", "city", "phase",
                  "f1", "rounded", "minutes");
    out += buf;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const StepSummary& s = steps[i];
        std::snprintf(buf, sizeof(buf), "%-4zu %-16s %-6s %-8.4f %-8.2f %.1f%s\n", i,
                      s.city.c_str(), phase_name(s.stopped_phase), s.report.weighted,
                      s.report.rounded, s.minutes, s.passed ? "" : "  [below threshold]");
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "total %.1f minutes, %s\n", total_minutes,
                  all_passed ? "all steps passed" : "threshold unmet");
    out += buf;
    return out;
}

}  // namespace gridpv
