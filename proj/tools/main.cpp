// gridpv command-line front end. Every subcommand reads its settings from
// the shared config schema (defaults < --config file < flags) and prints a
// JSON result; progress and diagnostics go to standard error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridpv/classify.hpp"
#include "gridpv/config.hpp"
#include "gridpv/dataset.hpp"
#include "gridpv/encoding.hpp"
#include "gridpv/eval.hpp"
#include "gridpv/features.hpp"
#include "gridpv/geodata.hpp"
#include "gridpv/phases.hpp"
#include "gridpv/png_io.hpp"
#include "gridpv/synthcity.hpp"
#include "gridpv/tiler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridpv;

namespace {

int g_verbosity = 0;

void log_info(const std::string& msg) { std::cerr << "[gridpv] " << msg << "\n"; }

void log_debug(const std::string& msg) {
    if (g_verbosity > 0) std::cerr << "[gridpv] " << msg << "\n";
}

// key=value overrides collected from typed flags and --set, applied on top
// of the config file in command-line order
struct ConfigArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    Config build() const {
        Config cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& [key, value] : overrides) cfg.set(key, value);
        return cfg;
    }
};

// registers a flag whose value lands in the config under `key`
void bind_key(CLI::App* sub, ConfigArgs* args, const std::string& flag, const std::string& key,
              const std::string& description) {
    sub->add_option_function<std::string>(
        flag, [args, key](const std::string& value) { args->overrides.emplace_back(key, value); },
        description);
}

void add_common_options(CLI::App* sub, ConfigArgs* args) {
    sub->fallthrough();
    sub->add_option("--config", args->config_path, "Config file (flat key = value lines)");
    sub->add_option_function<std::vector<std::string>>(
        "--set",
        [args](const std::vector<std::string>& items) {
            for (const std::string& item : items) {
                std::size_t eq = item.find('=');
                if (eq == std::string::npos)
                    throw CLI::ValidationError("--set", "expected key=value, got '" + item + "'");
                args->overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
            }
        },
        "Override any config key (key=value, repeatable)");
    bind_key(sub, args, "--seed", "seed", "Master random seed");
    bind_key(sub, args, "--jobs", "jobs", "Worker threads (0 = all cores)");
    sub->add_flag("-v,--verbose", g_verbosity, "More progress detail on standard error");
    sub->footer("Config keys:\n" + Config::help_text());
}

void emit_json(const json& j, const std::string& out_path) {
    std::string text = j.dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw gridpv::Error("cli.emit", "cannot write '" + out_path + "'");
    out << text;
    log_debug("wrote " + out_path);
}

// two-column CSV (header validated, values split on the first comma)
std::map<std::string, std::string> read_pair_csv(const std::string& path,
                                                 const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw gridpv::Error("cli.ingest", "cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != expected_header)
        throw gridpv::Error("cli.ingest",
                            path + ": expected header '" + expected_header + "'");
    std::map<std::string, std::string> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw gridpv::Error("cli.ingest", path + ": malformed row '" + line + "'");
        rows[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return rows;
}

Matrix stack_vectors(const std::vector<LocalFeatureSet>& sets) {
    std::size_t total = 0;
    for (const LocalFeatureSet& set : sets) total += set.vectors.size();
    if (total == 0) throw gridpv::Error("cli.encode", "feature file holds no vectors");
    std::size_t dim = sets.front().vectors.front().size();
    Matrix m(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
    Eigen::Index row = 0;
    for (const LocalFeatureSet& set : sets)
        for (const FeatureVector& v : set.vectors) {
            for (std::size_t j = 0; j < dim; ++j) m(row, Eigen::Index(j)) = v[j];
            ++row;
        }
    return m;
}

// ---------------------------------------------------------------------------
// subcommands

struct IngestArgs {
    ConfigArgs config;
    std::string raster, footprints, labels, splits, city, out;
    double train_frac = 0.7;
};

int run_ingest(const IngestArgs& a) {
    Config cfg = a.config.build();
    GeoRaster raster = load_raster(a.raster);
    FootprintSet footprints = load_footprints(a.footprints);
    auto label_rows = read_pair_csv(a.labels, "rooftop_id,label");

    std::vector<RooftopImage> rooftops;
    int skipped = 0;
    for (const FootprintEntry& entry : footprints.entries) {
        RooftopImage roof;
        try {
            roof = clip_rooftop(raster, entry);
        } catch (const gridpv::Error& e) {
            log_info("skipping '" + entry.rooftop_id + "': " + e.what());
            ++skipped;
            continue;
        }
        roof.city_id = a.city;
        auto it = label_rows.find(entry.rooftop_id);
        if (it == label_rows.end())
            throw gridpv::Error("cli.ingest", "no label for rooftop '" + entry.rooftop_id + "'");
        roof.label = parse_label(it->second);
        rooftops.push_back(std::move(roof));
    }
    if (rooftops.empty()) throw gridpv::Error("cli.ingest", "no rooftop intersects the raster");

    std::vector<std::string> ids;
    std::vector<Label> labels;
    for (const RooftopImage& roof : rooftops) {
        ids.push_back(roof.rooftop_id);
        labels.push_back(*roof.label);
    }

    std::vector<Split> splits;
    if (!a.splits.empty()) {
        auto split_rows = read_pair_csv(a.splits, "rooftop_id,split");
        for (const std::string& id : ids) {
            auto it = split_rows.find(id);
            if (it == split_rows.end())
                throw gridpv::Error("cli.ingest", "no split for rooftop '" + id + "'");
            splits.push_back(parse_split(it->second));
        }
    } else {
        splits = stratified_split(labels, a.train_frac,
                                  std::uint64_t(cfg.get_int("seed")));
    }

    for (const RooftopImage& roof : rooftops) write_rooftop(a.out, a.city, roof);
    write_city_index(a.out, a.city, ids, labels, splits);

    long train = 0, with_pv = 0;
    for (Split s : splits) train += (s == Split::Train);
    for (Label l : labels) with_pv += (l == Label::WithPV);
    emit_json(json{{"city", a.city},
                   {"rooftops", rooftops.size()},
                   {"skipped", skipped},
                   {"with_pv", with_pv},
                   {"no_pv", long(labels.size()) - with_pv},
                   {"train", train},
                   {"test", long(splits.size()) - train}},
              "");
    return 0;
}

struct TileArgs {
    ConfigArgs config;
    std::string city, rooftop, out;
    int grid = 64;
};

int run_tile(const TileArgs& a) {
    Config cfg = a.config.build();
    CityDataset city = load_city(cfg.get_string("data"), a.city);
    const RooftopImage* roof = nullptr;
    for (const auto* pool : {&city.train, &city.test})
        for (const RooftopImage& r : *pool)
            if (r.rooftop_id == a.rooftop) roof = &r;
    if (!roof)
        throw gridpv::Error("cli.tile",
                            "no rooftop '" + a.rooftop + "' in city '" + a.city + "'");

    std::vector<GridTile> tiles = tile(*roof, a.grid, cfg.get_real("grid.min_coverage"));
    fs::create_directories(a.out);
    json rows = json::array();
    for (const GridTile& t : tiles) {
        char name[128];
        std::snprintf(name, sizeof(name), "%s_r%02d_c%02d.png", a.rooftop.c_str(), t.row,
                      t.col);
        write_png((fs::path(a.out) / name).string(), t.pixels);
        rows.push_back({{"row", t.row}, {"col", t.col}, {"coverage", t.coverage}});
    }
    emit_json(json{{"rooftop", a.rooftop}, {"grid", a.grid}, {"tiles", rows}}, "");
    return 0;
}

struct ExtractArgs {
    ConfigArgs config;
    std::string city, split = "all", out;
    int grid = 0;
};

int run_extract(const ExtractArgs& a) {
    Config cfg = a.config.build();
    PipelineConfig pc = PipelineConfig::from_config(cfg);
    if (pc.extractor.kind == ExtractorKind::PrecomputedFile)
        throw gridpv::Error("cli.extract",
                            "extractor.kind = precomputed has nothing to extract from");

    CityDataset city = load_city(cfg.get_string("data"), a.city);
    std::vector<RooftopImage> pool;
    if (a.split == "train" || a.split == "all")
        pool.insert(pool.end(), city.train.begin(), city.train.end());
    if (a.split == "test" || a.split == "all")
        pool.insert(pool.end(), city.test.begin(), city.test.end());
    if (a.split != "train" && a.split != "test" && a.split != "all")
        throw gridpv::Error("cli.extract", "split must be train, test or all");
    if (pool.empty()) throw gridpv::Error("cli.extract", "empty split");

    auto sets = extract_features(pool, pc.extractor, a.grid, pc.min_coverage, pc.jobs);
    save_features(sets, a.out, a.city, pc.extractor.id());

    std::size_t vectors = 0;
    for (const auto& set : sets) vectors += set.vectors.size();
    emit_json(json{{"city", a.city},
                   {"split", a.split},
                   {"grid", a.grid},
                   {"rooftops", sets.size()},
                   {"vectors", vectors},
                   {"dim", sets.front().vectors.front().size()},
                   {"file", a.out}},
              "");
    return 0;
}

struct EncodeArgs {
    ConfigArgs config;
    std::string features, method, codebook_out, codebook_in, out;
    int k = 3;
};

int run_encode(const EncodeArgs& a) {
    Config cfg = a.config.build();
    auto sets = load_features(a.features);
    if (sets.empty()) throw gridpv::Error("cli.encode", "feature file holds no rooftops");

    EncodeOptions options;
    options.signed_sqrt = cfg.get_bool("encode.signed_sqrt");
    options.l2_normalize = cfg.get_bool("encode.l2");
    std::uint64_t seed = std::uint64_t(cfg.get_int("seed"));

    std::optional<Codebook> codebook;
    std::optional<GmmModel> gmm;
    json fit_info;
    if (a.method == "vlad") {
        if (!a.codebook_in.empty()) {
            codebook = load_codebook(a.codebook_in);
        } else {
            codebook = kmeans_fit(stack_vectors(sets), a.k, seed);
            fit_info["inertia"] = codebook->inertia;
        }
        if (!a.codebook_out.empty()) save_codebook(*codebook, a.codebook_out);
    } else if (a.method == "fv") {
        if (!a.codebook_in.empty()) {
            gmm = load_gmm(a.codebook_in);
        } else {
            gmm = gmm_fit(stack_vectors(sets), a.k, seed);
            fit_info["loglik"] = gmm->loglik_history.back();
        }
        if (!a.codebook_out.empty()) save_gmm(*gmm, a.codebook_out);
    } else if (a.method != "avg") {
        throw gridpv::Error("cli.encode", "method must be vlad, fv or avg");
    }

    std::vector<LocalFeatureSet> encoded;
    for (const LocalFeatureSet& set : sets) {
        GlobalDescriptor d;
        if (codebook)
            d = vlad_encode(*codebook, set, options);
        else if (gmm)
            d = fv_encode(*gmm, set, options);
        else
            d = avg_encode(set);
        LocalFeatureSet out_set;
        out_set.rooftop_id = set.rooftop_id;
        out_set.city_id = set.city_id;
        out_set.label = set.label;
        FeatureVector v(std::size_t(d.values.size()));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(d.values(Eigen::Index(i)));
        out_set.vectors.push_back(std::move(v));
        encoded.push_back(std::move(out_set));
    }
    save_features(encoded, a.out, sets.front().city_id,
                  a.method + (a.method == "avg" ? "" : "-k" + std::to_string(a.k)));

    json result{{"method", a.method},
                {"rooftops", encoded.size()},
                {"dim", encoded.front().vectors.front().size()},
                {"file", a.out}};
    if (a.method != "avg") result["k"] = a.k;
    if (!fit_info.empty()) result["fit"] = fit_info;
    emit_json(result, "");
    return 0;
}

struct TrainArgs {
    ConfigArgs config;
    std::string x, family, solver = "lbfgs", kernel = "linear", out;
    double c = 1.0;
    int n_estimators = 100;
    int max_depth = 0;
};

int run_train(const TrainArgs& a) {
    Config cfg = a.config.build();
    auto sets = load_features(a.x);
    Dataset2D data;
    std::vector<Vector> rows;
    for (const LocalFeatureSet& set : sets) {
        if (set.vectors.size() != 1)
            throw gridpv::Error("cli.train", "rooftop '" + set.rooftop_id +
                                                 "' holds " +
                                                 std::to_string(set.vectors.size()) +
                                                 " vectors; train expects one descriptor each");
        if (!set.label)
            throw gridpv::Error("cli.train", "rooftop '" + set.rooftop_id + "' is unlabeled");
        const FeatureVector& v = set.vectors.front();
        Vector row(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) row(Eigen::Index(i)) = v[i];
        rows.push_back(std::move(row));
        data.y.push_back(*set.label == Label::WithPV ? 1 : 0);
        data.ids.push_back(set.rooftop_id);
        data.cities.push_back(set.city_id);
    }
    if (rows.empty()) throw gridpv::Error("cli.train", "no training rows");
    data.x.resize(Eigen::Index(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        data.x.row(Eigen::Index(i)) = rows[i].transpose();

    std::uint64_t seed = std::uint64_t(cfg.get_int("seed"));
    auto start = std::chrono::steady_clock::now();
    TrainedModel model;
    HyperparameterCombo combo;
    combo.family = parse_family(a.family);
    switch (combo.family) {
        case ModelFamily::LR:
            combo.c = a.c;
            combo.solver_label = a.solver;
            model = lr_fit(data, a.c, solver_from_label(a.solver, 0), seed);
            break;
        case ModelFamily::RF:
            combo.n_estimators = a.n_estimators;
            if (a.max_depth > 0) combo.max_depth = a.max_depth;
            model = rf_fit(data, a.n_estimators, combo.max_depth, seed,
                           int(cfg.get_int("jobs")));
            break;
        case ModelFamily::SVC:
            combo.c = a.c;
            combo.kernel = a.kernel;
            model = svm_fit(data, a.c, a.kernel, seed);
            break;
    }
    model.combo = combo;
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save_model(model, a.out);
    emit_json(json{{"family", family_name(combo.family)},
                   {"combo", combo.key()},
                   {"rows", data.size()},
                   {"dim", data.x.cols()},
                   {"seconds", seconds},
                   {"file", a.out}},
              "");
    return 0;
}

struct EvaluateArgs {
    ConfigArgs config;
    std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
    Config cfg = a.config.build();
    PipelineConfig pc = PipelineConfig::from_config(cfg);
    PhaseRunner runner(pc);
    if (g_verbosity > 0) runner.log = log_info;
    runner.registry() = ModelRegistry::load(cfg.get_string("registry"));

    const StepRecord* latest = runner.registry().latest_with_models();
    if (latest && latest->approach != pc.approach)
        throw gridpv::Error("cli.evaluate",
                            std::string("registry holds ") + approach_name(latest->approach) +
                                " models but approach is " + approach_name(pc.approach));

    std::string data_root = cfg.get_string("data");
    for (const std::string& name : cfg.get_strings("cities"))
        runner.add_city(load_city(data_root, name));
    if (runner.city_count() == 0) throw gridpv::Error("cli.evaluate", "no cities configured");

    PhaseOutcome outcome = runner.run_phase1();
    emit_json(render_json(outcome.report), a.out);
    return 0;
}

struct PhaseRunArgs {
    ConfigArgs config;
    std::string out;
};

int run_phase_run(const PhaseRunArgs& a) {
    Config cfg = a.config.build();
    PipelineConfig pc = PipelineConfig::from_config(cfg);
    std::string data_root = cfg.get_string("data");
    std::vector<std::string> names = cfg.get_strings("cities");
    if (names.empty()) throw gridpv::Error("cli.phase-run", "no cities configured");

    std::vector<CityDataset> cities;
    for (const std::string& name : names) {
        cities.push_back(load_city(data_root, name));
        log_debug("loaded " + name + ": " + std::to_string(cities.back().train.size()) +
                  " train / " + std::to_string(cities.back().test.size()) + " test");
    }

    PhaseRunner runner(pc);
    runner.log = log_info;
    PipelineReport report = runner.run_pipeline(std::move(cities));

    std::string registry_dir = cfg.get_string("registry");
    if (!registry_dir.empty()) {
        runner.registry().save(registry_dir);
        log_debug("registry saved to " + registry_dir);
    }
    std::cerr << report.to_text();
    emit_json(report.to_json(), a.out);
    return report.all_passed ? 0 : 2;
}

struct SynthGenArgs {
    ConfigArgs config;
    std::string spec, out;
};

int run_synth_gen(SynthGenArgs a) {
    if (!a.spec.empty()) a.config.config_path = a.spec;
    Config cfg = a.config.build();
    std::vector<std::string> names = cfg.get_strings("cities");
    if (names.empty()) throw gridpv::Error("cli.synth-gen", "spec lists no cities");

    json rows = json::array();
    for (const std::string& name : names) {
        CitySpec spec = city_spec_from_config(cfg, name);
        CityDataset city = generate_city(spec, a.out);
        long with_pv = 0;
        for (const auto* pool : {&city.train, &city.test})
            for (const RooftopImage& roof : *pool)
                with_pv += (roof.label == Label::WithPV);
        rows.push_back({{"city", name},
                        {"rooftops", city.train.size() + city.test.size()},
                        {"with_pv", with_pv},
                        {"train", city.train.size()},
                        {"test", city.test.size()},
                        {"seed", spec.seed}});
        log_debug("generated " + name);
    }
    emit_json(json{{"root", a.out}, {"cities", rows}}, "");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rooftop photovoltaic classification pipeline"};
    app.require_subcommand(1);

    IngestArgs ingest;
    CLI::App* sub = app.add_subcommand(
        "ingest", "Clip rooftops from a raster + footprints into the dataset layout");
    add_common_options(sub, &ingest.config);
    sub->add_option("--raster", ingest.raster, "Source PNG with a .wld/.pgw world file")
        ->required();
    sub->add_option("--footprints", ingest.footprints, "GeoJSON FeatureCollection")->required();
    sub->add_option("--labels", ingest.labels, "CSV rooftop_id,label (with_pv|no_pv)")
        ->required();
    sub->add_option("--splits", ingest.splits,
                    "CSV rooftop_id,split (train|test); omitted = seeded stratified split");
    sub->add_option("--train-frac", ingest.train_frac, "Train fraction for the seeded split");
    sub->add_option("--city", ingest.city, "City id for the output layout")->required();
    sub->add_option("--out", ingest.out, "Dataset root directory")->required();

    TileArgs tile_args;
    sub = app.add_subcommand("tile", "Cut one rooftop into grid tiles (PNG per tile)");
    add_common_options(sub, &tile_args.config);
    bind_key(sub, &tile_args.config, "--data", "data", "Dataset root");
    sub->add_option("--city", tile_args.city, "City id")->required();
    sub->add_option("--rooftop", tile_args.rooftop, "Rooftop id")->required();
    sub->add_option("--grid", tile_args.grid, "Tile side length in pixels");
    sub->add_option("--out", tile_args.out, "Output directory")->required();

    ExtractArgs extract;
    sub = app.add_subcommand("extract", "Compute local features for one city split");
    add_common_options(sub, &extract.config);
    bind_key(sub, &extract.config, "--data", "data", "Dataset root");
    sub->add_option("--city", extract.city, "City id")->required();
    sub->add_option("--split", extract.split, "train, test or all");
    sub->add_option("--grid", extract.grid, "Tile side length; 0 = whole rooftop");
    sub->add_option("--out", extract.out, "Output .features file")->required();

    EncodeArgs encode;
    sub = app.add_subcommand("encode", "Aggregate local features into global descriptors");
    add_common_options(sub, &encode.config);
    sub->add_option("--features", encode.features, "Input .features file")->required();
    sub->add_option("--method", encode.method, "vlad, fv or avg")->required();
    sub->add_option("--k", encode.k, "Codebook / mixture size");
    sub->add_option("--codebook", encode.codebook_out, "Write the fitted codebook here");
    sub->add_option("--load-codebook", encode.codebook_in,
                    "Reuse a saved codebook instead of fitting");
    sub->add_option("--out", encode.out, "Output .features file of descriptors")->required();

    TrainArgs train;
    sub = app.add_subcommand("train", "Fit one classifier on encoded descriptors");
    add_common_options(sub, &train.config);
    sub->add_option("--x", train.x, "Descriptor .features file with labels")->required();
    sub->add_option("--family", train.family, "lr, rf or svc")->required();
    sub->add_option("--c", train.c, "Regularization strength (lr, svc)");
    sub->add_option("--solver", train.solver, "LR solver label");
    sub->add_option("--n-estimators", train.n_estimators, "Tree count (rf)");
    sub->add_option("--max-depth", train.max_depth, "Tree depth cap; 0 = unlimited (rf)");
    sub->add_option("--kernel", train.kernel, "linear or rbf (svc)");
    sub->add_option("--out", train.out, "Output model file")->required();

    EvaluateArgs evaluate;
    sub = app.add_subcommand("evaluate",
                             "Score the registry's current best model on city test splits");
    add_common_options(sub, &evaluate.config);
    bind_key(sub, &evaluate.config, "--data", "data", "Dataset root");
    bind_key(sub, &evaluate.config, "--registry", "registry", "Model registry directory");
    bind_key(sub, &evaluate.config, "--cities", "cities", "Comma-separated city ids");
    bind_key(sub, &evaluate.config, "--approach", "approach", "br-ml, brg-vlad, brg-fv, brg-avg");
    sub->add_option("--out", evaluate.out, "Report path (default: standard output)");

    PhaseRunArgs phase_run;
    sub = app.add_subcommand("phase-run", "Run the multi-city three-phase pipeline");
    add_common_options(sub, &phase_run.config);
    bind_key(sub, &phase_run.config, "--data", "data", "Dataset root");
    bind_key(sub, &phase_run.config, "--registry", "registry", "Model registry directory");
    bind_key(sub, &phase_run.config, "--cities", "cities", "Comma-separated city ids in order");
    bind_key(sub, &phase_run.config, "--approach", "approach",
             "br-ml, brg-vlad, brg-fv, brg-avg");
    bind_key(sub, &phase_run.config, "--threshold", "threshold", "Stopping threshold");
    sub->add_option("--out", phase_run.out, "Report path (default: standard output)");

    SynthGenArgs synth;
    sub = app.add_subcommand("synth-gen", "Render synthetic city datasets from a spec");
    add_common_options(sub, &synth.config);
    sub->add_option("--spec", synth.spec, "City spec config (alias for --config)");
    sub->add_option("--out", synth.out, "Dataset root directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        std::cerr << app.help() << std::flush;
        return 1;
    }

    try {
        if (app.got_subcommand("ingest")) return run_ingest(ingest);
        if (app.got_subcommand("tile")) return run_tile(tile_args);
        if (app.got_subcommand("extract")) return run_extract(extract);
        if (app.got_subcommand("encode")) return run_encode(encode);
        if (app.got_subcommand("train")) return run_train(train);
        if (app.got_subcommand("evaluate")) return run_evaluate(evaluate);
        if (app.got_subcommand("phase-run")) return run_phase_run(phase_run);
        if (app.got_subcommand("synth-gen")) return run_synth_gen(synth);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
