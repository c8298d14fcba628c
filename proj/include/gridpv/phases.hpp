#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gridpv/classify.hpp"
#include "gridpv/config.hpp"
#include "gridpv/dataset.hpp"
#include "gridpv/encoding.hpp"
#include "gridpv/eval.hpp"
#include "gridpv/features.hpp"

namespace gridpv {

enum class Approach { BR_ML, BRG_VLAD_ML, BRG_FV_ML, BRG_AVG_ML };
const char* approach_name(Approach a);
Approach parse_approach(const std::string& s);

struct PipelineConfig {
    Approach approach = Approach::BRG_VLAD_ML;
    ExtractorSpec extractor;
    std::vector<int> grid_sizes{64, 96, 128};
    std::vector<int> k_values{2, 3, 4};
    double min_coverage = 0.5;
    EncodeOptions encode;
    std::vector<ModelFamily> families{ModelFamily::LR, ModelFamily::RF, ModelFamily::SVC};
    std::vector<double> lr_c{0.01, 0.1, 1, 10};
    std::vector<std::string> lr_solvers{"liblinear", "lbfgs"};
    std::vector<int> rf_n_estimators{50, 100, 200};
    std::vector<int> rf_max_depth{0, 10, 20};  // 0 = unlimited
    std::vector<double> svc_c{0.1, 1, 10};
    std::vector<std::string> svc_kernels{"linear", "rbf"};
    double threshold = 0.90;
    double weight = 0.5;
    std::uint64_t seed = 7;
    int jobs = 1;
    bool balance = true;
    std::string features_dir;  // extractor.kind = PrecomputedFile

    void validate() const;
    /// Classifier combos in grid order (family, then that family's parameter
    /// lists in declaration order). BRG approaches wrap this in the outer
    /// grid_size (and K) loops.
    std::vector<HyperparameterCombo> classifier_grid() const;
    bool uses_tiles() const { return approach != Approach::BR_ML; }
    bool uses_codebook() const { return approach == Approach::BRG_VLAD_ML; }
    bool uses_gmm() const { return approach == Approach::BRG_FV_ML; }
    static PipelineConfig from_config(const Config& config);
};

/// One trained grid entry inside a registry step.
struct StoredModel {
    HyperparameterCombo combo;
    TrainedModel model;
    std::optional<Codebook> codebook;  // BRG-VLAD
    std::optional<GmmModel> gmm;       // BRG-FV
    double validation_weighted = -1;   // filled in by Phase-2 re-validation
    double test_weighted = 0;
    double rounded_test = 0;
    double seconds = 0;
};

enum class Phase { P1, P2, P3 };
const char* phase_name(Phase p);

/// The stopping rule: weighted F1 rounded to 2 decimals (half away from
/// zero), compared against the threshold in exact hundredths.
bool threshold_met(double weighted, double threshold);

struct StepRecord {
    int index = 0;
    std::string city;
    Approach approach = Approach::BRG_VLAD_ML;
    std::vector<StoredModel> models;  // Phase-3 grid order; empty when an earlier phase stopped
    int best_index = -1;
    std::optional<HyperparameterCombo> chosen;
    Phase stopped_phase = Phase::P3;
    bool passed = false;
    ScoreReport final_report;
    double p1_seconds = 0;
    double p2_seconds = 0;
    double p3_seconds = 0;
};

/// Ordered city steps with their Phase-3 model sets.
/// On-disk layout: <dir>/<index>_<city>/best.json plus, per model,
/// <dir>/<index>_<city>/<approach>/<combo key>/{model.bin, meta.json,
/// codebook.bin}.
class ModelRegistry {
  public:
    std::vector<StepRecord> steps;

    const StepRecord* latest_with_models() const;
    const StoredModel* current_best() const;

    void save(const std::string& dir) const;
    static ModelRegistry load(const std::string& dir);
};

struct PhaseOutcome {
    Phase phase = Phase::P1;
    ScoreReport report;
    bool stopped = false;
    std::optional<HyperparameterCombo> chosen_combo;
};

/// Training-work instrumentation; phase semantics tests assert these.
struct FitCounters {
    long classifier_fits = 0;
    long codebook_fits = 0;
    long gmm_fits = 0;
};

struct StepSummary {
    std::string city;
    std::vector<Phase> phases_run;
    Phase stopped_phase = Phase::P3;
    bool passed = false;
    ScoreReport report;
    double minutes = 0;
};

struct PipelineReport {
    Approach approach = Approach::BRG_VLAD_ML;
    double threshold = 0.90;
    std::vector<StepSummary> steps;
    double total_minutes = 0;
    bool all_passed = true;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Per-rooftop local-feature extraction: grid == 0 resizes the zero-masked
/// rooftop to the extractor input size (224 when unset) and yields one
/// vector; grid > 0 tiles the rooftop first, resizing tiles only when the
/// extractor demands a different input size.
std::vector<LocalFeatureSet> extract_features(const std::vector<RooftopImage>& rooftops,
                                              const ExtractorSpec& spec, int grid,
                                              double min_coverage, int jobs);

/// Drives the per-city Phase-1 / Phase-2 / Phase-3 loop over a model
/// registry. Cities are added in arrival order; the most recently added city
/// is "the new city" for the phase methods. Feature extraction is cached per
/// (city, pool, grid size), so re-evaluations across combos stay cheap.
class PhaseRunner {
  public:
    explicit PhaseRunner(PipelineConfig config);

    void add_city(CityDataset city);

    PhaseOutcome run_phase1();
    PhaseOutcome run_phase2();
    PhaseOutcome run_phase3();

    /// P1 -> P2 -> P3 with early exit (first city goes straight to P3);
    /// appends the step to the registry.
    StepSummary run_step(CityDataset city);

    PipelineReport run_pipeline(std::vector<CityDataset> cities);

    const FitCounters& counters() const { return counters_; }
    ModelRegistry& registry() { return registry_; }
    const PipelineConfig& config() const { return config_; }
    std::size_t city_count() const { return cities_.size(); }

    /// Log sink for progress lines (CLI wires this to stderr).
    std::function<void(const std::string&)> log;

  private:
    enum class Pool { TrainRaw, TrainCopies, Test };

    struct CityEntry {
        CityDataset data;
        std::vector<RooftopImage> train_copies;  // minority-balancing output
    };

    struct PoolKey {
        int city;
        Pool pool;
        int grid;
        bool operator<(const PoolKey& o) const {
            return std::tie(city, pool, grid) < std::tie(o.city, o.pool, o.grid);
        }
    };

    const std::vector<LocalFeatureSet>& features_for(int city, Pool pool, int grid);
    std::vector<LocalFeatureSet> extract_pool(const std::vector<RooftopImage>& rooftops,
                                              const std::string& city_id, int grid);
    const std::map<std::string, LocalFeatureSet>& precomputed_city(const std::string& city_id);

    /// Encodes one rooftop's local features under the given codebook/GMM.
    Vector encode_one(const LocalFeatureSet& set, const Codebook* codebook,
                      const GmmModel* gmm) const;
    Dataset2D train_dataset(int grid, const Codebook* codebook, const GmmModel* gmm,
                            bool balanced);
    Dataset2D test_dataset(int grid, const Codebook* codebook, const GmmModel* gmm);
    Matrix gather_train_vectors(int grid, std::uint64_t subsample_seed);

    ScoreReport evaluate_stored(const StoredModel& stored, bool on_test);
    TrainedModel fit_combo(const HyperparameterCombo& combo, const Dataset2D& train);
    void assert_no_leakage() const;
    bool meets_threshold(double rounded) const;

    PipelineConfig config_;
    ModelRegistry registry_;
    FitCounters counters_;
    std::vector<CityEntry> cities_;
    std::map<PoolKey, std::vector<LocalFeatureSet>> feature_cache_;
    std::map<std::string, std::map<std::string, LocalFeatureSet>> precomputed_;
};

}  // namespace gridpv
