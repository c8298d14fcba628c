#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gridpv/encoding.hpp"

namespace gridpv {

struct Dataset2D {
    Matrix x;                        // N x M descriptors
    std::vector<int> y;              // 0 = no_pv, 1 = with_pv
    std::vector<std::string> ids;    // rooftop ids
    std::vector<std::string> cities; // city per row

    std::size_t size() const { return std::size_t(x.rows()); }
    void check_consistent(const char* where) const;
};

enum class ModelFamily { LR, RF, SVC };
const char* family_name(ModelFamily f);
ModelFamily parse_family(const std::string& s);

enum class LrSolver { QuasiNewton, CoordinateDescent };

struct HyperparameterCombo {
    ModelFamily family = ModelFamily::LR;
    // LR
    double c = 1.0;  // also SVC
    std::string solver_label;
    // RF
    int n_estimators = 100;
    std::optional<int> max_depth;
    // SVC
    std::string kernel = "linear";
    // approach-level knobs (BRG only)
    std::optional<int> grid_size;
    std::optional<int> k;

    nlohmann::json to_json() const;
    static HyperparameterCombo from_json(const nlohmann::json& j);
    /// Canonical short string, also used for registry directory names.
    std::string key() const;
};

/// Per-dimension affine feature standardization learned on training data and
/// stored with every model (identity for RF).
struct Standardization {
    Vector mean;
    Vector scale;

    static Standardization fit(const Matrix& x);
    static Standardization identity(Eigen::Index dims);
    Matrix apply(const Matrix& x) const;
};

struct LrParams {
    Vector weights;
    double bias = 0;
};

struct TreeNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0;
    int left = -1;
    int right = -1;
    double count0 = 0;  // leaf class-vote counts
    double count1 = 0;
};

struct RfParams {
    std::vector<std::vector<TreeNode>> trees;
};

struct SvcParams {
    bool rff = false;             // random Fourier map in front of the linear solver
    std::uint64_t map_seed = 0;
    double gamma = 0;
    int map_dim = 0;
    Vector weights;               // over mapped (or raw) features
    double bias = 0;
    // regenerated from map_seed, never serialized
    Matrix rff_w;
    Vector rff_offset;
};

struct TrainedModel {
    ModelFamily family = ModelFamily::LR;
    HyperparameterCombo combo;
    Standardization standardization;
    std::variant<LrParams, RfParams, SvcParams> params;
};

struct Predictions {
    std::vector<int> labels;
    std::vector<double> scores;  // probability (LR), vote fraction (RF), margin (SVC)
};

struct LrFitOptions {
    double grad_tol = 1e-6;
    int max_iter = 1000;
};

/// Minimizes 0.5*||w||^2 + C * sum_i log(1 + exp(-y_i*(w.x_i + b))) with the
/// bias unregularized. QuasiNewton = L-BFGS with Armijo backtracking;
/// CoordinateDescent = cyclic 1-D Newton with halving safeguard. Both stop at
/// gradient inf-norm < grad_tol.
TrainedModel lr_fit(const Dataset2D& data, double c, LrSolver solver, std::uint64_t seed,
                    const LrFitOptions& options = {});

/// Maps the two configured solver labels onto the solver variants;
/// "lbfgs"-style names bind to QuasiNewton, everything else by list position.
LrSolver solver_from_label(const std::string& label, int position_in_config);

/// Seeded bagging of CART trees: per-tree bootstrap, ceil(sqrt(M)) candidate
/// features per node, best weighted-Gini split, grown until pure / < 2
/// samples / max_depth. Per-tree seed = seed + tree index.
TrainedModel rf_fit(const Dataset2D& data, int n_estimators, std::optional<int> max_depth,
                    std::uint64_t seed, int jobs = 1);

struct SvcFitOptions {
    int map_dim = 256;
    double gamma_override = 0;  // <= 0: gamma = 1 / (M * var(X))
    double gap_tol = 1e-6;
    int max_epochs = 1000;
};

/// L2-regularized L1-hinge SVM solved by dual coordinate descent in fixed
/// cyclic order; the bias rides along as an augmented constant feature.
/// kernel "rbf" puts a seeded random Fourier feature map (an explicit
/// approximation of the RBF kernel) in front of the same linear solver.
TrainedModel svm_fit(const Dataset2D& data, double c, const std::string& kernel,
                     std::uint64_t seed, const SvcFitOptions& options = {});

Predictions predict(const TrainedModel& model, const Matrix& x);

/// The LR objective and gradient at (w, b); exposed for gradient checking.
double lr_objective(const Matrix& x, const std::vector<int>& y, double c, const Vector& w,
                    double b);
void lr_gradient(const Matrix& x, const std::vector<int>& y, double c, const Vector& w, double b,
                 Vector& grad_w, double& grad_b);

/// Hinge part of the SVM primal objective (for subgradient checks).
double hinge_sum(const Matrix& x, const std::vector<int>& y, const Vector& w, double b);

/// One JSON header line {version, family, combo, standardization} followed by
/// a little-endian 64-bit float payload (weights or flattened tree arrays).
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace gridpv
