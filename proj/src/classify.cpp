#include "gridpv/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "gridpv/common.hpp"

namespace gridpv {

using nlohmann::json;

void Dataset2D::check_consistent(const char* where) const {
    if (std::size_t(x.rows()) != y.size())
        throw Error(where, "row/label count mismatch");
    if (!ids.empty() && ids.size() != y.size())
        throw Error(where, "row/id count mismatch");
    if (!cities.empty() && cities.size() != y.size())
        throw Error(where, "row/city count mismatch");
    for (int v : y)
        if (v != 0 && v != 1) throw Error(where, "labels must be 0 or 1");
}

const char* family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::LR: return "lr";
        case ModelFamily::RF: return "rf";
        case ModelFamily::SVC: return "svc";
    }
    return "?";
}

ModelFamily parse_family(const std::string& s) {
    if (s == "lr") return ModelFamily::LR;
    if (s == "rf") return ModelFamily::RF;
    if (s == "svc") return ModelFamily::SVC;
    throw Error("parse_family", "unknown model family '" + s + "'");
}

json HyperparameterCombo::to_json() const {
    json j;
    j["family"] = family_name(family);
    switch (family) {
        case ModelFamily::LR:
            j["c"] = c;
            j["solver"] = solver_label;
            break;
        case ModelFamily::RF:
            j["n_estimators"] = n_estimators;
            if (max_depth) j["max_depth"] = *max_depth;
            break;
        case ModelFamily::SVC:
            j["c"] = c;
            j["kernel"] = kernel;
            break;
    }
    if (grid_size) j["grid_size"] = *grid_size;
    if (k) j["k"] = *k;
    return j;
}

HyperparameterCombo HyperparameterCombo::from_json(const json& j) {
    HyperparameterCombo combo;
    combo.family = parse_family(j.at("family").get<std::string>());
    if (j.contains("c")) combo.c = j["c"].get<double>();
    if (j.contains("solver")) combo.solver_label = j["solver"].get<std::string>();
    if (j.contains("n_estimators")) combo.n_estimators = j["n_estimators"].get<int>();
    if (j.contains("max_depth")) combo.max_depth = j["max_depth"].get<int>();
    if (j.contains("kernel")) combo.kernel = j["kernel"].get<std::string>();
    if (j.contains("grid_size")) combo.grid_size = j["grid_size"].get<int>();
    if (j.contains("k")) combo.k = j["k"].get<int>();
    return combo;
}

static std::string trim_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string HyperparameterCombo::key() const {
    std::string s = family_name(family);
    if (grid_size) s += "_g" + std::to_string(*grid_size);
    if (k) s += "_k" + std::to_string(*k);
    switch (family) {
        case ModelFamily::LR:
            s += "_c" + trim_number(c);
            if (!solver_label.empty()) s += "_" + solver_label;
            break;
        case ModelFamily::RF:
            s += "_n" + std::to_string(n_estimators);
            if (max_depth) s += "_d" + std::to_string(*max_depth);
            break;
        case ModelFamily::SVC:
            s += "_c" + trim_number(c) + "_" + kernel;
            break;
    }
    return s;
}

Standardization Standardization::fit(const Matrix& x) {
    Standardization st;
    st.mean = x.colwise().mean();
    Matrix centered = x.rowwise() - st.mean.transpose();
    st.scale = (centered.array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < st.scale.size(); ++j)
        if (st.scale(j) <= 0) st.scale(j) = 1.0;
    return st;
}

Standardization Standardization::identity(Eigen::Index dims) {
    Standardization st;
    st.mean = Vector::Zero(dims);
    st.scale = Vector::Ones(dims);
    return st;
}

Matrix Standardization::apply(const Matrix& x) const {
    if (x.cols() != mean.size())
        throw Error("Standardization::apply", "dimension mismatch: got " +
                                                  std::to_string(x.cols()) + " columns, expected " +
                                                  std::to_string(mean.size()));
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
}

// ---------------------------------------------------------------------------
// logistic regression

// sigma(-t) without overflow
static double sigmoid_neg(double t) {
    if (t > 0) {
        double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

// log(1 + exp(u)) without overflow
static double softplus(double u) {
    if (u > 0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

static double signed_label(int y) { return y == 1 ? 1.0 : -1.0; }

double lr_objective(const Matrix& x, const std::vector<int>& y, double c, const Vector& w,
                    double b) {
    double loss = 0;
    Vector z = x * w;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        loss += softplus(-signed_label(y[std::size_t(i)]) * (z(i) + b));
    return 0.5 * w.squaredNorm() + c * loss;
}

void lr_gradient(const Matrix& x, const std::vector<int>& y, double c, const Vector& w, double b,
                 Vector& grad_w, double& grad_b) {
    Vector z = x * w;
    Vector r(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double yi = signed_label(y[std::size_t(i)]);
        r(i) = -yi * sigmoid_neg(yi * (z(i) + b));
    }
    grad_w = w + c * (x.transpose() * r);
    grad_b = c * r.sum();
}

static void require_two_classes(const std::vector<int>& y, const char* where) {
    bool has0 = false, has1 = false;
    for (int v : y) (v == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw Error(where, "single-class training data");
}

// L-BFGS over the packed vector [w; b]; the bias is just the coordinate the
// regularizer skips.
static void lr_fit_quasi_newton(const Matrix& x, const std::vector<int>& y, double c,
                                const LrFitOptions& opt, Vector& w, double& b) {
    const Eigen::Index m = x.cols();
    Vector theta = Vector::Zero(m + 1);

    auto objective = [&](const Vector& t) {
        return lr_objective(x, y, c, t.head(m), t(m));
    };
    auto gradient = [&](const Vector& t, Vector& g) {
        Vector gw;
        double gb;
        lr_gradient(x, y, c, t.head(m), t(m), gw, gb);
        g.head(m) = gw;
        g(m) = gb;
    };

    Vector g(m + 1), g_new(m + 1);
    double f = objective(theta);
    gradient(theta, g);

    const int memory = 10;
    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) break;

        // two-loop recursion
        Vector q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = int(s_hist.size()) - 1; i >= 0; --i) {
            alpha[std::size_t(i)] = rho_hist[std::size_t(i)] * s_hist[std::size_t(i)].dot(q);
            q -= alpha[std::size_t(i)] * y_hist[std::size_t(i)];
        }
        if (!s_hist.empty()) {
            double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vector dir = -q;
        double slope = g.dot(dir);
        if (slope >= 0) {  // not a descent direction, fall back to steepest descent
            dir = -g;
            slope = -g.squaredNorm();
        }

        double step = 1.0;
        double f_new = f;
        Vector theta_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            theta_new = theta + step * dir;
            f_new = objective(theta_new);
            if (f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        gradient(theta_new, g_new);
        Vector s = theta_new - theta;
        Vector yv = g_new - g;
        double sy = s.dot(yv);
        if (sy > 1e-12) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (int(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta = theta_new;
        f = f_new;
        g = g_new;
    }

    w = theta.head(m);
    b = theta(m);
}

// Cyclic 1-D Newton over coordinates (then the bias), each step halved until
// the Armijo condition holds; the restricted objective is convex so this
// always terminates with a decrease.
static void lr_fit_coordinate_descent(const Matrix& x, const std::vector<int>& y, double c,
                                      const LrFitOptions& opt, Vector& w, double& b) {
    const Eigen::Index n = x.rows(), m = x.cols();
    w = Vector::Zero(m);
    b = 0;
    Vector z = Vector::Zero(n);  // running Xw + b

    Vector ys(n);
    for (Eigen::Index i = 0; i < n; ++i) ys(i) = signed_label(y[std::size_t(i)]);

    auto loss_at = [&](const Vector& zz) {
        double loss = 0;
        for (Eigen::Index i = 0; i < n; ++i) loss += softplus(-ys(i) * zz(i));
        return loss;
    };

    double loss = loss_at(z);

    // One coordinate update against column `col` (empty => bias). Returns the
    // applied delta.
    auto update = [&](const Vector* col, double& coord, bool regularized) {
        double g = regularized ? coord : 0.0;
        double h = regularized ? 1.0 : 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double xij = col ? (*col)(i) : 1.0;
            double p = sigmoid_neg(ys(i) * z(i));
            g += c * (-ys(i) * p) * xij;
            h += c * p * (1.0 - p) * xij * xij;
        }
        if (std::abs(g) < 1e-15) return;
        if (h < 1e-12) h = 1e-12;
        double delta = -g / h;
        double reg_old = regularized ? 0.5 * coord * coord : 0.0;
        for (int ls = 0; ls < 60; ++ls) {
            Vector z_new = col ? (z + delta * (*col)).eval() : (z.array() + delta).matrix().eval();
            double cand = coord + delta;
            double reg_new = regularized ? 0.5 * cand * cand : 0.0;
            double l_new = loss_at(z_new);
            double f_change = (c * l_new + reg_new) - (c * loss + reg_old);
            if (f_change <= 1e-4 * delta * g) {
                coord = cand;
                z = z_new;
                loss = l_new;
                return;
            }
            delta *= 0.5;
        }
    };

    for (int epoch = 0; epoch < opt.max_iter; ++epoch) {
        for (Eigen::Index j = 0; j < m; ++j) {
            Vector col = x.col(j);
            update(&col, w(j), true);
        }
        update(nullptr, b, false);

        Vector gw;
        double gb;
        lr_gradient(x, y, c, w, b, gw, gb);
        double ginf = std::max(gw.lpNorm<Eigen::Infinity>(), std::abs(gb));
        if (ginf < opt.grad_tol) break;
    }
}

TrainedModel lr_fit(const Dataset2D& data, double c, LrSolver solver, std::uint64_t seed,
                    const LrFitOptions& options) {
    (void)seed;  // both solvers are deterministic from w = 0
    data.check_consistent("lr_fit");
    if (data.size() == 0) throw Error("lr_fit", "empty training data");
    require_two_classes(data.y, "lr_fit");
    if (c <= 0) throw Error("lr_fit", "C must be positive");

    TrainedModel model;
    model.family = ModelFamily::LR;
    model.combo.family = ModelFamily::LR;
    model.combo.c = c;
    model.standardization = Standardization::fit(data.x);
    Matrix xs = model.standardization.apply(data.x);

    LrParams params;
    if (solver == LrSolver::QuasiNewton)
        lr_fit_quasi_newton(xs, data.y, c, options, params.weights, params.bias);
    else
        lr_fit_coordinate_descent(xs, data.y, c, options, params.weights, params.bias);
    model.params = std::move(params);
    return model;
}

LrSolver solver_from_label(const std::string& label, int position_in_config) {
    if (label.find("lbfgs") != std::string::npos) return LrSolver::QuasiNewton;
    if (label == "liblinear") return LrSolver::CoordinateDescent;
    return position_in_config == 0 ? LrSolver::QuasiNewton : LrSolver::CoordinateDescent;
}

// ---------------------------------------------------------------------------
// random forest

namespace {

struct TreeBuilder {
    const Matrix& x;
    const std::vector<int>& y;
    Rng rng;
    int mtry;
    std::optional<int> max_depth;
    std::vector<TreeNode> nodes;

    TreeBuilder(const Matrix& x_, const std::vector<int>& y_, std::uint64_t seed,
                std::optional<int> depth)
        : x(x_), y(y_), rng(seed), max_depth(depth) {
        mtry = int(std::ceil(std::sqrt(double(x.cols()))));
    }

    int build(std::vector<int>& idx, int begin, int end, int depth) {
        double n0 = 0, n1 = 0;
        for (int i = begin; i < end; ++i) (y[std::size_t(idx[std::size_t(i)])] == 1 ? n1 : n0) += 1;

        int node_id = int(nodes.size());
        nodes.push_back({});
        TreeNode& placeholder = nodes.back();
        placeholder.count0 = n0;
        placeholder.count1 = n1;

        bool stop = n0 == 0 || n1 == 0 || end - begin < 2 ||
                    (max_depth && depth >= *max_depth);
        if (!stop) {
            int feature = -1;
            double threshold = 0;
            if (find_split(idx, begin, end, n0, n1, feature, threshold)) {
                // partition in place, order within halves preserved
                std::stable_partition(idx.begin() + begin, idx.begin() + end, [&](int row) {
                    return x(row, feature) < threshold;
                });
                int mid = begin;
                while (mid < end && x(idx[std::size_t(mid)], feature) < threshold) ++mid;
                int left = build(idx, begin, mid, depth + 1);
                int right = build(idx, mid, end, depth + 1);
                TreeNode& node = nodes[std::size_t(node_id)];
                node.leaf = false;
                node.feature = feature;
                node.threshold = threshold;
                node.left = left;
                node.right = right;
            }
        }
        return node_id;
    }

    // Draws mtry distinct candidate features, keeps the (feature, threshold)
    // with the lowest weighted Gini impurity of the children. Zero-gain splits
    // are kept as long as the candidate has at least two distinct values.
    bool find_split(const std::vector<int>& idx, int begin, int end, double n0, double n1,
                    int& best_feature, double& best_threshold) {
        const int m = int(x.cols());
        std::vector<int> features(static_cast<std::size_t>(m));
        std::iota(features.begin(), features.end(), 0);
        for (int i = 0; i < mtry && i < m; ++i) {
            std::size_t j = std::size_t(i) + rng.uniform_int(std::uint64_t(m - i));
            std::swap(features[std::size_t(i)], features[j]);
        }

        double n = n0 + n1;
        double best_impurity = std::numeric_limits<double>::infinity();
        bool found = false;

        std::vector<std::pair<double, int>> vals;
        vals.reserve(std::size_t(end - begin));
        for (int f_i = 0; f_i < mtry && f_i < m; ++f_i) {
            int f = features[std::size_t(f_i)];
            vals.clear();
            for (int i = begin; i < end; ++i) {
                int row = idx[std::size_t(i)];
                vals.emplace_back(x(row, f), y[std::size_t(row)]);
            }
            std::sort(vals.begin(), vals.end());
            if (vals.front().first == vals.back().first) continue;

            double l0 = 0, l1 = 0;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                (vals[i].second == 1 ? l1 : l0) += 1;
                if (vals[i].first == vals[i + 1].first) continue;
                double nl = l0 + l1, nr = n - nl;
                double gini_l = 1.0 - (l0 * l0 + l1 * l1) / (nl * nl);
                double r0 = n0 - l0, r1 = n1 - l1;
                double gini_r = 1.0 - (r0 * r0 + r1 * r1) / (nr * nr);
                double impurity = (nl * gini_l + nr * gini_r) / n;
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = f;
                    best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                    found = true;
                }
            }
        }
        return found;
    }
};

}  // namespace

TrainedModel rf_fit(const Dataset2D& data, int n_estimators, std::optional<int> max_depth,
                    std::uint64_t seed, int jobs) {
    data.check_consistent("rf_fit");
    if (data.size() == 0) throw Error("rf_fit", "empty training data");
    if (n_estimators < 1) throw Error("rf_fit", "n_estimators must be >= 1");

    TrainedModel model;
    model.family = ModelFamily::RF;
    model.combo.family = ModelFamily::RF;
    model.combo.n_estimators = n_estimators;
    model.combo.max_depth = max_depth;
    model.standardization = Standardization::identity(data.x.cols());

    RfParams params;
    params.trees.resize(std::size_t(n_estimators));
    const int n = int(data.size());
    parallel_chunks(std::size_t(n_estimators), 1, jobs, [&](std::size_t, std::size_t begin,
                                                            std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            TreeBuilder builder(data.x, data.y, seed + t, max_depth);
            std::vector<int> idx(static_cast<std::size_t>(n));
            for (int& v : idx) v = int(builder.rng.uniform_int(std::uint64_t(n)));
            builder.build(idx, 0, n, 0);
            params.trees[t] = std::move(builder.nodes);
        }
    });
    model.params = std::move(params);
    return model;
}

// ---------------------------------------------------------------------------
// support vector classifier

static void make_rff(std::uint64_t seed, int map_dim, Eigen::Index input_dim, double gamma,
                     Matrix& w, Vector& offset) {
    Rng rng(seed);
    double sd = std::sqrt(2.0 * gamma);
    w.resize(map_dim, input_dim);
    for (int r = 0; r < map_dim; ++r)
        for (Eigen::Index c = 0; c < input_dim; ++c) w(r, c) = rng.normal() * sd;
    offset.resize(map_dim);
    for (int r = 0; r < map_dim; ++r) offset(r) = rng.uniform(0.0, 2.0 * M_PI);
}

static Matrix rff_apply(const Matrix& x, const Matrix& w, const Vector& offset) {
    Matrix proj = x * w.transpose();
    proj.rowwise() += offset.transpose();
    double scale = std::sqrt(2.0 / double(w.rows()));
    return (proj.array().cos() * scale).matrix();
}

double hinge_sum(const Matrix& x, const std::vector<int>& y, const Vector& w, double b) {
    Vector z = x * w;
    double total = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        total += std::max(0.0, 1.0 - signed_label(y[std::size_t(i)]) * (z(i) + b));
    return total;
}

// Dual coordinate descent for min 0.5||v||^2 + C sum max(0, 1 - y v.a_i)
// over the bias-augmented features a_i, visiting coordinates in fixed cyclic
// order. Stops once the duality gap drops below gap_tol.
static Vector svc_dual_cd(const Matrix& a, const std::vector<int>& y, double c,
                          const SvcFitOptions& opt) {
    const Eigen::Index n = a.rows(), d = a.cols();
    Vector v = Vector::Zero(d);
    Vector alpha = Vector::Zero(n);
    Vector qii = a.rowwise().squaredNorm();
    Vector ys(n);
    for (Eigen::Index i = 0; i < n; ++i) ys(i) = signed_label(y[std::size_t(i)]);

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double grad = ys(i) * a.row(i).dot(v) - 1.0;
            double pg = grad;
            if (alpha(i) <= 0)
                pg = std::min(grad, 0.0);
            else if (alpha(i) >= c)
                pg = std::max(grad, 0.0);
            if (std::abs(pg) > 1e-12) {
                double next = std::clamp(alpha(i) - grad / qii(i), 0.0, c);
                if (next != alpha(i)) {
                    v += (next - alpha(i)) * ys(i) * a.row(i).transpose();
                    alpha(i) = next;
                }
            }
        }

        double primal = 0.5 * v.squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i)
            primal += c * std::max(0.0, 1.0 - ys(i) * a.row(i).dot(v));
        double dual = alpha.sum() - 0.5 * v.squaredNorm();
        if (primal - dual < opt.gap_tol) break;
    }
    return v;
}

TrainedModel svm_fit(const Dataset2D& data, double c, const std::string& kernel,
                     std::uint64_t seed, const SvcFitOptions& options) {
    data.check_consistent("svm_fit");
    if (data.size() == 0) throw Error("svm_fit", "empty training data");
    require_two_classes(data.y, "svm_fit");
    if (c <= 0) throw Error("svm_fit", "C must be positive");
    if (kernel != "linear" && kernel != "rbf")
        throw Error("svm_fit", "unknown kernel '" + kernel + "'");

    TrainedModel model;
    model.family = ModelFamily::SVC;
    model.combo.family = ModelFamily::SVC;
    model.combo.c = c;
    model.combo.kernel = kernel;
    model.standardization = Standardization::fit(data.x);
    Matrix xs = model.standardization.apply(data.x);

    SvcParams params;
    Matrix features = xs;
    if (kernel == "rbf") {
        params.rff = true;
        params.map_seed = derive_seed(seed, 0x7ff);
        params.map_dim = options.map_dim;
        if (options.gamma_override > 0) {
            params.gamma = options.gamma_override;
        } else {
            double var = (xs.array() - xs.mean()).square().mean();
            if (var <= 0) var = 1.0;
            params.gamma = 1.0 / (double(xs.cols()) * var);
        }
        make_rff(params.map_seed, params.map_dim, xs.cols(), params.gamma, params.rff_w,
                 params.rff_offset);
        features = rff_apply(xs, params.rff_w, params.rff_offset);
    }

    Matrix augmented(features.rows(), features.cols() + 1);
    augmented.leftCols(features.cols()) = features;
    augmented.col(features.cols()).setOnes();
    Vector v = svc_dual_cd(augmented, data.y, c, options);
    params.weights = v.head(features.cols());
    params.bias = v(features.cols());
    model.params = std::move(params);
    return model;
}

// ---------------------------------------------------------------------------
// prediction

static int tree_vote(const std::vector<TreeNode>& nodes, const Matrix& x, Eigen::Index row) {
    int cur = 0;
    while (!nodes[std::size_t(cur)].leaf) {
        const TreeNode& nd = nodes[std::size_t(cur)];
        cur = x(row, nd.feature) < nd.threshold ? nd.left : nd.right;
    }
    const TreeNode& leaf = nodes[std::size_t(cur)];
    return leaf.count1 > leaf.count0 ? 1 : 0;
}

Predictions predict(const TrainedModel& model, const Matrix& x) {
    Matrix xs = model.standardization.apply(x);  // identity for RF
    Predictions out;
    out.labels.resize(std::size_t(x.rows()));
    out.scores.resize(std::size_t(x.rows()));

    if (model.family == ModelFamily::LR) {
        const auto& p = std::get<LrParams>(model.params);
        Vector z = xs * p.weights;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double prob = sigmoid_neg(-(z(i) + p.bias));
            out.scores[std::size_t(i)] = prob;
            out.labels[std::size_t(i)] = prob > 0.5 ? 1 : 0;
        }
    } else if (model.family == ModelFamily::RF) {
        const auto& p = std::get<RfParams>(model.params);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            int votes = 0;
            for (const auto& tree : p.trees) votes += tree_vote(tree, xs, i);
            double frac = double(votes) / double(p.trees.size());
            out.scores[std::size_t(i)] = frac;
            out.labels[std::size_t(i)] = frac > 0.5 ? 1 : 0;
        }
    } else {
        const auto& p = std::get<SvcParams>(model.params);
        Matrix features = p.rff ? rff_apply(xs, p.rff_w, p.rff_offset) : xs;
        Vector z = features * p.weights;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double margin = z(i) + p.bias;
            out.scores[std::size_t(i)] = margin;
            out.labels[std::size_t(i)] = margin > 0 ? 1 : 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization

static void write_doubles(std::ofstream& out, const double* values, std::size_t count) {
    out.write(reinterpret_cast<const char*>(values),
              std::streamsize(count * sizeof(double)));
}

static std::vector<double> read_doubles(std::ifstream& in, std::size_t count, const char* where) {
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(count * sizeof(double)));
    if (std::size_t(in.gcount()) != count * sizeof(double))
        throw Error(where, "truncated payload");
    return values;
}

void save_model(const TrainedModel& model, const std::string& path) {
    json header;
    header["version"] = 1;
    header["family"] = family_name(model.family);
    header["combo"] = model.combo.to_json();
    header["standardization"] = {
        {"mean", std::vector<double>(model.standardization.mean.data(),
                                     model.standardization.mean.data() +
                                         model.standardization.mean.size())},
        {"scale", std::vector<double>(model.standardization.scale.data(),
                                      model.standardization.scale.data() +
                                          model.standardization.scale.size())}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_model", "cannot open '" + path + "' for writing");

    if (model.family == ModelFamily::LR) {
        const auto& p = std::get<LrParams>(model.params);
        header["dims"] = p.weights.size();
        out << header.dump() << "\n";
        write_doubles(out, p.weights.data(), std::size_t(p.weights.size()));
        write_doubles(out, &p.bias, 1);
    } else if (model.family == ModelFamily::RF) {
        const auto& p = std::get<RfParams>(model.params);
        std::vector<std::size_t> sizes;
        for (const auto& tree : p.trees) sizes.push_back(tree.size());
        header["trees"] = sizes;
        header["dims"] = model.standardization.mean.size();
        out << header.dump() << "\n";
        for (const auto& tree : p.trees)
            for (const TreeNode& nd : tree) {
                double rec[7] = {nd.leaf ? 1.0 : 0.0, double(nd.feature), nd.threshold,
                                 double(nd.left),     double(nd.right),   nd.count0,
                                 nd.count1};
                write_doubles(out, rec, 7);
            }
    } else {
        const auto& p = std::get<SvcParams>(model.params);
        header["dims"] = p.weights.size();
        json map;
        if (p.rff) {
            map["kind"] = "rff";
            map["seed"] = p.map_seed;
            map["gamma"] = p.gamma;
            map["dim"] = p.map_dim;
        } else {
            map["kind"] = "identity";
        }
        header["feature_map"] = map;
        out << header.dump() << "\n";
        write_doubles(out, p.weights.data(), std::size_t(p.weights.size()));
        write_doubles(out, &p.bias, 1);
    }
    if (!out) throw Error("save_model", "write to '" + path + "' failed");
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_model", "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("load_model", "missing header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw Error("load_model", std::string("invalid header: ") + e.what());
    }
    if (!header.contains("version") || header["version"] != 1)
        throw Error("load_model", "not a version-1 model file");

    TrainedModel model;
    model.family = parse_family(header.at("family").get<std::string>());
    model.combo = HyperparameterCombo::from_json(header.at("combo"));
    auto mean = header.at("standardization").at("mean").get<std::vector<double>>();
    auto scale = header.at("standardization").at("scale").get<std::vector<double>>();
    model.standardization.mean = Eigen::Map<const Vector>(mean.data(), Eigen::Index(mean.size()));
    model.standardization.scale =
        Eigen::Map<const Vector>(scale.data(), Eigen::Index(scale.size()));

    if (model.family == ModelFamily::LR) {
        auto dims = header.at("dims").get<std::size_t>();
        auto values = read_doubles(in, dims + 1, "load_model");
        LrParams p;
        p.weights = Eigen::Map<const Vector>(values.data(), Eigen::Index(dims));
        p.bias = values[dims];
        model.params = std::move(p);
    } else if (model.family == ModelFamily::RF) {
        auto sizes = header.at("trees").get<std::vector<std::size_t>>();
        RfParams p;
        for (std::size_t count : sizes) {
            auto values = read_doubles(in, count * 7, "load_model");
            std::vector<TreeNode> tree(count);
            for (std::size_t i = 0; i < count; ++i) {
                const double* rec = values.data() + i * 7;
                tree[i].leaf = rec[0] != 0;
                tree[i].feature = int(rec[1]);
                tree[i].threshold = rec[2];
                tree[i].left = int(rec[3]);
                tree[i].right = int(rec[4]);
                tree[i].count0 = rec[5];
                tree[i].count1 = rec[6];
            }
            p.trees.push_back(std::move(tree));
        }
        model.params = std::move(p);
    } else {
        auto dims = header.at("dims").get<std::size_t>();
        auto values = read_doubles(in, dims + 1, "load_model");
        SvcParams p;
        p.weights = Eigen::Map<const Vector>(values.data(), Eigen::Index(dims));
        p.bias = values[dims];
        const json& map = header.at("feature_map");
        if (map.at("kind") == "rff") {
            p.rff = true;
            p.map_seed = map.at("seed").get<std::uint64_t>();
            p.gamma = map.at("gamma").get<double>();
            p.map_dim = map.at("dim").get<int>();
            make_rff(p.map_seed, p.map_dim, model.standardization.mean.size(), p.gamma, p.rff_w,
                     p.rff_offset);
        }
        model.params = std::move(p);
    }
    return model;
}

}  // namespace gridpv
