#include "gridpv/encoding.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

#include "gridpv/common.hpp"

namespace gridpv {

using json = nlohmann::json;

const char* encoder_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::VLAD: return "vlad";
        case EncoderKind::FV: return "fv";
        case EncoderKind::AVG: return "avg";
        case EncoderKind::BR: return "br";
    }
    return "?";
}

EncoderKind parse_encoder(const std::string& s) {
    if (s == "vlad") return EncoderKind::VLAD;
    if (s == "fv") return EncoderKind::FV;
    if (s == "avg") return EncoderKind::AVG;
    if (s == "br") return EncoderKind::BR;
    throw Error("encoding.parse_encoder", "unknown encoder '" + s + "'");
}

Matrix to_matrix(const LocalFeatureSet& set) {
    if (set.vectors.empty())
        throw Error("encoding.to_matrix", "rooftop '" + set.rooftop_id + "' has no vectors");
    Matrix m(set.vectors.size(), set.vectors[0].size());
    for (std::size_t i = 0; i < set.vectors.size(); ++i) {
        if (set.vectors[i].size() != std::size_t(m.cols()))
            throw Error("encoding.to_matrix", "non-uniform dimension in '" + set.rooftop_id + "'");
        for (std::size_t j = 0; j < set.vectors[i].size(); ++j)
            m(Eigen::Index(i), Eigen::Index(j)) = double(set.vectors[i][j]);
    }
    return m;
}

namespace {

void check_finite(const Matrix& m, const char* where) {
    if (!m.allFinite()) throw Error(where, "non-finite input values");
}

int nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& x) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < centroids.rows(); ++k) {
        const double d = (centroids.row(k) - x).squaredNorm();
        if (d < best_d) {  // strict: lowest index wins ties
            best_d = d;
            best = k;
        }
    }
    return best;
}

Matrix kmeans_pp_init(const Matrix& x, int k, Rng& rng) {
    const Eigen::Index n = x.rows();
    Matrix centroids(k, x.cols());
    centroids.row(0) = x.row(Eigen::Index(rng.uniform_int(std::uint64_t(n))));

    Vector dist2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        Eigen::Index chosen;
        if (total <= 0) {
            chosen = Eigen::Index(rng.uniform_int(std::uint64_t(n)));
        } else {
            double r = rng.uniform() * total;
            chosen = n - 1;
            double acc = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += dist2[i];
                if (r < acc) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.row(c) = x.row(chosen);
        dist2 = dist2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }
    return centroids;
}

void apply_signed_sqrt_l2(Vector& v, const EncodeOptions& options) {
    if (options.signed_sqrt)
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v[i] = (v[i] < 0 ? -1.0 : 1.0) * std::sqrt(std::abs(v[i]));
    if (options.l2_normalize) {
        const double norm = v.norm();
        if (norm > 0) v /= norm;
    }
}

void write_payload(std::ofstream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(double)));
}

void read_payload(std::ifstream& in, double* data, std::size_t count, const std::string& path) {
    in.read(reinterpret_cast<char*>(data), std::streamsize(count * sizeof(double)));
    if (std::size_t(in.gcount()) != count * sizeof(double))
        throw Error("encoding.load", "truncated payload in " + path);
}

json provenance_json(const CodebookProvenance& p) {
    return json{{"cities", p.cities}, {"extractor", p.extractor}};
}

CodebookProvenance provenance_from_json(const json& j) {
    CodebookProvenance p;
    if (j.is_object()) {
        if (j.contains("cities")) p.cities = j["cities"].get<std::vector<std::string>>();
        p.extractor = j.value("extractor", "");
    }
    return p;
}

}  // namespace

Codebook kmeans_fit(const Matrix& vectors, int k, std::uint64_t seed, int max_iter, double tol) {
    const Eigen::Index n = vectors.rows();
    if (k < 1) throw Error("encoding.kmeans_fit", "k must be >= 1");
    if (n < k)
        throw Error("encoding.kmeans_fit", "need at least k=" + std::to_string(k) +
                                               " vectors, got " + std::to_string(n));
    check_finite(vectors, "encoding.kmeans_fit");

    Rng rng(derive_seed(seed, 0x6b6dULL));
    Codebook cb;
    cb.seed = seed;
    cb.centroids = kmeans_pp_init(vectors, k, rng);

    std::vector<int> assign(std::size_t(n), 0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        // Assignment step.
        double inertia = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = nearest_centroid(cb.centroids, vectors.row(i));
            assign[std::size_t(i)] = a;
            inertia += (vectors.row(i) - cb.centroids.row(a)).squaredNorm();
        }
        if (inertia > prev_inertia + 1e-9 * (1.0 + std::abs(prev_inertia)))
            throw Error("encoding.kmeans_fit", "inertia increased across an iteration");
        cb.inertia_history.push_back(inertia);
        cb.inertia = inertia;
        prev_inertia = inertia;

        // Update step.
        Matrix sums = Matrix::Zero(k, vectors.cols());
        std::vector<Eigen::Index> counts(std::size_t(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[std::size_t(i)]) += vectors.row(i);
            ++counts[std::size_t(assign[std::size_t(i)])];
        }

        Matrix next = cb.centroids;
        for (int c = 0; c < k; ++c)
            if (counts[std::size_t(c)] > 0) next.row(c) = sums.row(c) / double(counts[std::size_t(c)]);

        // Reseed empty clusters to the point farthest from its own centroid.
        for (int c = 0; c < k; ++c) {
            if (counts[std::size_t(c)] > 0) continue;
            Eigen::Index farthest = 0;
            double far_d = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = (vectors.row(i) - next.row(assign[std::size_t(i)])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    farthest = i;
                }
            }
            next.row(c) = vectors.row(farthest);
        }

        const double shift = (next - cb.centroids).rowwise().norm().maxCoeff();
        cb.centroids = next;
        if (shift < tol) break;
    }

    // Final inertia under the converged centroids.
    double inertia = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        inertia += (vectors.row(i) -
                    cb.centroids.row(nearest_centroid(cb.centroids, vectors.row(i))))
                       .squaredNorm();
    cb.inertia = inertia;
    return cb;
}

GlobalDescriptor vlad_encode(const Codebook& codebook, const LocalFeatureSet& local,
                             const EncodeOptions& options) {
    const Matrix x = to_matrix(local);
    if (x.cols() != codebook.centroids.cols())
        throw Error("encoding.vlad_encode",
                    "dimension mismatch: features are " + std::to_string(x.cols()) +
                        "-d, codebook is " + std::to_string(codebook.centroids.cols()) + "-d");

    const int k = codebook.k();
    const int d = codebook.dim();
    Vector desc = Vector::Zero(Eigen::Index(k) * d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int a = nearest_centroid(codebook.centroids, x.row(i));
        desc.segment(Eigen::Index(a) * d, d) += (x.row(i) - codebook.centroids.row(a)).transpose();
    }
    apply_signed_sqrt_l2(desc, options);
    return {std::move(desc), EncoderKind::VLAD};
}

GmmModel gmm_fit(const Matrix& vectors, int k, std::uint64_t seed, int max_iter, double tol,
                 double variance_floor_rel) {
    const Eigen::Index n = vectors.rows();
    const Eigen::Index d = vectors.cols();
    if (n < k)
        throw Error("encoding.gmm_fit", "need at least k=" + std::to_string(k) +
                                            " vectors, got " + std::to_string(n));
    check_finite(vectors, "encoding.gmm_fit");

    const Eigen::RowVectorXd data_mean = vectors.colwise().mean();
    const Eigen::RowVectorXd data_var =
        (vectors.rowwise() - data_mean).array().square().colwise().mean();
    const double mean_var = data_var.mean();
    if (k > 1 && mean_var == 0.0)
        throw Error("encoding.gmm_fit", "degenerate all-identical data with k > 1");
    const double floor = variance_floor_rel * (mean_var > 0 ? mean_var : 1.0);

    GmmModel gmm;
    gmm.seed = seed;
    gmm.variance_floor = floor;

    // Initialize from k-means.
    Codebook cb = kmeans_fit(vectors, k, seed, 50, 1e-6);
    gmm.means = cb.centroids;
    gmm.weights = Vector::Zero(k);
    gmm.variances = Matrix::Zero(k, d);
    {
        std::vector<int> assign(static_cast<std::size_t>(n));
        std::vector<Eigen::Index> counts(std::size_t(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            assign[std::size_t(i)] = nearest_centroid(cb.centroids, vectors.row(i));
            ++counts[std::size_t(assign[std::size_t(i)])];
        }
        for (Eigen::Index i = 0; i < n; ++i)
            gmm.variances.row(assign[std::size_t(i)]) +=
                (vectors.row(i) - gmm.means.row(assign[std::size_t(i)])).array().square().matrix();
        for (int c = 0; c < k; ++c) {
            gmm.weights[c] = double(counts[std::size_t(c)]) / double(n);
            if (counts[std::size_t(c)] > 0) gmm.variances.row(c) /= double(counts[std::size_t(c)]);
        }
        gmm.variances = gmm.variances.cwiseMax(floor);
        gmm.weights = gmm.weights.cwiseMax(1e-12);
        gmm.weights /= gmm.weights.sum();
    }

    Matrix log_resp(n, k);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        // E-step in the log domain.
        double ll_sum = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double row_max = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double lp = std::log(gmm.weights[c]);
                for (Eigen::Index j = 0; j < d; ++j) {
                    const double diff = vectors(i, j) - gmm.means(c, j);
                    lp += -0.5 * (std::log(2.0 * M_PI * gmm.variances(c, j)) +
                                  diff * diff / gmm.variances(c, j));
                }
                log_resp(i, c) = lp;
                row_max = std::max(row_max, lp);
            }
            double sum = 0;
            for (int c = 0; c < k; ++c) sum += std::exp(log_resp(i, c) - row_max);
            const double log_norm = row_max + std::log(sum);
            ll_sum += log_norm;
            for (int c = 0; c < k; ++c) log_resp(i, c) -= log_norm;
        }
        const double avg_ll = ll_sum / double(n);
        if (!gmm.loglik_history.empty() &&
            avg_ll < prev_ll - 1e-9 * (1.0 + std::abs(prev_ll)))
            throw Error("encoding.gmm_fit", "average log-likelihood decreased during EM");
        gmm.loglik_history.push_back(avg_ll);
        const bool converged = iter > 0 && (avg_ll - prev_ll) < tol;
        prev_ll = avg_ll;
        if (converged) break;

        // M-step.
        for (int c = 0; c < k; ++c) {
            double nk = 0;
            Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double r = std::exp(log_resp(i, c));
                nk += r;
                mu += r * vectors.row(i);
            }
            if (nk < 1e-300) nk = 1e-300;
            mu /= nk;
            Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double r = std::exp(log_resp(i, c));
                var += r * (vectors.row(i) - mu).array().square().matrix();
            }
            var /= nk;
            gmm.weights[c] = nk / double(n);
            gmm.means.row(c) = mu;
            gmm.variances.row(c) = var.cwiseMax(floor);
        }
        gmm.weights = gmm.weights.cwiseMax(1e-12);
        gmm.weights /= gmm.weights.sum();
    }
    return gmm;
}

GlobalDescriptor fv_encode(const GmmModel& gmm, const LocalFeatureSet& local,
                           const EncodeOptions& options) {
    const Matrix x = to_matrix(local);
    if (x.cols() != gmm.means.cols())
        throw Error("encoding.fv_encode",
                    "dimension mismatch: features are " + std::to_string(x.cols()) +
                        "-d, GMM is " + std::to_string(gmm.means.cols()) + "-d");

    const int k = gmm.k();
    const Eigen::Index d = gmm.dim();
    const Eigen::Index n = x.rows();
    const Matrix sigma = gmm.variances.cwiseSqrt();

    Matrix g_mean = Matrix::Zero(k, d);
    Matrix g_var = Matrix::Zero(k, d);
    Vector log_p(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double lp = std::log(gmm.weights[c]);
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = x(i, j) - gmm.means(c, j);
                lp += -0.5 * (std::log(2.0 * M_PI * gmm.variances(c, j)) +
                              diff * diff / gmm.variances(c, j));
            }
            log_p[c] = lp;
            row_max = std::max(row_max, lp);
        }
        double sum = 0;
        for (int c = 0; c < k; ++c) sum += std::exp(log_p[c] - row_max);
        for (int c = 0; c < k; ++c) {
            const double gamma = std::exp(log_p[c] - row_max) / sum;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double u = (x(i, j) - gmm.means(c, j)) / sigma(c, j);
                g_mean(c, j) += gamma * u;
                g_var(c, j) += gamma * (u * u - 1.0);
            }
        }
    }

    Vector desc(2 * Eigen::Index(k) * d);
    for (int c = 0; c < k; ++c) {
        const double mean_scale = 1.0 / (double(n) * std::sqrt(gmm.weights[c]));
        const double var_scale = 1.0 / (double(n) * std::sqrt(2.0 * gmm.weights[c]));
        for (Eigen::Index j = 0; j < d; ++j) {
            desc[Eigen::Index(c) * d + j] = mean_scale * g_mean(c, j);
            desc[Eigen::Index(k) * d + Eigen::Index(c) * d + j] = var_scale * g_var(c, j);
        }
    }
    apply_signed_sqrt_l2(desc, options);
    return {std::move(desc), EncoderKind::FV};
}

GlobalDescriptor avg_encode(const LocalFeatureSet& local) {
    const Matrix x = to_matrix(local);
    return {x.colwise().mean().transpose(), EncoderKind::AVG};
}

void save_codebook(const Codebook& codebook, const std::string& path) {
    json header;
    header["version"] = 1;
    header["kind"] = "kmeans";
    header["K"] = codebook.k();
    header["D"] = codebook.dim();
    header["seed"] = codebook.seed;
    header["inertia"] = codebook.inertia;
    header["provenance"] = provenance_json(codebook.provenance);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("encoding.save_codebook", "cannot open " + path);
    out << header.dump() << '\n';
    // Payload starts right after the newline: K*D doubles, row-major.
    Eigen::MatrixXd row_major = codebook.centroids;
    for (int r = 0; r < row_major.rows(); ++r)
        write_payload(out, row_major.row(r).eval().data(), std::size_t(row_major.cols()));
    if (!out) throw Error("encoding.save_codebook", "write failed: " + path);
}

Codebook load_codebook(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("encoding.load_codebook", "cannot open " + path);
    std::string line;
    std::getline(in, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception&) {
        throw Error("encoding.load_codebook", "invalid header in " + path);
    }
    if (header.value("version", -1) != 1 || header.value("kind", "") != "kmeans")
        throw Error("encoding.load_codebook", "not a version-1 kmeans codebook: " + path);

    Codebook cb;
    const int k = header.at("K").get<int>();
    const int d = header.at("D").get<int>();
    cb.seed = header.value("seed", 0ULL);
    cb.inertia = header.value("inertia", 0.0);
    cb.provenance = provenance_from_json(header.value("provenance", json::object()));
    cb.centroids.resize(k, d);
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int r = 0; r < k; ++r) {
        read_payload(in, row.data(), row.size(), path);
        for (int c = 0; c < d; ++c) cb.centroids(r, c) = row[std::size_t(c)];
    }
    return cb;
}

void save_gmm(const GmmModel& gmm, const std::string& path) {
    json header;
    header["version"] = 1;
    header["kind"] = "gmm";
    header["K"] = gmm.k();
    header["D"] = gmm.dim();
    header["seed"] = gmm.seed;
    header["variance_floor"] = gmm.variance_floor;
    header["provenance"] = provenance_json(gmm.provenance);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("encoding.save_gmm", "cannot open " + path);
    out << header.dump() << '\n';
    // Payload: K weights, then K*D means, then K*D variances, row-major.
    write_payload(out, gmm.weights.data(), std::size_t(gmm.k()));
    for (int r = 0; r < gmm.k(); ++r)
        write_payload(out, gmm.means.row(r).eval().data(), std::size_t(gmm.dim()));
    for (int r = 0; r < gmm.k(); ++r)
        write_payload(out, gmm.variances.row(r).eval().data(), std::size_t(gmm.dim()));
    if (!out) throw Error("encoding.save_gmm", "write failed: " + path);
}

GmmModel load_gmm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("encoding.load_gmm", "cannot open " + path);
    std::string line;
    std::getline(in, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception&) {
        throw Error("encoding.load_gmm", "invalid header in " + path);
    }
    if (header.value("version", -1) != 1 || header.value("kind", "") != "gmm")
        throw Error("encoding.load_gmm", "not a version-1 gmm file: " + path);

    GmmModel gmm;
    const int k = header.at("K").get<int>();
    const int d = header.at("D").get<int>();
    gmm.seed = header.value("seed", 0ULL);
    gmm.variance_floor = header.value("variance_floor", 0.0);
    gmm.provenance = provenance_from_json(header.value("provenance", json::object()));
    gmm.weights.resize(k);
    read_payload(in, gmm.weights.data(), std::size_t(k), path);
    gmm.means.resize(k, d);
    gmm.variances.resize(k, d);
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int r = 0; r < k; ++r) {
        read_payload(in, row.data(), row.size(), path);
        for (int c = 0; c < d; ++c) gmm.means(r, c) = row[std::size_t(c)];
    }
    for (int r = 0; r < k; ++r) {
        read_payload(in, row.data(), row.size(), path);
        for (int c = 0; c < d; ++c) gmm.variances(r, c) = row[std::size_t(c)];
    }
    return gmm;
}

}  // namespace gridpv
