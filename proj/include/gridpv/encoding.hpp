#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "gridpv/features.hpp"

namespace gridpv {

using Matrix = Eigen::MatrixXd;  // rows = samples
using Vector = Eigen::VectorXd;

struct CodebookProvenance {
    std::vector<std::string> cities;
    std::string extractor;
};

struct Codebook {
    Matrix centroids;  // K x D
    std::uint64_t seed = 0;
    double inertia = 0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
    CodebookProvenance provenance;

    int k() const { return int(centroids.rows()); }
    int dim() const { return int(centroids.cols()); }
};

struct GmmModel {
    Vector weights;    // K, sums to 1
    Matrix means;      // K x D
    Matrix variances;  // K x D diagonal, >= floor
    std::uint64_t seed = 0;
    double variance_floor = 0;
    std::vector<double> loglik_history;  // average log-likelihood per EM iteration
    CodebookProvenance provenance;

    int k() const { return int(means.rows()); }
    int dim() const { return int(means.cols()); }
};

enum class EncoderKind { VLAD, FV, AVG, BR };
const char* encoder_name(EncoderKind k);
EncoderKind parse_encoder(const std::string& s);

struct GlobalDescriptor {
    Vector values;
    EncoderKind encoder = EncoderKind::VLAD;
};

struct EncodeOptions {
    bool signed_sqrt = true;  // elementwise sign(v)*sqrt(|v|)
    bool l2_normalize = true;
};

/// Lloyd's k-means with seeded k-means++ initialization. Iterates until the
/// largest centroid shift drops below tol or max_iter is hit; empty clusters
/// are reseeded to the point currently farthest from its centroid. Inertia is
/// tracked per iteration and must be non-increasing.
Codebook kmeans_fit(const Matrix& vectors, int k, std::uint64_t seed, int max_iter = 100,
                    double tol = 1e-6);

/// Hard-assigns each local vector to its nearest centroid (lowest index wins
/// ties), accumulates per-centroid residual sums into a K*D descriptor, then
/// applies signed square root and global L2 normalization per options.
GlobalDescriptor vlad_encode(const Codebook& codebook, const LocalFeatureSet& local,
                             const EncodeOptions& options = {});

/// Diagonal-covariance GMM fitted by EM from a k-means start. Stops when the
/// average log-likelihood gain falls below tol. Variances are clamped to
/// variance_floor_rel times the mean per-dimension data variance each M-step.
GmmModel gmm_fit(const Matrix& vectors, int k, std::uint64_t seed, int max_iter = 100,
                 double tol = 1e-8, double variance_floor_rel = 1e-6);

/// Fisher vector of the local set under the GMM: per-component mean and
/// variance gradient blocks with the standard Fisher normalization,
/// concatenated to length 2*K*D, then signed sqrt + L2 per options.
GlobalDescriptor fv_encode(const GmmModel& gmm, const LocalFeatureSet& local,
                           const EncodeOptions& options = {});

/// Elementwise mean of the local vectors; no normalization.
GlobalDescriptor avg_encode(const LocalFeatureSet& local);

/// Converts a LocalFeatureSet to a sample matrix (one row per local vector).
Matrix to_matrix(const LocalFeatureSet& set);

// Serialized as one JSON header line {version, kind, K, D, seed, provenance,
// ...} followed by little-endian 64-bit floats: centroids row-major for
// k-means files, weights then means then variances for GMM files.
void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);
void save_gmm(const GmmModel& gmm, const std::string& path);
GmmModel load_gmm(const std::string& path);

}  // namespace gridpv
