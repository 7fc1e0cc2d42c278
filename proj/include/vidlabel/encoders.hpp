#pragma once

// Fisher Vector and VLAD video encodings plus the GMM / k-means codebooks they use.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vidlabel/common.hpp"

namespace vidlabel {

/// Diagonal-covariance Gaussian mixture.
struct GmmCodebook {
    std::size_t components = 0;
    std::size_t dim = 0;
    std::vector<double> weights;    // N, sum to 1
    std::vector<double> means;      // N x D
    std::vector<double> variances;  // N x D

    std::span<const double> mean(std::size_t i) const { return {means.data() + i * dim, dim}; }
    std::span<const double> variance(std::size_t i) const { return {variances.data() + i * dim, dim}; }
};

struct KmeansCodebook {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> centers;  // k x D

    std::span<const double> center(std::size_t i) const { return {centers.data() + i * dim, dim}; }
};

struct KmeansFit {
    KmeansCodebook codebook;
    std::vector<double> sse;  // within-cluster SSE after each assignment step
    std::size_t iterations = 0;
    std::size_t reseeded = 0;  // empty clusters moved to the farthest point
};

inline constexpr int kMaxCodebookIterations = 100;

/// k-means++ seeding followed by Lloyd iterations until the assignment stops changing.
KmeansFit fit_kmeans(const RowMatrix& sample, std::size_t k, std::uint64_t seed,
                     int max_iterations = kMaxCodebookIterations);

// Index of the nearest center; ties go to the lowest index.
std::size_t nearest_center(const KmeansCodebook& cb, std::span<const double> x);

struct GmmFit {
    GmmCodebook codebook;
    std::vector<double> log_likelihood;  // mean per-sample log-likelihood after each EM step
    std::size_t iterations = 0;
    bool reseeded = false;
};

inline constexpr double kGmmRelativeTolerance = 1e-6;
inline constexpr double kVarianceFloorFraction = 1e-4;

/// EM for a diagonal GMM initialized from k-means. Variances are floored at
/// 1e-4 x the per-dimension sample variance. An empty component is reseeded once;
/// a second collapse throws NumericalError.
GmmFit fit_gmm(const RowMatrix& sample, std::size_t components, std::uint64_t seed,
               int max_iterations = kMaxCodebookIterations);

// Posterior responsibilities gamma_i(x), computed in log space.
std::vector<double> gmm_posteriors(const GmmCodebook& gmm, std::span<const double> x);

/// [tau_mu_1 .. tau_mu_N, tau_sigma_1 .. tau_sigma_N], length 2 N D.
std::vector<double> encode_fisher(const RowMatrix& frames, const GmmCodebook& gmm);

/// Residual sums per nearest center, each block L2-normalized, then the whole vector
/// L2-normalized; length k D. `degenerate` marks an all-zero encoding.
FlaggedVector encode_vlad(const RowMatrix& frames, const KmeansCodebook& cb);

void save_gmm(const GmmCodebook& gmm, const std::filesystem::path& path);
GmmCodebook load_gmm(const std::filesystem::path& path);
void save_kmeans(const KmeansCodebook& cb, const std::filesystem::path& path);
KmeansCodebook load_kmeans(const std::filesystem::path& path);

}  // namespace vidlabel
