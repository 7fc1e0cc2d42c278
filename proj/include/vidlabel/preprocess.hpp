#pragma once

// PCA whitening, L2 normalization, per-dimension 8-bit scalar quantization and
// the inverse path back to the original activation space.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vidlabel/common.hpp"

namespace vidlabel {

/// z = A (x - mean), optionally followed by L2 normalization.
struct WhiteningTransform {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<double> mean;    // input_dim
    std::vector<double> matrix;  // output_dim x input_dim, row-major
    // Eigenvalues of the fitting covariance for the retained directions (decreasing).
    // Not serialized.
    std::vector<double> eigenvalues;

    std::span<const double> row(std::size_t i) const { return {matrix.data() + i * input_dim, input_dim}; }
};

inline constexpr double kWhiteningEpsilon = 1e-8;

/// PCA on the population covariance of `sample`; rows of A are eigenvectors scaled by
/// 1/sqrt(lambda + epsilon), ordered by decreasing variance. Throws RankDeficientError
/// when output_dim exceeds the numerical rank of the covariance.
WhiteningTransform fit_whitening(const RowMatrix& sample, std::size_t output_dim,
                                 double epsilon = kWhiteningEpsilon);

// `degenerate` is set when l2_normalize is requested but A(x - mean) is exactly zero;
// the zero vector is returned in that case.
FlaggedVector apply_whitening(const WhiteningTransform& t, std::span<const double> x, bool l2_normalize);

inline constexpr std::size_t kQuantLevels = 256;
inline constexpr std::size_t kQuantBoundaries = kQuantLevels - 1;

/// Per-dimension non-uniform quantizer. Bin b of dimension j is
/// [boundary(j, b-1), boundary(j, b)) with the outer bins open-ended.
struct Quantizer {
    std::size_t dim = 0;
    std::vector<float> boundaries;  // dim x 255, strictly increasing per dimension
    std::vector<float> levels;      // dim x 256 reconstruction values

    std::span<const float> boundaries_of(std::size_t j) const {
        return {boundaries.data() + j * kQuantBoundaries, kQuantBoundaries};
    }
    std::span<const float> levels_of(std::size_t j) const { return {levels.data() + j * kQuantLevels, kQuantLevels}; }
};

inline constexpr int kDefaultLloydIterations = 100;

/// Equal-mass (empirical 1/256 quantile) bins refined with Lloyd-Max iterations until the
/// boundaries stop moving or `lloyd_iterations` is reached. `values` holds one sample per row.
Quantizer fit_quantizer(const RowMatrix& values, int lloyd_iterations = kDefaultLloydIterations);

std::vector<std::uint8_t> quantize(const Quantizer& q, std::span<const double> x);
std::vector<double> dequantize(const Quantizer& q, std::span<const std::uint8_t> codes);

/// Inverts quantization and whitening: x = A^+ z + mean. A^T is used when A has orthonormal
/// rows; otherwise the Moore-Penrose pseudo-inverse. The inverse is computed once per instance.
/// Throws NumericalError for a singular square A.
class ReluReconstructor {
public:
    ReluReconstructor(const WhiteningTransform& t, const Quantizer& q);

    std::vector<double> operator()(std::span<const std::uint8_t> codes) const;
    // Inverse of the whitening step alone.
    std::vector<double> unwhiten(std::span<const double> z) const;

    bool uses_transpose() const noexcept { return uses_transpose_; }

private:
    Quantizer quantizer_;
    std::vector<double> mean_;
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
    std::vector<double> inverse_;  // input_dim x output_dim, row-major
    bool uses_transpose_ = false;
};

std::vector<double> reconstruct_relu(const WhiteningTransform& t, const Quantizer& q,
                                     std::span<const std::uint8_t> codes);

void save_transform(const WhiteningTransform& t, const std::filesystem::path& path);
WhiteningTransform load_transform(const std::filesystem::path& path);
void save_quantizer(const Quantizer& q, const std::filesystem::path& path);
Quantizer load_quantizer(const std::filesystem::path& path);

}  // namespace vidlabel
