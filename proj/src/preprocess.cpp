#include "vidlabel/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vidlabel/binary_io.hpp"

namespace vidlabel {

namespace {

constexpr io::Magic kTransformMagic = io::make_magic("YT8MPCA0");
constexpr io::Magic kQuantizerMagic = io::make_magic("YT8MQNT0");

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> as_eigen(const RowMatrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

float next_up(float v) { return std::nextafter(v, std::numeric_limits<float>::infinity()); }
float next_down(float v) { return std::nextafter(v, -std::numeric_limits<float>::infinity()); }

// Index range [first, last) of sorted values falling in [lo, hi).
std::pair<std::size_t, std::size_t> bin_range(const std::vector<double>& sorted, double lo, double hi) {
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), lo);
    const auto last = std::lower_bound(first, sorted.end(), hi);
    return {static_cast<std::size_t>(first - sorted.begin()), static_cast<std::size_t>(last - sorted.begin())};
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fits one dimension: quantile initialization then Lloyd-Max refinement on the sorted sample.
void fit_dimension(std::vector<double>& sorted, int lloyd_iterations, std::span<float> out_bounds,
                   std::span<float> out_levels) {
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

    std::vector<double> bounds(kQuantBoundaries);
    for (std::size_t k = 0; k < kQuantBoundaries; ++k) bounds[k] = sorted[std::min(n - 1, (k + 1) * n / kQuantLevels)];

    auto lower = [&](const std::vector<double>& b, std::size_t bin) { return bin == 0 ? -kInf : b[bin - 1]; };
    auto upper = [&](const std::vector<double>& b, std::size_t bin) { return bin == kQuantBoundaries ? kInf : b[bin]; };

    std::vector<double> levels(kQuantLevels);
    auto update_levels = [&](const std::vector<double>& b) {
        for (std::size_t bin = 0; bin < kQuantLevels; ++bin) {
            const double lo = lower(b, bin), hi = upper(b, bin);
            const auto [first, last] = bin_range(sorted, lo, hi);
            if (last > first) {
                levels[bin] = (prefix[last] - prefix[first]) / static_cast<double>(last - first);
            } else if (bin == 0) {
                levels[bin] = hi;
            } else if (bin == kQuantBoundaries) {
                levels[bin] = lo;
            } else {
                levels[bin] = 0.5 * (lo + hi);
            }
        }
    };

    for (int it = 0; it < lloyd_iterations; ++it) {
        update_levels(bounds);
        bool moved = false;
        for (std::size_t k = 0; k < kQuantBoundaries; ++k) {
            const double mid = 0.5 * (levels[k] + levels[k + 1]);
            if (mid != bounds[k]) moved = true;
            bounds[k] = mid;
        }
        if (!moved) break;
    }

    // Storage is 32-bit: enforce strict monotonicity in float, then recompute levels inside
    // the final float bins so that every level lies in its own bin.
    for (std::size_t k = 0; k < kQuantBoundaries; ++k) {
        float b = static_cast<float>(bounds[k]);
        if (k > 0 && !(b > out_bounds[k - 1])) b = next_up(out_bounds[k - 1]);
        out_bounds[k] = b;
    }
    std::vector<double> final_bounds(out_bounds.begin(), out_bounds.end());
    for (std::size_t bin = 0; bin < kQuantLevels; ++bin) {
        const double lo = lower(final_bounds, bin), hi = upper(final_bounds, bin);
        const auto [first, last] = bin_range(sorted, lo, hi);
        double level;
        if (last > first) {
            level = (prefix[last] - prefix[first]) / static_cast<double>(last - first);
        } else if (bin == 0) {
            level = hi;
        } else if (bin == kQuantBoundaries) {
            level = lo;
        } else {
            level = 0.5 * (lo + hi);
        }
        float v = static_cast<float>(level);
        // Clamp into [lo, hi) in float arithmetic.
        if (bin > 0 && v < out_bounds[bin - 1]) v = out_bounds[bin - 1];
        if (bin < kQuantBoundaries && !(v < out_bounds[bin])) v = next_down(out_bounds[bin]);
        out_levels[bin] = v;
    }
}

}  // namespace

WhiteningTransform fit_whitening(const RowMatrix& sample, std::size_t output_dim, double epsilon) {
    const std::size_t n = sample.rows();
    const std::size_t d = sample.cols();
    if (output_dim < 1 || output_dim > d)
        throw UsageError("whitening output dim must lie in [1, " + std::to_string(d) + "]");
    if (n < output_dim + 1)
        throw UsageError("whitening needs at least d_out + 1 = " + std::to_string(output_dim + 1) + " samples");

    const auto x = as_eigen(sample);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMajorMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
    const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
    const Eigen::MatrixXd& evecs = solver.eigenvectors();

    const double lambda_max = std::max(evals(static_cast<Eigen::Index>(d) - 1), 0.0);
    const double mean_sq = mean.squaredNorm() / static_cast<double>(d);
    const double tolerance = 1e-12 * static_cast<double>(d) * std::max(lambda_max, mean_sq);
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < evals.size(); ++i)
        if (evals(i) > tolerance && evals(i) > 0.0) ++rank;
    if (output_dim > rank)
        throw RankDeficientError("rank-deficient covariance: requested d_out=" + std::to_string(output_dim) +
                                     " but effective rank is " + std::to_string(rank),
                                 rank);

    WhiteningTransform t;
    t.input_dim = d;
    t.output_dim = output_dim;
    t.mean.assign(mean.data(), mean.data() + d);
    t.matrix.resize(output_dim * d);
    t.eigenvalues.resize(output_dim);
    for (std::size_t r = 0; r < output_dim; ++r) {
        const auto col = static_cast<Eigen::Index>(d - 1 - r);
        Eigen::VectorXd v = evecs.col(col);
        // Sign convention: largest-magnitude component positive.
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        const double lambda = evals(col);
        const double s = 1.0 / std::sqrt(lambda + epsilon);
        for (std::size_t c = 0; c < d; ++c) t.matrix[r * d + c] = s * v(static_cast<Eigen::Index>(c));
        t.eigenvalues[r] = lambda;
    }
    return t;
}

FlaggedVector apply_whitening(const WhiteningTransform& t, std::span<const double> x, bool l2_normalize_output) {
    if (x.size() != t.input_dim)
        throw DataError("whitening input has dimension " + std::to_string(x.size()) + ", expected " +
                        std::to_string(t.input_dim));
    std::vector<double> centered(t.input_dim);
    for (std::size_t j = 0; j < t.input_dim; ++j) centered[j] = x[j] - t.mean[j];
    FlaggedVector out;
    out.values.resize(t.output_dim);
    for (std::size_t r = 0; r < t.output_dim; ++r) out.values[r] = dot(t.row(r), centered);
    if (l2_normalize_output && !l2_normalize(out.values)) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        out.degenerate = true;
    }
    return out;
}

Quantizer fit_quantizer(const RowMatrix& values, int lloyd_iterations) {
    if (values.rows() == 0 || values.cols() == 0) throw UsageError("quantizer needs at least one sample per dimension");
    Quantizer q;
    q.dim = values.cols();
    q.boundaries.resize(q.dim * kQuantBoundaries);
    q.levels.resize(q.dim * kQuantLevels);
    std::vector<double> column(values.rows());
    for (std::size_t j = 0; j < q.dim; ++j) {
        for (std::size_t i = 0; i < values.rows(); ++i) column[i] = values(i, j);
        fit_dimension(column, lloyd_iterations,
                      std::span<float>(q.boundaries.data() + j * kQuantBoundaries, kQuantBoundaries),
                      std::span<float>(q.levels.data() + j * kQuantLevels, kQuantLevels));
    }
    return q;
}

std::vector<std::uint8_t> quantize(const Quantizer& q, std::span<const double> x) {
    if (x.size() != q.dim) throw DataError("quantizer dimension mismatch");
    std::vector<std::uint8_t> codes(q.dim);
    for (std::size_t j = 0; j < q.dim; ++j) {
        const auto b = q.boundaries_of(j);
        const auto it = std::upper_bound(b.begin(), b.end(), x[j],
                                         [](double v, float bound) { return v < static_cast<double>(bound); });
        codes[j] = static_cast<std::uint8_t>(it - b.begin());
    }
    return codes;
}

std::vector<double> dequantize(const Quantizer& q, std::span<const std::uint8_t> codes) {
    if (codes.size() != q.dim) throw DataError("quantizer dimension mismatch");
    std::vector<double> out(q.dim);
    for (std::size_t j = 0; j < q.dim; ++j) out[j] = q.levels_of(j)[codes[j]];
    return out;
}

ReluReconstructor::ReluReconstructor(const WhiteningTransform& t, const Quantizer& q)
    : quantizer_(q), mean_(t.mean), input_dim_(t.input_dim), output_dim_(t.output_dim) {
    if (q.dim != t.output_dim) throw DataError("quantizer dimension differs from whitening output dimension");
    const Eigen::Map<const RowMajorMatrix> a(t.matrix.data(), static_cast<Eigen::Index>(output_dim_),
                                             static_cast<Eigen::Index>(input_dim_));
    const Eigen::MatrixXd gram = a * a.transpose();
    uses_transpose_ = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-9;

    RowMajorMatrix inv;
    if (uses_transpose_) {
        inv = a.transpose();
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const double cutoff = 1e-12 * sv.maxCoeff() * static_cast<double>(std::max(input_dim_, output_dim_));
        if (output_dim_ == input_dim_ && sv.minCoeff() <= cutoff)
            throw NumericalError("singular whitening matrix: cannot invert PCA");
        Eigen::VectorXd inv_sv = sv;
        for (Eigen::Index i = 0; i < sv.size(); ++i) inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
        inv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    }
    inverse_.assign(inv.data(), inv.data() + inv.size());
}

std::vector<double> ReluReconstructor::unwhiten(std::span<const double> z) const {
    if (z.size() != output_dim_) throw DataError("whitened vector has the wrong dimension");
    std::vector<double> x(mean_);
    for (std::size_t i = 0; i < input_dim_; ++i) {
        const std::span<const double> row(inverse_.data() + i * output_dim_, output_dim_);
        x[i] += dot(row, z);
    }
    return x;
}

std::vector<double> ReluReconstructor::operator()(std::span<const std::uint8_t> codes) const {
    return unwhiten(dequantize(quantizer_, codes));
}

std::vector<double> reconstruct_relu(const WhiteningTransform& t, const Quantizer& q,
                                     std::span<const std::uint8_t> codes) {
    return ReluReconstructor(t, q)(codes);
}

void save_transform(const WhiteningTransform& t, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.magic(kTransformMagic);
    w.u32(static_cast<std::uint32_t>(t.input_dim));
    w.u32(static_cast<std::uint32_t>(t.output_dim));
    for (double v : t.mean) w.f32(static_cast<float>(v));
    for (double v : t.matrix) w.f32(static_cast<float>(v));
    w.finish();
}

WhiteningTransform load_transform(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kTransformMagic);
    WhiteningTransform t;
    t.input_dim = r.u32();
    t.output_dim = r.u32();
    if (t.output_dim == 0 || t.output_dim > t.input_dim) throw DataError("invalid transform dims in " + path.string());
    if (r.remaining() != 4 * (t.input_dim + t.input_dim * t.output_dim))
        throw DataError("truncated file: " + path.string());
    t.mean.resize(t.input_dim);
    for (auto& v : t.mean) v = r.f32();
    t.matrix.resize(t.input_dim * t.output_dim);
    for (auto& v : t.matrix) {
        v = r.f32();
        if (!std::isfinite(v)) throw DataError("non-finite whitening matrix entry in " + path.string());
    }
    return t;
}

void save_quantizer(const Quantizer& q, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.magic(kQuantizerMagic);
    w.u32(static_cast<std::uint32_t>(q.dim));
    for (std::size_t j = 0; j < q.dim; ++j) {
        for (float b : q.boundaries_of(j)) w.f32(b);
        for (float l : q.levels_of(j)) w.f32(l);
    }
    w.finish();
}

Quantizer load_quantizer(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kQuantizerMagic);
    Quantizer q;
    q.dim = r.u32();
    if (r.remaining() != q.dim * (kQuantBoundaries + kQuantLevels) * 4) throw DataError("truncated file: " + path.string());
    q.boundaries.resize(q.dim * kQuantBoundaries);
    q.levels.resize(q.dim * kQuantLevels);
    for (std::size_t j = 0; j < q.dim; ++j) {
        for (std::size_t k = 0; k < kQuantBoundaries; ++k) q.boundaries[j * kQuantBoundaries + k] = r.f32();
        for (std::size_t k = 0; k < kQuantLevels; ++k) q.levels[j * kQuantLevels + k] = r.f32();
        const auto b = q.boundaries_of(j);
        for (std::size_t k = 1; k < b.size(); ++k)
            if (!(b[k] > b[k - 1])) throw DataError("quantizer boundaries not strictly increasing in " + path.string());
    }
    return q;
}

}  // namespace vidlabel
