#include "vidlabel/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "vidlabel/binary_io.hpp"

namespace vidlabel {

namespace {

constexpr io::Magic kGmmMagic = io::make_magic("YT8MGMM0");
constexpr io::Magic kKmeansMagic = io::make_magic("YT8MKMS0");

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

std::vector<double> column_variance(const RowMatrix& sample) {
    const std::size_t n = sample.rows(), d = sample.cols();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += sample(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double r = sample(i, j) - mean[j];
            var[j] += r * r;
        }
    for (double& v : var) v /= static_cast<double>(n);
    return var;
}

// k-means++ seeding. Zero-distance points are never picked twice unless every
// remaining point coincides with a center, in which case the lowest unused index wins.
std::vector<double> seed_plus_plus(const RowMatrix& sample, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = sample.rows(), d = sample.cols();
    std::vector<double> centers;
    centers.reserve(k * d);
    std::vector<bool> used(n, false);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t pick = first(rng);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (double v : dist) total += v;
            if (total > 0.0) {
                const double target = unit(rng) * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += dist[i];
                    if (acc > target && dist[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
                // Floating round-off at the tail of the cumulative sum.
                while (dist[pick] == 0.0 && pick > 0) --pick;
            } else {
                pick = static_cast<std::size_t>(std::find(used.begin(), used.end(), false) - used.begin());
            }
        }
        used[pick] = true;
        const auto row = sample.row(pick);
        centers.insert(centers.end(), row.begin(), row.end());
        const std::span<const double> center(centers.data() + c * d, d);
        for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], squared_distance(sample.row(i), center));
    }
    return centers;
}

double log_gaussian_diag(std::span<const double> x, std::span<const double> mean, std::span<const double> var) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double r = x[j] - mean[j];
        s += std::log(2.0 * std::numbers::pi * var[j]) + r * r / var[j];
    }
    return -0.5 * s;
}

// Fills log(w_i N(x | i)) and returns log p(x).
double component_log_joint(const GmmCodebook& gmm, std::span<const double> x, std::span<double> out) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gmm.components; ++i) {
        out[i] = std::log(gmm.weights[i]) + log_gaussian_diag(x, gmm.mean(i), gmm.variance(i));
        best = std::max(best, out[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < gmm.components; ++i) s += std::exp(out[i] - best);
    return best + std::log(s);
}

}  // namespace

std::size_t nearest_center(const KmeansCodebook& cb, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cb.k; ++c) {
        const double d = squared_distance(x, cb.center(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

KmeansFit fit_kmeans(const RowMatrix& sample, std::size_t k, std::uint64_t seed, int max_iterations) {
    const std::size_t n = sample.rows(), d = sample.cols();
    if (k < 1) throw UsageError("k-means needs k >= 1");
    if (n < k) throw UsageError("k-means needs at least k samples");

    std::mt19937_64 rng(mix_seed(seed, 0x4B4Du));
    KmeansFit fit;
    fit.codebook.k = k;
    fit.codebook.dim = d;
    fit.codebook.centers = seed_plus_plus(sample, k, rng);

    std::vector<std::size_t> assign(n, k), previous;
    std::vector<double> point_dist(n);
    for (int it = 0; it < max_iterations; ++it) {
        previous = assign;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = nearest_center(fit.codebook, sample.row(i));
            point_dist[i] = squared_distance(sample.row(i), fit.codebook.center(assign[i]));
            sse += point_dist[i];
        }
        fit.sse.push_back(sse);
        fit.iterations = static_cast<std::size_t>(it) + 1;
        if (assign == previous) break;

        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            const auto row = sample.row(i);
            for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += row[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < d; ++j)
                fit.codebook.centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            // Move the empty center onto the point currently farthest from its own center.
            const auto far = static_cast<std::size_t>(std::max_element(point_dist.begin(), point_dist.end()) -
                                                      point_dist.begin());
            const auto row = sample.row(far);
            std::copy(row.begin(), row.end(), fit.codebook.centers.begin() + static_cast<std::ptrdiff_t>(c * d));
            point_dist[far] = 0.0;
            ++fit.reseeded;
        }
    }
    return fit;
}

std::vector<double> gmm_posteriors(const GmmCodebook& gmm, std::span<const double> x) {
    if (x.size() != gmm.dim) throw DataError("GMM dimension mismatch");
    std::vector<double> log_joint(gmm.components);
    const double log_px = component_log_joint(gmm, x, log_joint);
    for (double& v : log_joint) v = std::exp(v - log_px);
    return log_joint;
}

GmmFit fit_gmm(const RowMatrix& sample, std::size_t components, std::uint64_t seed, int max_iterations) {
    const std::size_t n = sample.rows(), d = sample.cols();
    if (components < 1) throw UsageError("GMM needs at least one component");
    if (n < 10 * components) throw UsageError("GMM fitting needs at least 10 samples per component");

    const std::vector<double> global_var = column_variance(sample);
    std::vector<double> floor(d);
    for (std::size_t j = 0; j < d; ++j) floor[j] = std::max(kVarianceFloorFraction * global_var[j], 1e-12);

    const KmeansFit init = fit_kmeans(sample, components, seed);
    GmmFit fit;
    GmmCodebook& g = fit.codebook;
    g.components = components;
    g.dim = d;
    g.means = init.codebook.centers;
    g.weights.assign(components, 0.0);
    g.variances.assign(components * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = nearest_center(init.codebook, sample.row(i));
        g.weights[c] += 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double r = sample(i, j) - g.means[c * d + j];
            g.variances[c * d + j] += r * r;
        }
    }
    for (std::size_t c = 0; c < components; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            const double v = g.weights[c] > 0 ? g.variances[c * d + j] / g.weights[c] : global_var[j];
            g.variances[c * d + j] = std::max(v, floor[j]);
        }
        g.weights[c] = std::max(g.weights[c], 1.0) / static_cast<double>(n);
    }
    double wsum = 0.0;
    for (double w : g.weights) wsum += w;
    for (double& w : g.weights) w /= wsum;

    std::mt19937_64 rng(mix_seed(seed, 0x6A4Du));
    RowMatrix resp(n, components);
    std::vector<double> log_joint(components);
    for (int it = 0; it <= max_iterations; ++it) {
        // E-step at the current parameters.
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double log_px = component_log_joint(g, sample.row(i), log_joint);
            ll += log_px;
            for (std::size_t c = 0; c < components; ++c) resp(i, c) = std::exp(log_joint[c] - log_px);
        }
        ll /= static_cast<double>(n);
        if (!std::isfinite(ll)) throw NumericalError("GMM log-likelihood is not finite");
        const bool converged =
            !fit.log_likelihood.empty() && (ll - fit.log_likelihood.back()) < kGmmRelativeTolerance * std::abs(fit.log_likelihood.back());
        fit.log_likelihood.push_back(ll);
        if (converged || it == max_iterations) break;

        // M-step.
        std::vector<double> mass(components, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < components; ++c) mass[c] += resp(i, c);
        for (std::size_t c = 0; c < components; ++c) {
            if (mass[c] < 1e-10 * static_cast<double>(n)) {
                if (fit.reseeded) throw NumericalError("GMM component " + std::to_string(c) + " collapsed twice");
                fit.reseeded = true;
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                const auto row = sample.row(pick(rng));
                for (std::size_t j = 0; j < d; ++j) {
                    g.means[c * d + j] = row[j];
                    g.variances[c * d + j] = std::max(global_var[j], floor[j]);
                }
                g.weights[c] = 1.0 / static_cast<double>(components);
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                double m = 0.0;
                for (std::size_t i = 0; i < n; ++i) m += resp(i, c) * sample(i, j);
                m /= mass[c];
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = sample(i, j) - m;
                    v += resp(i, c) * r * r;
                }
                g.means[c * d + j] = m;
                g.variances[c * d + j] = std::max(v / mass[c], floor[j]);
            }
            g.weights[c] = mass[c] / static_cast<double>(n);
        }
        wsum = 0.0;
        for (double w : g.weights) wsum += w;
        for (double& w : g.weights) w /= wsum;
        fit.iterations = static_cast<std::size_t>(it) + 1;
    }
    return fit;
}

std::vector<double> encode_fisher(const RowMatrix& frames, const GmmCodebook& gmm) {
    if (frames.rows() == 0) throw DataError("Fisher encoding needs at least one frame");
    if (frames.cols() != gmm.dim) throw DataError("Fisher encoding dimension mismatch");
    const std::size_t n = gmm.components, d = gmm.dim, t_count = frames.rows();
    std::vector<double> out(2 * n * d, 0.0);
    std::vector<double> sigma(n * d);
    for (std::size_t k = 0; k < n * d; ++k) sigma[k] = std::sqrt(gmm.variances[k]);

    for (std::size_t t = 0; t < t_count; ++t) {
        const auto x = frames.row(t);
        const auto gamma = gmm_posteriors(gmm, x);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double u = (x[j] - gmm.means[i * d + j]) / sigma[i * d + j];
                out[i * d + j] += gamma[i] * u;
                out[n * d + i * d + j] += gamma[i] * (u * u - 1.0);
            }
        }
    }
    const double t_real = static_cast<double>(t_count);
    for (std::size_t i = 0; i < n; ++i) {
        const double mu_scale = 1.0 / (t_real * std::sqrt(gmm.weights[i]));
        const double sigma_scale = 1.0 / (t_real * std::sqrt(2.0 * gmm.weights[i]));
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] *= mu_scale;
            out[n * d + i * d + j] *= sigma_scale;
        }
    }
    return out;
}

FlaggedVector encode_vlad(const RowMatrix& frames, const KmeansCodebook& cb) {
    if (frames.rows() == 0) throw DataError("VLAD encoding needs at least one frame");
    if (frames.cols() != cb.dim) throw DataError("VLAD encoding dimension mismatch");
    const std::size_t d = cb.dim;
    FlaggedVector out;
    out.values.assign(cb.k * d, 0.0);
    for (std::size_t t = 0; t < frames.rows(); ++t) {
        const auto x = frames.row(t);
        const std::size_t c = nearest_center(cb, x);
        const auto center = cb.center(c);
        for (std::size_t j = 0; j < d; ++j) out.values[c * d + j] += x[j] - center[j];
    }
    for (std::size_t c = 0; c < cb.k; ++c) l2_normalize(std::span<double>(out.values.data() + c * d, d));
    out.degenerate = !l2_normalize(out.values);
    return out;
}

void save_gmm(const GmmCodebook& gmm, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.magic(kGmmMagic);
    w.u32(static_cast<std::uint32_t>(gmm.components));
    w.u32(static_cast<std::uint32_t>(gmm.dim));
    for (double v : gmm.weights) w.f32(static_cast<float>(v));
    for (double v : gmm.means) w.f32(static_cast<float>(v));
    for (double v : gmm.variances) w.f32(static_cast<float>(v));
    w.finish();
}

GmmCodebook load_gmm(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kGmmMagic);
    GmmCodebook g;
    g.components = r.u32();
    g.dim = r.u32();
    if (r.remaining() != 4 * (g.components + 2 * g.components * g.dim)) throw DataError("truncated file: " + path.string());
    g.weights.resize(g.components);
    for (auto& v : g.weights) v = r.f32();
    g.means.resize(g.components * g.dim);
    for (auto& v : g.means) v = r.f32();
    g.variances.resize(g.components * g.dim);
    for (auto& v : g.variances) {
        v = r.f32();
        if (!(v > 0.0)) throw DataError("non-positive GMM variance in " + path.string());
    }
    return g;
}

void save_kmeans(const KmeansCodebook& cb, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.magic(kKmeansMagic);
    w.u32(static_cast<std::uint32_t>(cb.k));
    w.u32(static_cast<std::uint32_t>(cb.dim));
    for (double v : cb.centers) w.f32(static_cast<float>(v));
    w.finish();
}

KmeansCodebook load_kmeans(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kKmeansMagic);
    KmeansCodebook cb;
    cb.k = r.u32();
    cb.dim = r.u32();
    if (cb.k == 0 || r.remaining() != 4 * cb.k * cb.dim) throw DataError("truncated file: " + path.string());
    cb.centers.resize(cb.k * cb.dim);
    for (auto& v : cb.centers) v = r.f32();
    return cb;
}

}  // namespace vidlabel
