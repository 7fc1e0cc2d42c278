#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace vidlabel::reference {

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths) {
    std::vector<int> all, pos;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int b = score_bucket(scores[i]);
        all.push_back(b);
        if (truths[i]) pos.push_back(b);
    }
    if (pos.empty()) return std::nullopt;
    std::sort(all.begin(), all.end());
    std::sort(pos.begin(), pos.end());
    auto at_least = [](const std::vector<int>& sorted, int j) {
        return static_cast<std::uint64_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), j));
    };
    const double total = static_cast<double>(pos.size());
    double ap = 0.0;
    for (int j = 1; j <= kScoreBuckets; ++j) {
        const std::uint64_t n = at_least(all, j);
        if (n == 0) continue;
        const std::uint64_t tp = at_least(pos, j);
        const std::uint64_t tp_next = j == kScoreBuckets ? 0 : at_least(pos, j + 1);
        const double precision = static_cast<double>(tp) / static_cast<double>(n);
        const double recall_here = static_cast<double>(tp) / total;
        const double recall_next = static_cast<double>(tp_next) / total;
        ap += precision * (recall_here - recall_next);
    }
    return ap;
}

MapResult mean_average_precision(const PredictionSet& p) {
    MapResult r;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < p.label_count(); ++l) {
        std::vector<double> s;
        std::vector<std::uint8_t> t;
        for (std::size_t v = 0; v < p.video_count(); ++v) {
            s.push_back(p.scores(v)[l]);
            const auto& g = p.truth(v);
            t.push_back(std::find(g.begin(), g.end(), static_cast<LabelId>(l)) != g.end());
        }
        r.per_class.push_back(average_precision(s, t));
        if (r.per_class.back()) {
            sum += *r.per_class.back();
            ++used;
        } else {
            ++r.skipped;
        }
    }
    r.map = used ? sum / static_cast<double>(used) : 0.0;
    return r;
}

std::size_t rank_of(std::span<const double> scores, LabelId label) {
    std::size_t rank = 1;
    for (std::size_t l = 0; l < scores.size(); ++l) {
        if (scores[l] > scores[label] || (scores[l] == scores[label] && l < label)) ++rank;
    }
    return rank;
}

std::optional<double> hit_at_k(const PredictionSet& p, std::size_t k, bool include_empty) {
    std::size_t hits = 0, counted = 0;
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        const auto& g = p.truth(v);
        if (g.empty() && !include_empty) continue;
        ++counted;
        bool hit = false;
        for (LabelId e : g) hit = hit || rank_of(p.scores(v), e) <= k;
        if (hit) ++hits;
    }
    if (counted == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(counted);
}

std::optional<double> perr(const PredictionSet& p) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        const auto& g = p.truth(v);
        if (g.empty()) continue;
        std::size_t found = 0;
        for (LabelId e : g)
            if (rank_of(p.scores(v), e) <= g.size()) ++found;
        sum += static_cast<double>(found) / static_cast<double>(g.size());
        ++counted;
    }
    if (counted == 0) return std::nullopt;
    return sum / static_cast<double>(counted);
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& loss,
                                      std::vector<double> params, double h) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss(params);
        params[i] = saved - h;
        const double down = loss(params);
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

namespace {

long double dot_ld(std::span<const double> a, std::span<const double> b) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
    return s;
}

}  // namespace

std::vector<long double> moe_gating(const MoEModel& m, std::span<const double> x) {
    std::vector<long double> e(m.experts + 1);
    long double z = 1.0L;
    for (std::size_t h = 0; h < m.experts; ++h) {
        e[h] = std::exp(dot_ld(m.gating(h), x));
        z += e[h];
    }
    e[m.experts] = 1.0L;
    for (auto& v : e) v /= z;
    return e;
}

long double moe_predict(const MoEModel& m, std::span<const double> x) {
    const auto gate = reference::moe_gating(m, x);
    long double p = 0.0L;
    for (std::size_t h = 0; h < m.experts; ++h) p += gate[h] / (1.0L + std::exp(-dot_ld(m.expert(h), x)));
    return p;
}

MeanStd mean_std(const RowMatrix& frames) {
    const std::size_t f = frames.rows(), d = frames.cols();
    MeanStd r{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t j = 0; j < d; ++j) {
        long double s = 0.0L;
        for (std::size_t t = 0; t < f; ++t) s += frames(t, j);
        const long double mu = s / f;
        long double ss = 0.0L;
        for (std::size_t t = 0; t < f; ++t) ss += (frames(t, j) - mu) * (frames(t, j) - mu);
        r.mean[j] = static_cast<double>(mu);
        r.std[j] = static_cast<double>(std::sqrt(ss / f));
    }
    return r;
}

std::vector<double> topk(const RowMatrix& frames, std::size_t k) {
    std::vector<double> out;
    for (std::size_t j = 0; j < frames.cols(); ++j) {
        std::vector<double> col;
        for (std::size_t t = 0; t < frames.rows(); ++t) col.push_back(frames(t, j));
        std::sort(col.begin(), col.end(), std::greater<>());
        const double lo = col.back();
        for (std::size_t i = 0; i < k; ++i) out.push_back(i < col.size() ? col[i] : lo);
    }
    return out;
}

RowMatrix covariance(const RowMatrix& sample) {
    const std::size_t n = sample.rows(), d = sample.cols();
    std::vector<long double> mu(d, 0.0L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += sample(i, j);
    for (auto& v : mu) v /= n;
    RowMatrix c(d, d);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            long double s = 0.0L;
            for (std::size_t i = 0; i < n; ++i) s += (sample(i, a) - mu[a]) * (sample(i, b) - mu[b]);
            c(a, b) = c(b, a) = static_cast<double>(s / n);
        }
    }
    return c;
}

}  // namespace vidlabel::reference
