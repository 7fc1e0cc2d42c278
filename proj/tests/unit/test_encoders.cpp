#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "vidlabel/encoders.hpp"

using namespace vidlabel;

namespace {

RowMatrix rows(std::initializer_list<std::vector<double>> r) {
    RowMatrix m;
    for (const auto& v : r) m.append_row(v);
    return m;
}

GmmCodebook unit_gmm() { return GmmCodebook{1, 1, {1.0}, {0.0}, {1.0}}; }

// Two-cluster or three-cluster planted sample around the given centers.
RowMatrix planted(const std::vector<std::vector<double>>& centers, std::size_t per, std::mt19937_64& rng, double s) {
    std::normal_distribution<double> n(0.0, s);
    RowMatrix m;
    for (std::size_t i = 0; i < per; ++i)
        for (const auto& c : centers) {
            std::vector<double> x(c);
            for (double& v : x) v += n(rng);
            m.append_row(x);
        }
    return m;
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("fisher closed forms") {
    const auto sym = encode_fisher(rows({{1}, {-1}}), unit_gmm());
    CHECK(std::abs(sym[0]) <= 1e-12);
    CHECK(std::abs(sym[1]) <= 1e-12);
    const auto two = encode_fisher(rows({{2}}), unit_gmm());
    CHECK(two[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(3.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("fisher and vlad dimensionality") {
    std::mt19937_64 rng(1);
    const auto sample = testutil::gaussian_matrix(400, 8, rng);
    const auto gmm = fit_gmm(sample, 4, 3).codebook;
    CHECK(encode_fisher(testutil::gaussian_matrix(5, 8, rng), gmm).size() == 64);
    const auto cb = fit_kmeans(sample, 8, 3).codebook;
    CHECK(encode_vlad(testutil::gaussian_matrix(5, 8, rng), cb).values.size() == 64);
}

TEST_CASE("fisher is invariant to duplication and order") {
    std::mt19937_64 rng(2);
    const auto gmm = fit_gmm(testutil::gaussian_matrix(300, 3, rng), 2, 1).codebook;
    const auto x = testutil::gaussian_matrix(1, 3, rng);
    RowMatrix xx;
    xx.append_row(x.row(0));
    xx.append_row(x.row(0));
    const auto a = encode_fisher(x, gmm), b = encode_fisher(xx, gmm);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    const auto y = testutil::gaussian_matrix(6, 3, rng);
    RowMatrix yr;
    for (std::size_t i = 6; i-- > 0;) yr.append_row(y.row(i));
    const auto c = encode_fisher(y, gmm), d = encode_fisher(yr, gmm);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(d[i]).epsilon(1e-12));
}

TEST_CASE("posteriors sum to one") {
    std::mt19937_64 rng(3);
    const auto gmm = fit_gmm(testutil::gaussian_matrix(500, 4, rng), 3, 2).codebook;
    for (int i = 0; i < 100; ++i) {
        const auto g = gmm_posteriors(gmm, testutil::gaussian_vector(4, rng, 10.0));
        CHECK(std::abs(std::accumulate(g.begin(), g.end(), 0.0) - 1.0) <= 1e-9);
    }
}

TEST_CASE("single-component gmm is the sample moments") {
    std::mt19937_64 rng(4);
    const auto x = testutil::gaussian_matrix(200, 3, rng, 2.0);
    const auto gmm = fit_gmm(x, 1, 0).codebook;
    CHECK(gmm.weights[0] == doctest::Approx(1.0));
    for (std::size_t j = 0; j < 3; ++j) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
        m /= x.rows();
        for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, j) - m) * (x(i, j) - m);
        v /= x.rows();
        CHECK(gmm.means[j] == doctest::Approx(m).epsilon(1e-9));
        CHECK(gmm.variances[j] == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("gmm recovers planted clusters with monotone likelihood") {
    std::mt19937_64 rng(5);
    const auto x = planted({{-5, 0}, {5, 1}}, 500, rng, 1.0);
    const auto fit = fit_gmm(x, 2, 11);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
        CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9);
    const auto& cb = fit.codebook;
    const std::size_t lo = cb.means[0] < cb.means[2] ? 0 : 1;
    CHECK(std::abs(cb.mean(lo)[0] + 5) < 0.1);
    CHECK(std::abs(cb.mean(lo)[1] - 0) < 0.1);
    CHECK(std::abs(cb.mean(1 - lo)[0] - 5) < 0.1);
    CHECK(std::abs(cb.mean(1 - lo)[1] - 1) < 0.1);
}

TEST_CASE("gmm refuses tiny samples") {
    std::mt19937_64 rng(1);
    CHECK_THROWS(fit_gmm(testutil::gaussian_matrix(15, 2, rng), 2, 0));
}

TEST_CASE("kmeans saturated and planted cases") {
    const auto pts = rows({{0, 0}, {1, 0}, {0, 3}, {5, 5}});
    const auto sat = fit_kmeans(pts, 4, 2);
    CHECK(sat.sse.back() == doctest::Approx(0.0));
    std::mt19937_64 rng(6);
    const auto x = planted({{0, 0}, {6, 0}, {0, 6}}, 300, rng, 0.7);
    const auto fit = fit_kmeans(x, 3, 9);
    for (std::size_t i = 1; i < fit.sse.size(); ++i) CHECK(fit.sse[i] <= fit.sse[i - 1] + 1e-9);
    for (const auto& truth : std::vector<std::vector<double>>{{0, 0}, {6, 0}, {0, 6}}) {
        const auto c = fit.codebook.center(nearest_center(fit.codebook, truth));
        CHECK(std::hypot(c[0] - truth[0], c[1] - truth[1]) < 0.1);
    }
}

TEST_CASE("vlad hand case and degenerate input") {
    const KmeansCodebook cb{1, 2, {0.0, 0.0}};
    const auto r = encode_vlad(rows({{1, 0}, {0, 1}}), cb);
    CHECK(r.values[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.values[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK_FALSE(r.degenerate);
    const auto z = encode_vlad(rows({{0, 0}, {0, 0}}), cb);
    CHECK(z.degenerate);
    CHECK(z.values == std::vector<double>{0, 0});
}

TEST_CASE("vlad output has unit norm") {
    std::mt19937_64 rng(7);
    const auto cb = fit_kmeans(testutil::gaussian_matrix(300, 4, rng), 5, 1).codebook;
    for (int i = 0; i < 50; ++i) {
        const auto v = encode_vlad(testutil::gaussian_matrix(10, 4, rng), cb);
        CHECK(std::abs(l2_norm(v.values) - 1.0) <= 1e-6);
    }
}

TEST_CASE("codebook files round trip") {
    const auto dir = testutil::scratch_dir("enc_io");
    std::mt19937_64 rng(8);
    const auto x = testutil::gaussian_matrix(300, 3, rng);
    const auto gmm = fit_gmm(x, 2, 1).codebook;
    save_gmm(gmm, dir / "g.gmm");
    const auto g2 = load_gmm(dir / "g.gmm");
    CHECK(g2.components == 2);
    CHECK(g2.means[1] == static_cast<double>(static_cast<float>(gmm.means[1])));
    const auto km = fit_kmeans(x, 3, 1).codebook;
    save_kmeans(km, dir / "k.kms");
    CHECK(load_kmeans(dir / "k.kms").k == 3);
    CHECK_THROWS_AS(load_gmm(dir / "k.kms"), DataError);
}

}
