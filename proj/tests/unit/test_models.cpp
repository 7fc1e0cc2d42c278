#include <cmath>
#include <numeric>

#include "doctest.h"
#include "reference.hpp"
#include "test_util.hpp"
#include "vidlabel/models.hpp"

using namespace vidlabel;

namespace {

MoEModel random_moe(std::size_t dim, std::size_t h, std::mt19937_64& rng, double scale = 1.0) {
    auto m = MoEModel::zeros(dim, h);
    m.params = testutil::gaussian_vector(m.params.size(), rng, scale);
    return m;
}

std::vector<double> input(std::size_t dim, std::mt19937_64& rng) {
    auto x = testutil::gaussian_vector(dim, rng);
    x.push_back(1.0);
    return x;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("moe all-zero weights") {
    const auto m = MoEModel::zeros(3, 1);
    const std::vector<double> x{0.3, -2.0, 5.0, 1.0};
    CHECK(moe_predict(m, x) == doctest::Approx(0.25).epsilon(1e-15));
    const auto g = moe_gating(m, x);
    CHECK(g.experts[0] == doctest::Approx(0.5));
    CHECK(g.dummy == doctest::Approx(0.5));
}

TEST_CASE("moe gating saturation reduces to one logistic") {
    auto m = MoEModel::zeros(1, 1);
    const std::vector<double> x{1.0, 1.0};
    m.gating(0)[0] = 50.0;  // w^T x = 50
    m.expert(0)[0] = 0.7;
    m.expert(0)[1] = -0.2;
    CHECK(moe_predict(m, x) == doctest::Approx(sigmoid(0.5)).epsilon(1e-12));
}

TEST_CASE("moe matches extended-precision evaluation") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto m = random_moe(5, 3, rng, 2.0);
        const auto x = input(5, rng);
        CHECK(std::abs(moe_predict(m, x) - static_cast<double>(reference::moe_predict(m, x))) <= 1e-12);
    }
}

TEST_CASE("moe prediction stays strictly below one") {
    auto m = MoEModel::zeros(1, 2);
    const std::vector<double> x{1.0, 1.0};
    for (std::size_t h = 0; h < 2; ++h) {
        m.gating(h)[0] = 800.0;
        m.expert(h)[0] = 800.0;
    }
    CHECK(moe_predict(m, x) < 1.0);
    CHECK(std::isfinite(moe_log_loss(m, x, 0.0)));
}

TEST_CASE("moe hand gradient") {
    const auto m = MoEModel::zeros(1, 1);
    const std::vector<double> x{1.0, 1.0};
    const auto g = moe_gradients(m, x, 1.0);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(g.d_gating(0, j) == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(g.d_expert(0, j) == doctest::Approx(-0.5).epsilon(1e-12));
    }
}

TEST_CASE("moe gradient vanishes when target equals prediction") {
    std::mt19937_64 rng(4);
    const auto m = random_moe(3, 2, rng);
    const auto x = input(3, rng);
    const auto g = moe_gradients(m, x, moe_predict(m, x));
    for (double v : g.d_gating.data()) CHECK(std::abs(v) <= 1e-15);
    for (double v : g.d_expert.data()) CHECK(std::abs(v) <= 1e-15);
}

TEST_CASE("gradients match finite differences") {
    std::mt19937_64 rng(5);
    auto close = [](const std::vector<double>& a, std::span<const double> b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::abs(a[i] - b[i]) > std::max(1e-8, 1e-6 * std::abs(b[i]))) return false;
        return true;
    };
    for (std::size_t h : {1, 2, 4}) {
        for (int trial = 0; trial < 30; ++trial) {
            const auto m = random_moe(4, h, rng);
            const auto x = input(4, rng);
            const double g = trial % 2 ? 1.0 : 0.0;
            const auto fd = reference::finite_difference(
                [&](std::span<const double> p) {
                    MoEModel c = m;
                    c.params.assign(p.begin(), p.end());
                    return moe_log_loss(c, x, g);
                },
                m.params);
            const auto an = moe_gradients(m, x, g);
            std::vector<double> flat(an.d_gating.data());
            flat.insert(flat.end(), an.d_expert.data().begin(), an.d_expert.data().end());
            CHECK(close(fd, flat));
        }
    }
    for (int trial = 0; trial < 30; ++trial) {
        auto m = LogisticModel::zeros(4, 0.3);
        m.weights = testutil::gaussian_vector(5, rng);
        const auto x = input(4, rng);
        const double g = trial % 2;
        const auto fd = reference::finite_difference(
            [&](std::span<const double> p) {
                LogisticModel c = m;
                c.weights.assign(p.begin(), p.end());
                double r = 0.0;
                for (std::size_t i = 0; i + 1 < p.size(); ++i) r += p[i] * p[i];
                return logistic_log_loss(c, x, g) + c.l2 * r;
            },
            m.weights);
        CHECK(close(fd, logistic_gradient(m, x, g)));
    }
}

TEST_CASE("logistic closed forms") {
    const auto m = LogisticModel::zeros(2);
    const std::vector<double> x{4.0, -1.0, 1.0};
    CHECK(logistic_predict(m, x) == 0.5);
    const auto g = logistic_gradient(m, x, 0.5);
    for (double v : g) CHECK(v == 0.0);
    auto far = LogisticModel::zeros(1);
    far.weights = {-710.0, 0.0};
    CHECK(logistic_predict(far, std::vector<double>{1.0, 1.0}) > 0.0);
    // g = 1 pulls w^T x up, g = 0 pushes it down.
    const auto up = logistic_gradient(m, x, 1.0);
    const auto down = logistic_gradient(m, x, 0.0);
    CHECK(dot(up, x) < 0.0);
    CHECK(dot(down, x) > 0.0);
}

TEST_CASE("logistic matches extended precision") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        auto m = LogisticModel::zeros(3);
        m.weights = testutil::gaussian_vector(4, rng, 3.0);
        const auto x = input(3, rng);
        long double z = 0.0L;
        for (std::size_t j = 0; j < 4; ++j) z += static_cast<long double>(m.weights[j]) * x[j];
        CHECK(std::abs(logistic_predict(m, x) - static_cast<double>(1.0L / (1.0L + std::exp(-z)))) <= 1e-12);
    }
}

TEST_CASE("hinge closed forms") {
    auto m = HingeModel::zeros(1, 1.0);
    m.weights = {0.5, 0.0};
    const std::vector<double> x{1.0, 1.0};
    auto r = hinge_loss_and_subgradient(m, x, 1.0);
    CHECK(r.loss == doctest::Approx(0.5));
    CHECK(r.subgradient == std::vector<double>{-1.0, -1.0});
    m.weights = {2.0, 0.0};
    r = hinge_loss_and_subgradient(m, x, 1.0);
    CHECK(r.loss == 0.0);
    CHECK(r.subgradient == std::vector<double>{0.0, 0.0});
    m.weights = {1.0, 0.0};
    r = hinge_loss_and_subgradient(m, x, 1.0);
    CHECK(r.subgradient == std::vector<double>{0.0, 0.0});
}

TEST_CASE("regularizer excludes bias") {
    auto m = MoEModel::zeros(2, 1, 0.5);
    m.params = {1, 2, 100, 3, 4, 100};
    CHECK(regularizer(Model{m}) == doctest::Approx(0.5 * (1 + 4 + 9 + 16)));
    std::vector<double> g(6, 0.0);
    accumulate_regularizer_gradient(Model{m}, 1.0, g);
    CHECK(g == std::vector<double>{1, 2, 0, 3, 4, 0});
}

TEST_CASE("serialization round trip") {
    std::mt19937_64 rng(7);
    auto lg = LogisticModel::zeros(3);
    lg.weights = testutil::gaussian_vector(4, rng);
    lg.adagrad = {1, 2, 3, 4};
    auto hg = HingeModel::zeros(2, 0.75, 1e-3);
    hg.weights = testutil::gaussian_vector(3, rng);
    const auto moe = random_moe(3, 2, rng);
    for (const Model& m : {Model{lg}, Model{hg}, Model{moe}}) {
        const auto bytes = serialize_model(m);
        const Model back = deserialize_model(bytes);
        CHECK(back == m);
        const auto x = input(feature_dim(m), rng);
        CHECK(predict(back, x) == predict(m, x));
        auto cut = bytes;
        cut.resize(cut.size() - 5);
        CHECK_THROWS_AS(deserialize_model(cut), DataError);
    }
    // Zero experts is an invalid model.
    auto bytes = serialize_model(Model{moe});
    bytes[20] = bytes[21] = bytes[22] = bytes[23] = 0;
    CHECK_THROWS_AS(deserialize_model(bytes), DataError);
}

TEST_CASE("model kind names") {
    CHECK(parse_model_kind("moe") == ModelKind::moe);
    CHECK(std::string(to_string(ModelKind::hinge)) == "hinge");
    CHECK_THROWS_AS(parse_model_kind("svm"), UsageError);
}

}
