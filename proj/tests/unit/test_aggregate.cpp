#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "reference.hpp"
#include "test_util.hpp"
#include "vidlabel/aggregate.hpp"

using namespace vidlabel;

namespace {

RowMatrix rows(std::initializer_list<std::vector<double>> r) {
    RowMatrix m;
    for (const auto& v : r) m.append_row(v);
    return m;
}

}  // namespace

TEST_SUITE("aggregate") {

TEST_CASE("mean and std closed forms") {
    auto a = aggregate_mean_std(rows({{1, 3}, {3, 1}}));
    CHECK(a.mean == std::vector<double>{2, 2});
    CHECK(a.std == std::vector<double>{1, 1});
    auto b = aggregate_mean_std(rows({{5, -5}}));
    CHECK(b.mean == std::vector<double>{5, -5});
    CHECK(b.std == std::vector<double>{0, 0});
}

TEST_CASE("mean and std match the two-pass reference") {
    std::mt19937_64 rng(2);
    auto x = testutil::gaussian_matrix(1000, 7, rng, 4.0);
    for (std::size_t i = 0; i < x.rows(); ++i) x(i, 3) += 1e4;
    const auto a = aggregate_mean_std(x);
    const auto r = reference::mean_std(x);
    for (std::size_t j = 0; j < 7; ++j) {
        CHECK(a.mean[j] == doctest::Approx(r.mean[j]).epsilon(1e-9));
        CHECK(a.std[j] == doctest::Approx(r.std[j]).epsilon(1e-9));
    }
}

TEST_CASE("top-k closed forms and padding") {
    CHECK(aggregate_topk(rows({{3}, {1}, {2}}), 2) == std::vector<double>{3, 2});
    CHECK(aggregate_topk(rows({{7}}), 3) == std::vector<double>{7, 7, 7});
    CHECK(aggregate_topk(rows({{4, 0}, {2, 9}}), 3) == std::vector<double>{4, 2, 2, 9, 0, 0});
}

TEST_CASE("top-k matches full sort") {
    std::mt19937_64 rng(5);
    for (std::size_t f : {1, 3, 5, 100}) {
        const auto x = testutil::gaussian_matrix(f, 2, rng);
        CHECK(aggregate_topk(x, 5) == reference::topk(x, 5));
    }
}

TEST_CASE("aggregates are frame-permutation invariant") {
    std::mt19937_64 rng(6);
    const auto x = testutil::gaussian_matrix(40, 3, rng);
    std::vector<std::size_t> order(40);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    RowMatrix y;
    for (auto i : order) y.append_row(x.row(i));
    CHECK(aggregate_topk(x, 5) == aggregate_topk(y, 5));
    const auto a = aggregate_mean_std(x), b = aggregate_mean_std(y);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(a.mean[j] == doctest::Approx(b.mean[j]).epsilon(1e-14));
        CHECK(a.std[j] == doctest::Approx(b.std[j]).epsilon(1e-12));
    }
    const auto top1 = aggregate_topk(x, 1);
    for (std::size_t j = 0; j < 3; ++j) {
        double mx = -1e300;
        for (std::size_t i = 0; i < x.rows(); ++i) mx = std::max(mx, x(i, j));
        CHECK(top1[j] == mx);
    }
}

TEST_CASE("descriptor layout and decomposition") {
    std::mt19937_64 rng(8);
    const auto x = testutil::gaussian_matrix(12, 4, rng);
    const auto d = build_descriptor(x, 5, {});
    CHECK(d.values.size() == 28);
    REQUIRE(d.layout.size() == 3);
    CHECK(d.layout[0].offset == 0);
    CHECK(d.layout[1].offset == 4);
    CHECK(d.layout[2].offset == 8);
    const auto ms = aggregate_mean_std(x);
    const auto mean = d.component("mean");
    const auto std_ = d.component("std");
    const auto top = d.component("topk");
    CHECK(std::vector<double>(mean.begin(), mean.end()) == ms.mean);
    CHECK(std::vector<double>(std_.begin(), std_.end()) == ms.std);
    CHECK(std::vector<double>(top.begin(), top.end()) == aggregate_topk(x, 5));
    CHECK_THROWS_AS(d.component("fisher"), DataError);

    const auto only_mean = build_descriptor(rows({{1, 2}, {3, 4}}), 5, {true, false, false});
    CHECK(only_mean.values == std::vector<double>{2, 3});
    CHECK_THROWS(build_descriptor(x, 5, {false, false, false}));
    for (std::size_t dim : {1, 3, 10})
        for (std::size_t k : {1, 2, 5}) CHECK(descriptor_layout(dim, k, {}).back().offset + descriptor_layout(dim, k, {}).back().length == dim * (2 + k));
}

TEST_CASE("global normalizer whitens and normalizes") {
    std::mt19937_64 rng(9);
    auto x = testutil::gaussian_matrix(5000, 6, rng);
    for (std::size_t i = 0; i < x.rows(); ++i) x(i, 1) += 0.5 * x(i, 0) + 3.0;
    const auto t = fit_global_normalizer(x);
    RowMatrix z;
    for (std::size_t i = 0; i < x.rows(); ++i) z.append_row(apply_whitening(t, x.row(i), false).values);
    const auto c = reference::covariance(z);
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b) CHECK(std::abs(c(a, b) - (a == b ? 1.0 : 0.0)) <= 5e-2);
    CHECK(l2_norm(normalize_descriptor(t, x.row(0)).values) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS(fit_global_normalizer(testutil::gaussian_matrix(6, 6, rng)));
}

TEST_CASE("descriptor file round trip") {
    const auto dir = testutil::scratch_dir("agg_io");
    DescriptorFile f;
    f.dim = 3;
    f.layout = {{"mean", 0, 1}, {"std", 1, 1}, {"topk", 2, 1}};
    f.records = {{"a", {0, 2}, {0.5, -1.0, 2.0}}, {"b", {}, {0.0, 0.25, 8.0}}};
    write_descriptors(f, dir / "d.agg");
    const auto g = read_descriptors(dir / "d.agg");
    CHECK(g.dim == 3);
    CHECK(g.layout == f.layout);
    CHECK(g.records == f.records);
}

}
