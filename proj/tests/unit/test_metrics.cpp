#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "reference.hpp"
#include "test_util.hpp"
#include "vidlabel/metrics.hpp"

using namespace vidlabel;

namespace {

double ap(std::vector<double> s, std::vector<std::uint8_t> t) { return *average_precision(s, t); }

PredictionSet random_set(std::mt19937_64& rng, std::size_t labels, std::size_t videos) {
    // Coarse score grid so that ties and shared buckets are common.
    std::uniform_int_distribution<int> grid(0, 20);
    std::bernoulli_distribution pos(0.3);
    PredictionSet p(labels);
    for (std::size_t v = 0; v < videos; ++v) {
        std::vector<double> s(labels);
        for (double& x : s) x = grid(rng) / 20.0;
        std::vector<LabelId> g;
        for (std::size_t l = 0; l < labels; ++l)
            if (pos(rng)) g.push_back(static_cast<LabelId>(l));
        p.add("v" + std::to_string(v), s, g);
    }
    return p;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("average precision hand cases") {
    CHECK(ap({0.9, 0.8, 0.1}, {1, 1, 0}) == 1.0);
    CHECK(ap({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<double> s{0.9, 0.8, 0.7};
    const std::vector<std::uint8_t> t{1, 0, 1};
    CHECK(ap(s, t) == *reference::average_precision(s, t));
    CHECK(ap(s, t) == doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)));
    CHECK_FALSE(average_precision(s, std::vector<std::uint8_t>{0, 0, 0}).has_value());
    // Bucket-0 scores are never retrieved.
    CHECK(ap({0.00004, 0.3}, {1, 0}) == 0.0);
}

TEST_CASE("average precision is order independent") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    std::vector<double> s(30);
    std::vector<std::uint8_t> t(30);
    for (std::size_t i = 0; i < 30; ++i) {
        s[i] = u(rng);
        t[i] = i % 3 == 0;
    }
    const double a = ap(s, t);
    std::vector<std::size_t> order(30);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> s2;
    std::vector<std::uint8_t> t2;
    for (auto i : order) {
        s2.push_back(s[i]);
        t2.push_back(t[i]);
    }
    CHECK(ap(s2, t2) == a);
}

TEST_CASE("hit@k and perr hand cases") {
    PredictionSet p(3);
    p.add("a", std::vector<double>{0.9, 0.5, 0.1}, {1});       // ranked [0,1,2], truth {1}
    CHECK(*hit_at_k(p, 1) == 0.0);
    CHECK(*hit_at_k(p, 2) == 1.0);
    CHECK(*hit_at_k(p, 3) == 1.0);

    PredictionSet q(3);
    q.add("b", std::vector<double>{0.9, 0.1, 0.5}, {0, 1});    // top-2 = {0,2}
    CHECK(*perr(q) == 0.5);
    PredictionSet r(3);
    r.add("c", std::vector<double>{0.9, 0.8, 0.5}, {0, 1});
    CHECK(*perr(r) == 1.0);
}

TEST_CASE("ties rank the lower label first") {
    CHECK(rank_labels(std::vector<double>{0.5, 0.7, 0.5, 0.7}) == std::vector<LabelId>{1, 3, 0, 2});
    PredictionSet p(2);
    p.add("t", std::vector<double>{0.5, 0.5}, {1});
    CHECK(*hit_at_k(p, 1) == 0.0);
}

TEST_CASE("empty truth handling") {
    PredictionSet p(2);
    p.add("x", std::vector<double>{0.5, 0.2}, {});
    CHECK_FALSE(perr(p).has_value());
    CHECK_FALSE(hit_at_k(p, 1).has_value());
    CHECK(*hit_at_k(p, 1, true) == 0.0);
    p.add("y", std::vector<double>{0.5, 0.2}, {0});
    CHECK(*hit_at_k(p, 1) == 1.0);
    CHECK(*hit_at_k(p, 1, true) == 0.5);
    const auto m = mean_average_precision(p);
    CHECK(m.skipped == 1);
    CHECK(m.map == *m.per_class[0]);
}

TEST_CASE("metrics equal brute force on random instances") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_set(rng, 1 + trial % 10, 1 + trial % 50);
        const auto a = mean_average_precision(p);
        const auto b = reference::mean_average_precision(p);
        CHECK(a.map == b.map);
        CHECK(a.per_class == b.per_class);
        for (std::size_t k = 1; k <= p.label_count() + 1; ++k) CHECK(hit_at_k(p, k) == reference::hit_at_k(p, k));
        CHECK(perr(p) == reference::perr(p));
    }
}

TEST_CASE("hit@k is monotone and saturates") {
    std::mt19937_64 rng(3);
    const auto p = random_set(rng, 6, 40);
    double prev = 0.0;
    for (std::size_t k = 1; k <= 6; ++k) {
        const double h = *hit_at_k(p, k);
        CHECK(h >= prev);
        prev = h;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("metrics invariant under bucket-preserving monotone transforms") {
    std::mt19937_64 rng(4);
    const auto p = random_set(rng, 5, 30);
    PredictionSet q(5);
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        std::vector<double> s(p.scores(v).begin(), p.scores(v).end());
        for (double& x : s) x = std::sqrt(x);  // strictly increasing; grid scores stay distinct
        q.add(p.video_id(v), s, p.truth(v));
    }
    CHECK(*hit_at_k(p, 2) == *hit_at_k(q, 2));
    CHECK(*perr(p) == *perr(q));
}

TEST_CASE("scores are validated") {
    PredictionSet p(2);
    CHECK_THROWS_AS(p.add("a", std::vector<double>{0.5}, {}), DataError);
    CHECK_THROWS_AS(p.add("a", std::vector<double>{0.5, 1.5}, {}), DataError);
    CHECK_THROWS_AS(p.add("a", std::vector<double>{0.5, NAN}, {}), DataError);
    CHECK_THROWS_AS(p.add("a", std::vector<double>{0.5, 0.5}, {2}), DataError);
}

TEST_CASE("prediction and report files") {
    const auto dir = testutil::scratch_dir("metrics_io");
    PredictionSet p(2);
    p.add("a", std::vector<double>{0.25, 0.123456789}, {0});
    p.add("b", std::vector<double>{1.0, 0.0}, {1});
    write_predictions(p, dir / "p.txt", {{"seed", "3"}});
    const auto f = read_predictions(dir / "p.txt");
    CHECK(f.label_count == 2);
    CHECK(f.video_ids == std::vector<std::string>{"a", "b"});
    CHECK(f.scores(0, 1) == 0.123456789);
    CHECK(io::find_value(f.header, "seed") != nullptr);

    const auto r = evaluate(p);
    write_report(r, dir / "r.txt");
    const auto kv = io::read_key_values(dir / "r.txt");
    CHECK(*io::find_value(kv, "hit_at_1") == "0.500000000");
    CHECK(*io::find_value(kv, "classes_skipped") == "0");
    const std::vector<std::string> names{"x", "y"};
    write_per_class_table(r, names, dir / "t.tsv");
    CHECK(std::filesystem::file_size(dir / "t.tsv") > 0);
}

}
