#include <cmath>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "vidlabel/metrics.hpp"
#include "vidlabel/trainer.hpp"

using namespace vidlabel;

namespace {

// Label 0 iff the first coordinate is positive; label 1 on every example except the first.
TrainingSet separable_set(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    TrainingSet data(dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = testutil::gaussian_vector(dim, rng);
        x[0] += x[0] > 0 ? 1.0 : -1.0;
        std::vector<LabelId> labels;
        if (x[0] > 0) labels.push_back(0);
        if (i > 0) labels.push_back(1);
        data.add(x, labels);
    }
    return data;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("sampling weights closed forms") {
    const auto full = sampling_weights(1000, 9000, 1000, 9000);
    CHECK(full.positive == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(full.negative == doctest::Approx(1.0).epsilon(1e-15));
    const auto w = sampling_weights(100, 10000, 100, 1000);
    CHECK(w.positive == doctest::Approx(std::sqrt(0.1)).epsilon(1e-12));
    CHECK(w.negative == doctest::Approx(3.162278).epsilon(1e-6));
    CHECK(w.positive * 100 / (w.negative * 1000) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(sampling_weights(0, 10, 0, 10), DataError);
}

TEST_CASE("sampling plan respects caps and is seeded") {
    std::mt19937_64 rng(1);
    const auto data = separable_set(500, 3, rng);
    const LabelIndex index(data, 2);
    const auto a = build_sampling_plan(0, index, 50, 9);
    const auto b = build_sampling_plan(0, index, 50, 9);
    CHECK(a.positives == b.positives);
    CHECK(a.negatives == b.negatives);
    CHECK(a.sampled_pos == 50);
    CHECK(a.sampled_neg == 50);
    CHECK(a.true_pos + a.true_neg == 500);
    CHECK(a.w_plus * a.w_minus == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.w_plus * a.sampled_pos / (a.w_minus * a.sampled_neg) ==
          doctest::Approx(static_cast<double>(a.true_pos) / a.true_neg).epsilon(1e-9));
    for (auto i : a.positives) CHECK(data.is_positive(i, 0));
    for (auto i : a.negatives) CHECK_FALSE(data.is_positive(i, 0));
    const auto c = build_sampling_plan(0, index, 50, 10);
    CHECK_FALSE(a.positives == c.positives);
    // Label 1 has a single negative.
    const auto one = build_sampling_plan(1, index, 1000, 3);
    CHECK(one.sampled_neg == 1);
    CHECK(one.sampled_pos == 499);
}

TEST_CASE("labels without negatives or positives are refused") {
    TrainingSet data(1);
    data.add(std::vector<double>{1.0}, {0});
    data.add(std::vector<double>{2.0}, {0});
    const LabelIndex index(data, 2);
    CHECK_THROWS_AS(build_sampling_plan(0, index, 10, 0), DataError);
    CHECK_THROWS_AS(build_sampling_plan(1, index, 10, 0), DataError);
}

TEST_CASE("frame expansion") {
    std::mt19937_64 rng(2);
    std::vector<VideoExample> v{testutil::random_video(0, 3, 2, rng), testutil::random_video(1, 40, 2, rng)};
    const auto ex = expand_frame_examples(v, 20, 5);
    CHECK(ex.size() == 23);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ex[i].labels == v[0].labels);
    for (std::size_t i = 3; i < 23; ++i) CHECK(ex[i].labels == v[1].labels);
    // Distinct frames of the long video.
    std::set<std::vector<double>> seen;
    for (std::size_t i = 3; i < 23; ++i) seen.insert(ex[i].frame);
    CHECK(seen.size() == 20);
    const auto again = expand_frame_examples(v, 20, 5);
    for (std::size_t i = 0; i < ex.size(); ++i) CHECK(ex[i].frame == again[i].frame);
    CHECK_THROWS_AS(expand_frame_examples(v, 0, 5), UsageError);
}

TEST_CASE("logistic training converges on separable data") {
    std::mt19937_64 rng(3);
    const auto data = separable_set(400, 4, rng);
    const LabelIndex index(data, 2);
    TrainerConfig cfg;
    cfg.model = ModelKind::logistic;
    cfg.iterations = 5;
    cfg.batch_size = 1;
    const auto r = train_label(initial_model(cfg, 4, 1), 0, data, index, cfg, 1);
    CHECK(r.loss_trace.back() < 0.1 * r.loss_trace.front());
    CHECK(r.steps == 5 * 400);
    for (double g : adagrad_state(r.model)) CHECK(g >= 0.0);
}

TEST_CASE("huge l2 shrinks weights to the bias") {
    std::mt19937_64 rng(4);
    const auto data = separable_set(300, 3, rng);
    const LabelIndex index(data, 2);
    TrainerConfig cfg;
    cfg.model = ModelKind::logistic;
    cfg.l2 = 1e6;
    cfg.iterations = 20;
    cfg.learning_rate = 0.1;
    const auto r = train_label(initial_model(cfg, 3, 1), 0, data, index, cfg, 1);
    const auto w = parameters(r.model);
    CHECK(l2_norm(w.subspan(0, 3)) < 1e-3);
}

TEST_CASE("single example moe overfit") {
    TrainingSet data(2);
    data.add(std::vector<double>{0.5, -1.0}, {0});
    data.add(std::vector<double>{-0.3, 2.0}, {});
    const LabelIndex index(data, 1);
    TrainerConfig cfg;
    cfg.model = ModelKind::moe;
    cfg.mixtures = 1;
    cfg.iterations = 500;  // two examples per pass: 1000 steps
    cfg.batch_size = 1;
    cfg.learning_rate = 0.5;
    const auto r = train_label(initial_model(cfg, 2, 1), 0, data, index, cfg, 7);
    CHECK(r.steps == 1000);
    CHECK(predict(r.model, data.input(0)) > 0.95);
    CHECK(predict(r.model, data.input(1)) < 0.05);
}

TEST_CASE("full-batch logistic loss is non-increasing") {
    std::mt19937_64 rng(5);
    const auto data = separable_set(200, 5, rng);
    const LabelIndex index(data, 2);
    TrainerConfig cfg;
    cfg.model = ModelKind::logistic;
    cfg.batch_size = 1000000;
    cfg.iterations = 100;
    cfg.learning_rate = 0.1;
    const auto r = train_label(initial_model(cfg, 5, 1), 0, data, index, cfg, 3);
    REQUIRE(r.loss_trace.size() == 101);
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-12);
}

TEST_CASE("train_all is worker-count invariant and reports skips") {
    std::mt19937_64 rng(6);
    auto data = separable_set(300, 3, rng);
    TrainerConfig cfg;
    cfg.iterations = 3;
    cfg.seed = 42;
    const auto vocab = LabelVocabulary::numbered(3);  // label 2 has no positives
    const auto one = train_all(vocab, cfg, data, 1);
    const auto four = train_all(vocab, cfg, data, 4);
    CHECK(one.trained_count() == 2);
    CHECK(one.reports[2].status == LabelStatus::skipped);
    CHECK_FALSE(one.models[2].has_value());
    for (std::size_t l = 0; l < 2; ++l) CHECK(serialize_model(*one.models[l]) == serialize_model(*four.models[l]));

    const auto dir = testutil::scratch_dir("bank");
    save_bank(one, dir, {{"seed", "42"}});
    const auto back = load_bank(dir);
    CHECK(back.trained_count() == 2);
    CHECK(back.reports[2].status == LabelStatus::skipped);
    CHECK(std::filesystem::exists(dir / "label_00000.mdl"));
    const auto x = with_bias(std::vector<double>{0.3, 0.1, -2.0});
    CHECK(predict_video_level(back, x) == predict_video_level(one, x));
    CHECK(predict_video_level(one, x)[2] == 0.0);
}

TEST_CASE("prediction pooling") {
    ModelBank bank;
    bank.kind = ModelKind::logistic;
    bank.feature_dim = 1;
    auto m = LogisticModel::zeros(1);
    m.weights = {1.0, 0.0};
    bank.models.emplace_back(Model{m});
    bank.reports.resize(1);
    RowMatrix frames;
    std::vector<double> probs{0.2, 0.4, 0.9};
    for (double p : probs) frames.append_row(std::vector<double>{std::log(p / (1 - p)), 1.0});
    CHECK(predict_video_frame_level(bank, frames)[0] == doctest::Approx(0.5).epsilon(1e-12));
    RowMatrix single;
    single.append_row(frames.row(2));
    CHECK(predict_video_frame_level(bank, single)[0] == doctest::Approx(0.9).epsilon(1e-12));

    bank.models[0] = Model{MoEModel::zeros(1, 1)};
    CHECK(predict_video_level(bank, std::vector<double>{3.0, 1.0})[0] == doctest::Approx(0.25));
    bank.models[0] = Model{LogisticModel::zeros(1)};
    CHECK(predict_video_level(bank, std::vector<double>{3.0, 1.0})[0] == 0.5);
}

TEST_CASE("frame-level mean never exceeds the max") {
    std::mt19937_64 rng(7);
    ModelBank bank;
    bank.kind = ModelKind::moe;
    bank.feature_dim = 3;
    auto m = MoEModel::zeros(3, 2);
    m.params = testutil::gaussian_vector(m.params.size(), rng);
    bank.models.emplace_back(Model{m});
    bank.reports.resize(1);
    for (int trial = 0; trial < 50; ++trial) {
        RowMatrix frames;
        double mx = 0.0;
        for (int f = 0; f < 7; ++f) {
            auto x = with_bias(testutil::gaussian_vector(3, rng));
            mx = std::max(mx, predict(*bank.models[0], x));
            frames.append_row(x);
        }
        CHECK(predict_video_frame_level(bank, frames)[0] <= mx);
    }
}

TEST_CASE("logistic on a two-label synthetic set reaches hit@1 above 0.95") {
    ClusterSpec spec;
    spec.means = {std::vector<double>(4, 5.0), std::vector<double>(4, -5.0)};
    spec.scales = {1.0, 1.0};
    SyntheticOptions opts;
    opts.second_label_prob = 0.0;
    const auto videos = generate_synthetic(3, 2, 200, 4, spec, opts);
    TrainingSet data(4);
    for (const auto& v : videos) {
        RowMatrix frames = v.features.to_matrix();
        std::vector<double> mean(4, 0.0);
        for (std::size_t t = 0; t < frames.rows(); ++t)
            for (std::size_t j = 0; j < 4; ++j) mean[j] += frames(t, j) / frames.rows();
        data.add(mean, v.labels);
    }
    TrainerConfig cfg;
    cfg.model = ModelKind::logistic;
    cfg.iterations = 3;
    const auto bank = train_all(LabelVocabulary::numbered(2), cfg, data, 1);
    PredictionSet preds(2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.input(i);
        preds.add(std::to_string(i), predict_video_level(bank, x), data.labels(i));
    }
    CHECK(*hit_at_k(preds, 1) > 0.95);
}

TEST_CASE("trainer config key values") {
    TrainerConfig c;
    c.learning_rate = 0.25;
    c.model = ModelKind::hinge;
    c.seed = 99;
    const auto back = TrainerConfig::from_key_values(c.to_key_values());
    CHECK(back.learning_rate == 0.25);
    CHECK(back.model == ModelKind::hinge);
    CHECK(back.seed == 99);
    CHECK_THROWS_AS(TrainerConfig::from_key_values({{"bogus", "1"}}), UsageError);
    CHECK_THROWS_AS(TrainerConfig::from_key_values({{"batch_size", "x"}}), UsageError);
    TrainerConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    CHECK(TrainerConfig::frame_level_defaults().batch_size == 1);
    CHECK(TrainerConfig::frame_level_defaults().l2 == 1e-6);
    CHECK(TrainerConfig::video_level_defaults().batch_size == 32);
    CHECK(TrainerConfig::video_level_defaults().learning_rate == 1.0);
    CHECK(TrainerConfig::video_level_defaults().mixtures == 2);
}

}
