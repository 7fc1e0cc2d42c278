#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "vidlabel/features.hpp"

using namespace vidlabel;

TEST_SUITE("features") {

TEST_CASE("single video single frame round trip") {
    const auto dir = testutil::scratch_dir("feat_single");
    VideoExample ex;
    ex.features = {"only", 2, {0.0f, 0.0f}};
    ex.labels = {0};
    const auto manifest = write_features(std::vector{ex}, dir / "one.yt8m");
    CHECK(manifest.example_count == 1);
    CHECK(manifest.feature_dim == 2);
    const auto back = read_features(dir / "one.yt8m");
    REQUIRE(back.size() == 1);
    CHECK(back[0] == ex);
}

TEST_CASE("manifest counts mixed frame counts") {
    const auto dir = testutil::scratch_dir("feat_mixed");
    std::mt19937_64 rng(3);
    std::vector<VideoExample> v{testutil::random_video(0, 2, 4, rng), testutil::random_video(1, 5, 4, rng),
                                testutil::random_video(2, 7, 4, rng)};
    const auto m = write_features(v, dir / "mixed.yt8m", Partition::validate);
    CHECK(m.example_count == 3);
    CHECK(m.partition == Partition::validate);
    write_manifest(m, manifest_path_for(dir / "mixed.yt8m"));
    const auto m2 = read_manifest(manifest_path_for(dir / "mixed.yt8m"));
    CHECK(m2.example_count == 3);
    CHECK(m2.feature_dim == 4);
    CHECK(m2.partition == Partition::validate);
}

TEST_CASE("100 random videos round trip exactly") {
    const auto dir = testutil::scratch_dir("feat_random");
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> frames(1, 40);
    std::vector<VideoExample> v;
    for (std::size_t i = 0; i < 100; ++i) v.push_back(testutil::random_video(i, frames(rng), 6, rng));
    write_features(v, dir / "r.yt8m");
    CHECK(read_features(dir / "r.yt8m") == v);
}

TEST_CASE("empty payload reads as empty") {
    const auto dir = testutil::scratch_dir("feat_empty");
    write_features(std::vector<VideoExample>{}, dir / "e.yt8m");
    CHECK(read_features(dir / "e.yt8m").empty());
}

TEST_CASE("corrupt files are rejected") {
    const auto dir = testutil::scratch_dir("feat_corrupt");
    std::mt19937_64 rng(5);
    write_features(std::vector{testutil::random_video(0, 3, 2, rng)}, dir / "ok.yt8m");
    std::ifstream in(dir / "ok.yt8m", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    SUBCASE("bad magic") {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir / "bad.yt8m", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(read_features(dir / "bad.yt8m"), doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("truncated") {
        std::ofstream(dir / "cut.yt8m", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
        CHECK_THROWS_WITH_AS(read_features(dir / "cut.yt8m"), doctest::Contains("truncated"), DataError);
    }
    SUBCASE("version mismatch") {
        std::string bad = bytes;
        bad[8] = 9;
        std::ofstream(dir / "ver.yt8m", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(read_features(dir / "ver.yt8m"), doctest::Contains("version"), DataError);
    }
    SUBCASE("trailing bytes") {
        std::ofstream(dir / "tail.yt8m", std::ios::binary) << bytes << "zz";
        CHECK_THROWS_AS(read_features(dir / "tail.yt8m"), DataError);
    }
}

TEST_CASE("dimension mismatch on write") {
    const auto dir = testutil::scratch_dir("feat_dim");
    std::mt19937_64 rng(1);
    std::vector<VideoExample> v{testutil::random_video(0, 2, 3, rng), testutil::random_video(1, 2, 4, rng)};
    CHECK_THROWS_AS(write_features(v, dir / "x.yt8m"), DataError);
}

TEST_CASE("synthetic generation is deterministic") {
    const auto spec = make_cluster_spec(1, 4, 8, 3.0);
    const auto a = generate_synthetic(7, 4, 50, 8, spec);
    const auto b = generate_synthetic(7, 4, 50, 8, spec);
    CHECK(a == b);
    const auto c = generate_synthetic(8, 4, 50, 8, spec);
    CHECK_FALSE(a == c);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].has_label(static_cast<LabelId>(i % 4)));
        CHECK(std::is_sorted(a[i].labels.begin(), a[i].labels.end()));
        CHECK(a[i].features.frame_count() >= 10);
        CHECK(a[i].features.frame_count() <= 30);
    }
}

TEST_CASE("zero cluster scale is refused") {
    auto spec = make_cluster_spec(1, 2, 3, 2.0);
    spec.scales[1] = 0.0;
    CHECK_THROWS_WITH_AS(generate_synthetic(1, 2, 10, 3, spec), doctest::Contains("degenerate"), UsageError);
}

TEST_CASE("partitions must be disjoint") {
    std::mt19937_64 rng(2);
    std::vector<std::vector<VideoExample>> parts{{testutil::random_video(0, 1, 2, rng)},
                                                 {testutil::random_video(1, 1, 2, rng)}};
    CHECK_NOTHROW(check_partitions_disjoint(parts));
    parts[1].push_back(parts[0][0]);
    CHECK_THROWS_AS(check_partitions_disjoint(parts), DataError);
}

TEST_CASE("label vocabulary validation and persistence") {
    CHECK_THROWS_AS(LabelVocabulary(std::vector<std::pair<LabelId, std::string>>{}), DataError);
    CHECK_THROWS_AS(LabelVocabulary({{0, "a"}, {2, "b"}}), DataError);
    CHECK_THROWS_AS(LabelVocabulary({{0, "a"}, {1, "a"}}), DataError);
    const auto dir = testutil::scratch_dir("vocab");
    const auto v = LabelVocabulary::numbered(3);
    v.save(dir / "labels.txt");
    const auto back = LabelVocabulary::load(dir / "labels.txt");
    CHECK(back.labels() == v.labels());
    CHECK(back.name(2) == "label_2");
}

TEST_CASE("partition names") {
    CHECK(parse_partition("validate") == Partition::validate);
    CHECK(to_string(Partition::test) == "test");
    CHECK_THROWS_AS(parse_partition("dev"), DataError);
}

}
