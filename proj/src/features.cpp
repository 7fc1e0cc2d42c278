#include "vidlabel/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace vidlabel {

namespace {

constexpr io::Magic kFeatureMagic = io::make_magic("YT8MDESK");

}  // namespace

LabelVocabulary::LabelVocabulary(std::vector<std::pair<LabelId, std::string>> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw DataError("label vocabulary must contain at least one label");
    std::sort(labels_.begin(), labels_.end());
    std::set<std::string> names;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i].first != i) throw DataError("label ids must be unique and dense in [0, L)");
        if (!names.insert(labels_[i].second).second) throw DataError("duplicate label name: " + labels_[i].second);
    }
}

LabelVocabulary LabelVocabulary::numbered(std::size_t count) {
    std::vector<std::pair<LabelId, std::string>> labels;
    for (std::size_t i = 0; i < count; ++i) labels.emplace_back(static_cast<LabelId>(i), "label_" + std::to_string(i));
    return LabelVocabulary(std::move(labels));
}

void LabelVocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    for (const auto& [id, name] : labels_) out << id << '\t' << name << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

LabelVocabulary LabelVocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    std::vector<std::pair<LabelId, std::string>> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("malformed vocabulary line: " + line);
        labels.emplace_back(static_cast<LabelId>(std::stoul(line.substr(0, tab))), line.substr(tab + 1));
    }
    return LabelVocabulary(std::move(labels));
}

RowMatrix FrameFeatureSet::to_matrix() const {
    RowMatrix m(frame_count(), dim);
    std::copy(values.begin(), values.end(), m.data().begin());
    return m;
}

FrameFeatureSet FrameFeatureSet::from_matrix(std::string video_id, const RowMatrix& frames) {
    FrameFeatureSet f;
    f.video_id = std::move(video_id);
    f.dim = frames.cols();
    f.values.reserve(frames.data().size());
    for (double v : frames.data()) f.values.push_back(static_cast<float>(v));
    return f;
}

bool VideoExample::has_label(LabelId id) const { return std::binary_search(labels.begin(), labels.end(), id); }

std::string to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::validate: return "validate";
        case Partition::test: return "test";
    }
    return "train";
}

Partition parse_partition(std::string_view text) {
    if (text == "train") return Partition::train;
    if (text == "validate") return Partition::validate;
    if (text == "test") return Partition::test;
    throw DataError("unknown partition: " + std::string(text));
}

io::KeyValues DatasetManifest::to_key_values() const {
    io::KeyValues kv{{"partition", to_string(partition)},
                     {"example_count", std::to_string(example_count)},
                     {"feature_dim", std::to_string(feature_dim)}};
    for (const auto& p : paths) kv.emplace_back("path", p);
    kv.insert(kv.end(), provenance.begin(), provenance.end());
    return kv;
}

DatasetManifest DatasetManifest::from_key_values(const io::KeyValues& kv) {
    DatasetManifest m;
    bool has_partition = false, has_count = false, has_dim = false;
    for (const auto& [k, v] : kv) {
        if (k == "partition") {
            m.partition = parse_partition(v);
            has_partition = true;
        } else if (k == "example_count") {
            m.example_count = std::stoull(v);
            has_count = true;
        } else if (k == "feature_dim") {
            m.feature_dim = static_cast<std::uint32_t>(std::stoul(v));
            has_dim = true;
        } else if (k == "path") {
            m.paths.push_back(v);
        } else {
            m.provenance.emplace_back(k, v);
        }
    }
    if (!has_partition || !has_count || !has_dim) throw DataError("manifest missing partition/example_count/feature_dim");
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    io::write_key_values(path, manifest.to_key_values());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    return DatasetManifest::from_key_values(io::read_key_values(path));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& feature_file) {
    auto p = feature_file;
    p += ".manifest";
    return p;
}

DatasetManifest write_features(std::span<const VideoExample> examples, const std::filesystem::path& path,
                               Partition partition) {
    const std::size_t dim = examples.empty() ? 0 : examples.front().features.dim;
    for (const auto& ex : examples) {
        if (ex.features.dim != dim)
            throw DataError("dimension mismatch: video " + ex.features.video_id + " has D=" +
                            std::to_string(ex.features.dim) + ", expected " + std::to_string(dim));
        if (ex.features.values.size() != ex.features.frame_count() * dim)
            throw DataError("frame buffer of video " + ex.features.video_id + " is not a multiple of D");
        if (ex.labels.size() > std::numeric_limits<std::uint16_t>::max())
            throw DataError("too many labels on video " + ex.features.video_id);
    }

    io::BinaryWriter w(path);
    w.magic(kFeatureMagic);
    w.u32(kFeatureFormatVersion);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u64(examples.size());
    for (const auto& ex : examples) {
        w.short_string(ex.features.video_id);
        w.u32(static_cast<std::uint32_t>(ex.features.frame_count()));
        w.u16(static_cast<std::uint16_t>(ex.labels.size()));
        for (LabelId id : ex.labels) w.u32(id);
        for (float v : ex.features.values) w.f32(v);
    }
    w.finish();

    DatasetManifest m;
    m.partition = partition;
    m.example_count = examples.size();
    m.feature_dim = static_cast<std::uint32_t>(dim);
    m.paths.push_back(path.filename().string());
    return m;
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kFeatureMagic);
    const std::uint32_t version = r.u32();
    if (version != kFeatureFormatVersion)
        throw DataError("version mismatch in " + path.string() + ": got " + std::to_string(version));
    FeatureFile file;
    file.dim = r.u32();
    const std::uint64_t count = r.u64();
    // Each record needs at least 8 bytes; guards against absurd counts in corrupt headers.
    if (count > r.remaining() / 8 + 1) throw DataError("truncated file: " + path.string());
    file.examples.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        VideoExample ex;
        ex.features.video_id = r.short_string();
        ex.features.dim = file.dim;
        const std::uint32_t frames = r.u32();
        const std::uint16_t n_labels = r.u16();
        ex.labels.resize(n_labels);
        for (auto& id : ex.labels) id = r.u32();
        const std::size_t n_values = static_cast<std::size_t>(frames) * file.dim;
        if (r.remaining() < n_values * 4) throw DataError("truncated file: " + path.string());
        ex.features.values.resize(n_values);
        for (auto& v : ex.features.values) v = r.f32();
        file.examples.push_back(std::move(ex));
    }
    if (!r.at_end()) throw DataError("trailing bytes after last record in " + path.string());
    return file;
}

std::vector<VideoExample> read_features(const std::filesystem::path& path) {
    return std::move(read_feature_file(path).examples);
}

void check_partitions_disjoint(std::span<const std::vector<VideoExample>> partitions) {
    std::unordered_map<std::string, std::size_t> owner;
    for (std::size_t p = 0; p < partitions.size(); ++p) {
        for (const auto& ex : partitions[p]) {
            auto [it, inserted] = owner.emplace(ex.features.video_id, p);
            if (!inserted && it->second != p)
                throw DataError("video " + ex.features.video_id + " appears in two partitions");
        }
    }
}

ClusterSpec make_cluster_spec(std::uint64_t seed, std::size_t labels, std::size_t dim, double separation,
                              double scale) {
    if (labels == 0 || dim == 0) throw UsageError("cluster spec needs L >= 1 and D >= 1");
    std::mt19937_64 rng(mix_seed(seed, 0xC1u));
    std::normal_distribution<double> normal(0.0, 1.0);
    ClusterSpec spec;
    spec.means.assign(labels, std::vector<double>(dim));
    spec.scales.assign(labels, scale);
    for (auto& mean : spec.means) {
        for (double& v : mean) v = normal(rng);
        l2_normalize(mean);
        for (double& v : mean) v *= separation;
    }
    return spec;
}

std::vector<VideoExample> generate_synthetic(std::uint64_t seed, std::size_t labels, std::size_t videos,
                                             std::size_t dim, const ClusterSpec& clusters,
                                             const SyntheticOptions& options) {
    if (labels == 0 || videos == 0 || dim == 0) throw UsageError("generate_synthetic needs L >= 1, V >= 1, D >= 1");
    if (clusters.means.size() != labels || clusters.scales.size() != labels)
        throw UsageError("cluster spec must describe exactly L labels");
    for (std::size_t e = 0; e < labels; ++e) {
        if (clusters.means[e].size() != dim) throw UsageError("cluster mean dimension differs from D");
        if (!(clusters.scales[e] > 0.0) || !std::isfinite(clusters.scales[e]))
            throw UsageError("degenerate cluster covariance: label " + std::to_string(e) + " has non-positive scale");
    }
    if (options.min_frames == 0 || options.max_frames < options.min_frames)
        throw UsageError("synthetic frame range must satisfy 1 <= min_frames <= max_frames");

    std::mt19937_64 rng(mix_seed(seed, 0x5EEDu));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> frame_count(options.min_frames, options.max_frames);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<VideoExample> out;
    out.reserve(videos);
    for (std::size_t i = 0; i < videos; ++i) {
        VideoExample ex;
        const auto primary = static_cast<LabelId>(i % labels);
        ex.labels.push_back(primary);
        if (labels > 1 && unit(rng) < options.second_label_prob) {
            std::uniform_int_distribution<std::size_t> other(0, labels - 2);
            auto second = static_cast<LabelId>(other(rng));
            if (second >= primary) ++second;
            ex.labels.push_back(second);
            std::sort(ex.labels.begin(), ex.labels.end());
        }

        char id[32];
        std::snprintf(id, sizeof(id), "vid%07zu", i);
        ex.features.video_id = id;
        ex.features.dim = dim;
        const std::size_t frames = frame_count(rng);
        ex.features.values.reserve(frames * dim);
        std::uniform_int_distribution<std::size_t> pick(0, ex.labels.size() - 1);
        for (std::size_t t = 0; t < frames; ++t) {
            const LabelId source = ex.labels[pick(rng)];
            const auto& mean = clusters.means[source];
            const double sd = clusters.scales[source];
            for (std::size_t j = 0; j < dim; ++j) ex.features.values.push_back(static_cast<float>(mean[j] + sd * normal(rng)));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace vidlabel
