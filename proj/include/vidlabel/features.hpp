#pragma once

// Frame-level feature data model, the binary feature file format, and the
// synthetic generator used for desk-scale experiments.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vidlabel/binary_io.hpp"
#include "vidlabel/common.hpp"

namespace vidlabel {

class LabelVocabulary {
public:
    LabelVocabulary() = default;
    // Validates: ids dense in [0, L), names unique, L >= 1.
    explicit LabelVocabulary(std::vector<std::pair<LabelId, std::string>> labels);

    static LabelVocabulary numbered(std::size_t count);

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::pair<LabelId, std::string>>& labels() const noexcept { return labels_; }
    const std::string& name(LabelId id) const { return labels_.at(id).second; }

    void save(const std::filesystem::path& path) const;
    static LabelVocabulary load(const std::filesystem::path& path);

private:
    std::vector<std::pair<LabelId, std::string>> labels_;  // sorted by id
};

/// Frames of one video stored row-major as 32-bit floats, F x D.
struct FrameFeatureSet {
    std::string video_id;
    std::size_t dim = 0;
    std::vector<float> values;

    std::size_t frame_count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
    std::span<const float> frame(std::size_t t) const { return {values.data() + t * dim, dim}; }

    RowMatrix to_matrix() const;
    static FrameFeatureSet from_matrix(std::string video_id, const RowMatrix& frames);

    bool operator==(const FrameFeatureSet&) const = default;
};

struct VideoExample {
    FrameFeatureSet features;
    std::vector<LabelId> labels;  // sorted, unique

    bool has_label(LabelId id) const;
    bool operator==(const VideoExample&) const = default;
};

enum class Partition { train, validate, test };

std::string to_string(Partition p);
Partition parse_partition(std::string_view text);

struct DatasetManifest {
    Partition partition = Partition::train;
    std::uint64_t example_count = 0;
    std::uint32_t feature_dim = 0;
    std::vector<std::string> paths;
    // Provenance (seed, config hash) carried through to the manifest file.
    io::KeyValues provenance;

    io::KeyValues to_key_values() const;
    static DatasetManifest from_key_values(const io::KeyValues& kv);
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Manifest path convention: "<feature file>.manifest".
std::filesystem::path manifest_path_for(const std::filesystem::path& feature_file);

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// Writes examples in the YT8MDESK format. All examples must share one feature dim.
DatasetManifest write_features(std::span<const VideoExample> examples, const std::filesystem::path& path,
                               Partition partition = Partition::train);

struct FeatureFile {
    std::uint32_t dim = 0;
    std::vector<VideoExample> examples;
};

FeatureFile read_feature_file(const std::filesystem::path& path);
std::vector<VideoExample> read_features(const std::filesystem::path& path);

// Throws DataError naming the first video id found in more than one partition.
void check_partitions_disjoint(std::span<const std::vector<VideoExample>> partitions);

/// Per-label isotropic Gaussian clusters that frames of a labelled video are drawn from.
struct ClusterSpec {
    std::vector<std::vector<double>> means;  // L x D
    std::vector<double> scales;              // per-label standard deviation

    std::size_t label_count() const noexcept { return means.size(); }
};

// Random cluster means of norm approximately `separation`, all with standard deviation `scale`.
ClusterSpec make_cluster_spec(std::uint64_t seed, std::size_t labels, std::size_t dim, double separation,
                              double scale = 1.0);

struct SyntheticOptions {
    std::size_t min_frames = 10;
    std::size_t max_frames = 30;
    // Probability that a video carries a second, distinct label.
    double second_label_prob = 0.5;
};

/// Video i gets primary label i mod L (so every label has positives once V >= L) and,
/// with probability second_label_prob, one more label. Each frame is drawn from the
/// cluster of one of the video's labels chosen uniformly.
std::vector<VideoExample> generate_synthetic(std::uint64_t seed, std::size_t labels, std::size_t videos,
                                             std::size_t dim, const ClusterSpec& clusters,
                                             const SyntheticOptions& options = {});

}  // namespace vidlabel
