#pragma once

// Fixed-length video descriptors from frame features: [mean; std; Top_K].

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vidlabel/common.hpp"
#include "vidlabel/features.hpp"
#include "vidlabel/preprocess.hpp"

namespace vidlabel {

inline constexpr std::size_t kDefaultTopK = 5;

struct DescriptorComponent {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const DescriptorComponent&) const = default;
};

using DescriptorLayout = std::vector<DescriptorComponent>;

struct VideoDescriptor {
    std::vector<double> values;
    DescriptorLayout layout;

    // Throws DataError if the component is absent.
    std::span<const double> component(std::string_view name) const;
};

struct MeanStd {
    std::vector<double> mean;
    std::vector<double> std;  // population convention (divide by F)
};

MeanStd aggregate_mean_std(const RowMatrix& frames);
MeanStd aggregate_mean_std(const FrameFeatureSet& frames);

/// Dimension-major K x D block: entries [j*K, (j+1)*K) are the K largest values of
/// dimension j in descending order, padded with that dimension's minimum when F < K.
std::vector<double> aggregate_topk(const RowMatrix& frames, std::size_t k);
std::vector<double> aggregate_topk(const FrameFeatureSet& frames, std::size_t k);

struct DescriptorComponents {
    bool mean = true;
    bool std = true;
    bool topk = true;

    bool any() const noexcept { return mean || std || topk; }
};

// Layout for the enabled components in fixed order mean, std, topk.
DescriptorLayout descriptor_layout(std::size_t dim, std::size_t k, DescriptorComponents components);

VideoDescriptor build_descriptor(const RowMatrix& frames, std::size_t k, DescriptorComponents components);
VideoDescriptor build_descriptor(const FrameFeatureSet& frames, std::size_t k, DescriptorComponents components);

/// Center + PCA-whiten fitted over a sample of descriptors (one per row). output_dim 0
/// keeps every direction.
WhiteningTransform fit_global_normalizer(const RowMatrix& descriptors, std::size_t output_dim = 0);

// center -> whiten -> L2 normalize.
FlaggedVector normalize_descriptor(const WhiteningTransform& normalizer, std::span<const double> descriptor);

/// One video's entry in a descriptor file.
struct DescriptorRecord {
    std::string video_id;
    std::vector<LabelId> labels;
    std::vector<double> values;

    bool operator==(const DescriptorRecord&) const = default;
};

struct DescriptorFile {
    std::size_t dim = 0;
    DescriptorLayout layout;
    std::vector<DescriptorRecord> records;
};

// Values are stored as 32-bit floats.
void write_descriptors(const DescriptorFile& file, const std::filesystem::path& path);
DescriptorFile read_descriptors(const std::filesystem::path& path);

}  // namespace vidlabel
