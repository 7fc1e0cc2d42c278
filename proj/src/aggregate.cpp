#include "vidlabel/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "vidlabel/binary_io.hpp"

namespace vidlabel {

namespace {

constexpr io::Magic kDescriptorMagic = io::make_magic("YT8MAGG0");

// Neumaier-compensated sum; keeps aggregates stable under frame reordering.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

void require_frames(const RowMatrix& frames) {
    if (frames.rows() == 0) throw DataError("aggregation needs at least one frame");
}

}  // namespace

std::span<const double> VideoDescriptor::component(std::string_view name) const {
    for (const auto& c : layout)
        if (c.name == name) return {values.data() + c.offset, c.length};
    throw DataError("descriptor has no component named " + std::string(name));
}

MeanStd aggregate_mean_std(const RowMatrix& frames) {
    require_frames(frames);
    const std::size_t f = frames.rows(), d = frames.cols();
    MeanStd out{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t j = 0; j < d; ++j) {
        CompensatedSum s;
        for (std::size_t t = 0; t < f; ++t) s.add(frames(t, j));
        const double mean = s.value() / static_cast<double>(f);
        CompensatedSum sq;
        for (std::size_t t = 0; t < f; ++t) {
            const double r = frames(t, j) - mean;
            sq.add(r * r);
        }
        out.mean[j] = mean;
        out.std[j] = std::sqrt(sq.value() / static_cast<double>(f));
    }
    return out;
}

MeanStd aggregate_mean_std(const FrameFeatureSet& frames) { return aggregate_mean_std(frames.to_matrix()); }

std::vector<double> aggregate_topk(const RowMatrix& frames, std::size_t k) {
    require_frames(frames);
    if (k < 1) throw UsageError("top-K needs K >= 1");
    const std::size_t f = frames.rows(), d = frames.cols();
    std::vector<double> out(k * d);
    std::vector<double> column(f);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t t = 0; t < f; ++t) column[t] = frames(t, j);
        const std::size_t take = std::min(k, f);
        std::partial_sort(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(take), column.end(),
                          std::greater<>());
        const double minimum = *std::min_element(column.begin(), column.end());
        for (std::size_t p = 0; p < k; ++p) out[j * k + p] = p < take ? column[p] : minimum;
    }
    return out;
}

std::vector<double> aggregate_topk(const FrameFeatureSet& frames, std::size_t k) {
    return aggregate_topk(frames.to_matrix(), k);
}

DescriptorLayout descriptor_layout(std::size_t dim, std::size_t k, DescriptorComponents components) {
    if (!components.any()) throw UsageError("descriptor needs at least one component");
    DescriptorLayout layout;
    std::size_t offset = 0;
    auto add = [&](const char* name, std::size_t length) {
        layout.push_back({name, offset, length});
        offset += length;
    };
    if (components.mean) add("mean", dim);
    if (components.std) add("std", dim);
    if (components.topk) add("topk", dim * k);
    return layout;
}

VideoDescriptor build_descriptor(const RowMatrix& frames, std::size_t k, DescriptorComponents components) {
    require_frames(frames);
    VideoDescriptor desc;
    desc.layout = descriptor_layout(frames.cols(), k, components);
    if (components.mean || components.std) {
        const MeanStd ms = aggregate_mean_std(frames);
        if (components.mean) desc.values.insert(desc.values.end(), ms.mean.begin(), ms.mean.end());
        if (components.std) desc.values.insert(desc.values.end(), ms.std.begin(), ms.std.end());
    }
    if (components.topk) {
        const auto top = aggregate_topk(frames, k);
        desc.values.insert(desc.values.end(), top.begin(), top.end());
    }
    return desc;
}

VideoDescriptor build_descriptor(const FrameFeatureSet& frames, std::size_t k, DescriptorComponents components) {
    return build_descriptor(frames.to_matrix(), k, components);
}

WhiteningTransform fit_global_normalizer(const RowMatrix& descriptors, std::size_t output_dim) {
    const std::size_t dim = output_dim == 0 ? descriptors.cols() : output_dim;
    if (descriptors.rows() <= descriptors.cols() && output_dim == 0)
        throw UsageError("global normalizer needs more descriptors (" + std::to_string(descriptors.rows()) +
                         ") than descriptor dimensions (" + std::to_string(descriptors.cols()) + ")");
    return fit_whitening(descriptors, dim);
}

FlaggedVector normalize_descriptor(const WhiteningTransform& normalizer, std::span<const double> descriptor) {
    return apply_whitening(normalizer, descriptor, true);
}

void write_descriptors(const DescriptorFile& file, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.magic(kDescriptorMagic);
    w.u32(static_cast<std::uint32_t>(file.dim));
    w.u32(static_cast<std::uint32_t>(file.layout.size()));
    for (const auto& c : file.layout) {
        w.short_string(c.name);
        w.u32(static_cast<std::uint32_t>(c.offset));
        w.u32(static_cast<std::uint32_t>(c.length));
    }
    w.u64(file.records.size());
    for (const auto& rec : file.records) {
        if (rec.values.size() != file.dim)
            throw DataError("descriptor of video " + rec.video_id + " has the wrong length");
        w.short_string(rec.video_id);
        w.u16(static_cast<std::uint16_t>(rec.labels.size()));
        for (LabelId id : rec.labels) w.u32(id);
        for (double v : rec.values) w.f32(static_cast<float>(v));
    }
    w.finish();
}

DescriptorFile read_descriptors(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    r.expect_magic(kDescriptorMagic);
    DescriptorFile file;
    file.dim = r.u32();
    const std::uint32_t n_components = r.u32();
    std::size_t covered = 0;
    for (std::uint32_t i = 0; i < n_components; ++i) {
        DescriptorComponent c;
        c.name = r.short_string();
        c.offset = r.u32();
        c.length = r.u32();
        if (c.offset != covered) throw DataError("descriptor layout is not contiguous in " + path.string());
        covered += c.length;
        file.layout.push_back(std::move(c));
    }
    if (covered != file.dim) throw DataError("descriptor layout does not cover the descriptor in " + path.string());
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 8 + 1) throw DataError("truncated file: " + path.string());
    file.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        DescriptorRecord rec;
        rec.video_id = r.short_string();
        rec.labels.resize(r.u16());
        for (auto& id : rec.labels) id = r.u32();
        rec.values.resize(file.dim);
        for (auto& v : rec.values) v = r.f32();
        file.records.push_back(std::move(rec));
    }
    if (!r.at_end()) throw DataError("trailing bytes after last record in " + path.string());
    return file;
}

}  // namespace vidlabel
