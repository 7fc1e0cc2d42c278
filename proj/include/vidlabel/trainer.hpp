#pragma once

// Online one-vs-all training: capped class-balanced sampling with
// distribution-preserving weights, Adagrad updates, per-label parallel
// orchestration, and frame-/video-level inference.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidlabel/binary_io.hpp"
#include "vidlabel/common.hpp"
#include "vidlabel/features.hpp"
#include "vidlabel/models.hpp"

namespace vidlabel {

/// Examples for one-vs-all training. Inputs carry the trailing bias coordinate.
class TrainingSet {
public:
    explicit TrainingSet(std::size_t feature_dim = 0) : feature_dim_(feature_dim) {}

    // `features` has length D; the bias 1 is appended. Labels are sorted on insertion.
    void add(std::span<const double> features, std::vector<LabelId> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    std::span<const double> input(std::size_t i) const { return inputs_.row(i); }
    const std::vector<LabelId>& labels(std::size_t i) const { return labels_[i]; }
    bool is_positive(std::size_t i, LabelId label) const;

private:
    std::size_t feature_dim_;
    RowMatrix inputs_;
    std::vector<std::vector<LabelId>> labels_;
};

// Appends the constant 1 bias coordinate.
std::vector<double> with_bias(std::span<const double> features);

/// Sorted positive example indices per label.
class LabelIndex {
public:
    LabelIndex(const TrainingSet& data, std::size_t label_count);

    std::size_t example_count() const noexcept { return examples_; }
    std::size_t label_count() const noexcept { return positives_.size(); }
    const std::vector<std::size_t>& positives(LabelId label) const { return positives_.at(label); }

private:
    std::size_t examples_;
    std::vector<std::vector<std::size_t>> positives_;
};

inline constexpr std::size_t kDefaultMaxPerClass = 200000;

struct SamplingWeights {
    double positive = 1.0;  // w+
    double negative = 1.0;  // w- = 1 / w+
};

/// w+ = 1/w- = sqrt(Tp Sn / (Tn Sp)), so that w+ Sp / (w- Sn) = Tp / Tn.
SamplingWeights sampling_weights(std::size_t true_pos, std::size_t true_neg, std::size_t sampled_pos,
                                 std::size_t sampled_neg);

struct SamplingPlan {
    LabelId label = 0;
    std::size_t max_per_class = kDefaultMaxPerClass;
    std::uint64_t seed = 0;
    std::size_t true_pos = 0;
    std::size_t true_neg = 0;
    std::size_t sampled_pos = 0;
    std::size_t sampled_neg = 0;
    double w_plus = 1.0;
    double w_minus = 1.0;
    std::vector<std::size_t> positives;  // sampled example indices, ascending
    std::vector<std::size_t> negatives;
};

/// Uniform sampling without replacement of up to M positives and M negatives.
/// Throws DataError when the label has no positives or no negatives.
SamplingPlan build_sampling_plan(LabelId label, const LabelIndex& index, std::size_t max_per_class,
                                 std::uint64_t seed);

struct FrameExample {
    std::vector<double> frame;
    std::vector<LabelId> labels;
};

/// min(F, frames_per_video) distinct frames per video, uniformly sampled (kept in frame
/// order), each carrying the video's full label set.
std::vector<FrameExample> expand_frame_examples(std::span<const VideoExample> videos, std::size_t frames_per_video,
                                                std::uint64_t seed);

struct TrainerConfig {
    ModelKind model = ModelKind::moe;
    std::size_t mixtures = kDefaultMixtures;
    double hinge_margin = 1.0;
    double learning_rate = 1.0;
    // Batches larger than the sample run in full-batch mode.
    std::size_t batch_size = 32;
    double l2 = kDefaultL2;
    std::size_t iterations = 10;
    double adagrad_epsilon = 1e-6;
    std::size_t frames_per_video = 20;
    std::size_t max_per_class = kDefaultMaxPerClass;
    std::uint64_t seed = 0;
    // Record the objective every this many iterations (plus the initial value).
    std::size_t trace_interval = 1;
    // Standard deviation of the random MoE initialization (breaks expert symmetry).
    double init_scale = 0.01;

    static TrainerConfig video_level_defaults();
    static TrainerConfig frame_level_defaults();

    void validate() const;
    io::KeyValues to_key_values() const;
    // Unknown keys are a UsageError.
    static TrainerConfig from_key_values(const io::KeyValues& kv, TrainerConfig base);
    static TrainerConfig from_key_values(const io::KeyValues& kv);
};

void save_trainer_config(const TrainerConfig& cfg, const std::filesystem::path& path);
TrainerConfig load_trainer_config(const std::filesystem::path& path, TrainerConfig base = {});

// Per-label RNG stream seed derived from (global seed, label).
std::uint64_t label_seed(std::uint64_t global_seed, LabelId label);

Model initial_model(const TrainerConfig& cfg, std::size_t feature_dim, std::uint64_t seed);

struct TrainResult {
    Model model;
    std::vector<double> loss_trace;  // weighted objective over the iteration's sample
    std::size_t steps = 0;
    std::size_t sampled_pos = 0;
    std::size_t sampled_neg = 0;
    std::size_t true_pos = 0;
    std::size_t true_neg = 0;
};

/// Each iteration draws a fresh sampling plan, shuffles it, and makes one Adagrad pass
/// in mini-batches. Per batch the gradient is sum_i w_i dL_i plus the regularizer scaled
/// by batch_size / sample_size. Throws NumericalError on a non-finite loss.
TrainResult train_label(Model model, LabelId label, const TrainingSet& data, const LabelIndex& index,
                        const TrainerConfig& cfg, std::uint64_t seed);

enum class LabelStatus { trained, skipped, failed };

const char* to_string(LabelStatus status);

struct LabelReport {
    LabelId label = 0;
    LabelStatus status = LabelStatus::trained;
    std::string message;
    std::size_t steps = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t true_pos = 0;
    std::size_t true_neg = 0;
};

struct ModelBank {
    ModelKind kind = ModelKind::logistic;
    std::size_t feature_dim = 0;
    std::vector<std::optional<Model>> models;  // indexed by label id; empty when not trained
    std::vector<LabelReport> reports;

    std::size_t label_count() const noexcept { return models.size(); }
    std::size_t trained_count() const;
};

/// Trains every label independently on `workers` threads. Output is identical for any
/// worker count. Per-label failures are reported in the bank, not thrown.
ModelBank train_all(const LabelVocabulary& labels, const TrainerConfig& cfg, const TrainingSet& data,
                    std::size_t workers);

/// Directory of per-label model files plus index.txt (label -> file, stats, provenance).
void save_bank(const ModelBank& bank, const std::filesystem::path& dir, const io::KeyValues& provenance = {});
ModelBank load_bank(const std::filesystem::path& dir);

/// Mean of per-frame probabilities per label; `frames` rows include the bias coordinate.
/// Untrained labels score 0.
std::vector<double> predict_video_frame_level(const ModelBank& bank, const RowMatrix& frames);
std::vector<double> predict_video_level(const ModelBank& bank, std::span<const double> descriptor);

}  // namespace vidlabel
