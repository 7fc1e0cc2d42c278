#pragma once

// File-to-file pipeline stages behind the command-line subcommands. Every stage
// reads its inputs from disk and writes its outputs to disk, embedding the seed
// and a config hash in each artifact (header, manifest, or "<artifact>.meta").

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vidlabel/aggregate.hpp"
#include "vidlabel/binary_io.hpp"
#include "vidlabel/features.hpp"
#include "vidlabel/metrics.hpp"
#include "vidlabel/trainer.hpp"

namespace vidlabel::pipeline {

namespace fs = std::filesystem;

// FNV-1a over "key=value\n" lines in the given order, as 16 hex digits.
std::string config_hash(const io::KeyValues& params);

// stage, seed, config_hash, then the parameters themselves.
io::KeyValues provenance(const std::string& stage, std::uint64_t seed, const io::KeyValues& params);

fs::path meta_path_for(const fs::path& artifact);
void write_meta(const fs::path& artifact, const io::KeyValues& kv);
// Empty when the sidecar does not exist.
io::KeyValues read_meta(const fs::path& artifact);

// Partition recorded in the file's manifest, if any.
std::optional<Partition> partition_of(const fs::path& feature_file);

// --- gen-synthetic ---

struct GenerateOptions {
    fs::path out_dir;
    std::size_t labels = 8;
    std::size_t videos = 2000;
    std::size_t dim = 32;
    double separation = 4.0;
    double scale = 1.0;
    SyntheticOptions synthetic;
    std::uint64_t seed = 0;
};

struct GenerateResult {
    fs::path train, validate, test, labels;
    std::size_t train_count = 0, validate_count = 0, test_count = 0;
};

/// Splits generated videos 70/20/10 by count into train/validate/test feature files.
GenerateResult generate(const GenerateOptions& opt);

// --- preprocess ---

struct PreprocessOptions {
    fs::path fit_input;  // must be the train partition unless allow_fit_partition
    std::vector<fs::path> inputs;
    fs::path out_dir;
    std::size_t output_dim = 0;  // 0 keeps D
    int lloyd_iterations = kDefaultLloydIterations;
    bool allow_fit_partition = false;
    std::uint64_t seed = 0;
};

struct RoundTripStats {
    fs::path input;
    fs::path output;
    std::size_t frames = 0;
    double whitened_relative_error = 0.0;  // mean ||z' - z|| / ||z|| after reconstruct and re-whiten
    double input_relative_error = 0.0;     // mean ||x' - x|| / ||x||
};

struct PreprocessResult {
    fs::path transform, quantizer, report;
    std::vector<RoundTripStats> outputs;
};

/// Fits whitening and the quantizer on the fit input, then writes each input as
/// dequantized whitened frames to "<out_dir>/<stem>.q.yt8m", plus a round-trip report.
PreprocessResult preprocess(const PreprocessOptions& opt);

// --- encode ---

enum class EncodeMethod { stats, fisher, vlad };
const char* to_string(EncodeMethod m);
EncodeMethod parse_encode_method(std::string_view text);

struct EncodeOptions {
    fs::path input;      // preprocessed frame features
    fs::path output;     // descriptor file
    // Stats encoding reconstructs activations by inverting the quantizer and the whitening.
    fs::path transform;
    fs::path quantizer;
    EncodeMethod method = EncodeMethod::stats;
    std::size_t topk = kDefaultTopK;
    DescriptorComponents components;
    std::size_t codebook_size = 4;
    fs::path codebook;  // GMM (fisher) or k-means (vlad)
    bool fit_codebook = false;
    fs::path normalizer;  // global PCA + whitening over descriptors; empty disables
    bool fit_normalizer = false;
    std::size_t max_fit_frames = 200000;
    bool allow_fit_partition = false;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct EncodeResult {
    fs::path output;
    std::size_t videos = 0;
    std::size_t dim = 0;
    std::size_t degenerate = 0;
};

EncodeResult encode(const EncodeOptions& opt);

// --- train / predict ---

enum class Level { frame, video };
const char* to_string(Level level);
Level parse_level(std::string_view text);

struct TrainOptions {
    fs::path input;  // frame features (frame level) or descriptors (video level)
    fs::path labels;
    fs::path bank_dir;
    Level level = Level::video;
    TrainerConfig config;
    bool l2_normalize_frames = true;
    std::size_t workers = 1;
};

struct TrainSummary {
    std::size_t examples = 0;
    std::size_t trained = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
};

/// Trains the model bank and writes "<bank_dir>/training_report.tsv".
TrainSummary train(const TrainOptions& opt);

struct PredictOptions {
    fs::path input;
    fs::path bank_dir;
    fs::path output;
};

// Level and frame normalization are taken from the bank's provenance.
std::size_t predict(const PredictOptions& opt);

// --- evaluate / oracle ---

struct TruthSet {
    std::size_t dim = 0;
    std::vector<std::string> video_ids;
    std::vector<std::vector<LabelId>> labels;
};

// Reads ground truth from a feature file or a descriptor file.
TruthSet load_truth(const fs::path& path);

// Joins predictions with ground truth; refuses mismatched feature dims or missing videos.
PredictionSet join_predictions(const PredictionFile& predictions, const TruthSet& truth);

struct EvaluateOptions {
    fs::path predictions;
    fs::path truth;
    fs::path report;
    fs::path per_class_table;  // optional
    fs::path labels;           // optional names for the per-class table
    std::vector<std::size_t> ks{1, 5};
    bool hit_include_empty = false;
};

EvalReport evaluate(const EvaluateOptions& opt);

}  // namespace vidlabel::pipeline
