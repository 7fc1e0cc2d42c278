#pragma once

// Ranking metrics over per-video label scores: bucketed average precision and
// its class mean, Hit@k, and precision at equal recall rate (PERR).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidlabel/binary_io.hpp"
#include "vidlabel/common.hpp"

namespace vidlabel {

inline constexpr int kScoreBuckets = 10000;

// Nearest 1e-4 bucket, in [0, 10000].
int score_bucket(double score);

/// Scores for V videos over L labels, plus each video's ground-truth label set.
class PredictionSet {
public:
    explicit PredictionSet(std::size_t label_count = 0) : scores_(0, label_count) {}

    // Throws DataError on bad width, non-finite or out-of-range scores, or label ids >= L.
    void add(std::string video_id, std::span<const double> scores, std::vector<LabelId> truth);

    std::size_t video_count() const noexcept { return ids_.size(); }
    std::size_t label_count() const noexcept { return scores_.cols(); }
    const std::string& video_id(std::size_t v) const { return ids_[v]; }
    std::span<const double> scores(std::size_t v) const { return scores_.row(v); }
    const std::vector<LabelId>& truth(std::size_t v) const { return truth_[v]; }

private:
    std::vector<std::string> ids_;
    RowMatrix scores_;
    std::vector<std::vector<LabelId>> truth_;
};

/// sum_{j=1}^{10000} P(tau_j) [R(tau_j) - R(tau_{j+1})] with tau_j = j/10000 and
/// R(tau_10001) = 0. Examples are retrieved at tau_j when their bucket is >= j, so
/// bucket-0 scores are never retrieved. Empty retrieval sets contribute 0.
/// Returns nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths);

struct MapResult {
    double map = 0.0;  // 0 when every class was skipped
    std::vector<std::optional<double>> per_class;
    std::size_t skipped = 0;
};

/// Unweighted mean over classes with at least one positive.
MapResult mean_average_precision(const PredictionSet& p);

// Labels ranked by descending score; ties go to the lower label id.
std::vector<LabelId> rank_labels(std::span<const double> scores);

/// Fraction of videos with a ground-truth label among the top k. Videos with empty truth
/// are excluded from the denominator unless `include_empty`. nullopt on an empty denominator.
std::optional<double> hit_at_k(const PredictionSet& p, std::size_t k, bool include_empty = false);

/// Mean over videos with non-empty truth of |G_v ∩ top |G_v|| / |G_v|. nullopt when no
/// video has ground truth.
std::optional<double> perr(const PredictionSet& p);

struct EvalReport {
    double map = 0.0;
    std::vector<std::optional<double>> per_class_ap;
    std::map<std::size_t, std::optional<double>> hit_at_k;
    std::optional<double> perr;
    std::size_t classes_skipped = 0;
    std::size_t videos = 0;
    std::size_t videos_without_truth = 0;
};

EvalReport evaluate(const PredictionSet& p, std::span<const std::size_t> ks = {}, bool hit_include_empty = false);

io::KeyValues report_key_values(const EvalReport& r);
void write_report(const EvalReport& r, const std::filesystem::path& path, const io::KeyValues& provenance = {});
// Tab-separated "label_id\tname\tap" rows; skipped classes print "skipped".
void write_per_class_table(const EvalReport& r, std::span<const std::string> names, const std::filesystem::path& path);

/// Text lines "video_id label_id score" (score at 9 decimals) preceded by "# key=value"
/// header lines. Truth sets are not stored.
void write_predictions(const PredictionSet& p, const std::filesystem::path& path, const io::KeyValues& header = {});

struct PredictionFile {
    io::KeyValues header;
    std::size_t label_count = 0;
    std::vector<std::string> video_ids;  // first-appearance order
    RowMatrix scores;                    // V x L; missing entries are an error
};

PredictionFile read_predictions(const std::filesystem::path& path);

}  // namespace vidlabel
