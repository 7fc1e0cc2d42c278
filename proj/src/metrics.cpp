#include "vidlabel/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace vidlabel {

namespace {

std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_metric(*v) : "skipped"; }

}  // namespace

int score_bucket(double score) { return static_cast<int>(std::lround(score * kScoreBuckets)); }

void PredictionSet::add(std::string video_id, std::span<const double> scores, std::vector<LabelId> truth) {
    if (scores.size() != label_count())
        throw DataError("video " + video_id + " has " + std::to_string(scores.size()) + " scores, expected " +
                        std::to_string(label_count()));
    for (double s : scores)
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) throw DataError("score outside [0,1] for video " + video_id);
    std::sort(truth.begin(), truth.end());
    truth.erase(std::unique(truth.begin(), truth.end()), truth.end());
    for (LabelId id : truth)
        if (id >= label_count()) throw DataError("truth label " + std::to_string(id) + " out of range for video " + video_id);
    ids_.push_back(std::move(video_id));
    scores_.append_row(scores);
    truth_.push_back(std::move(truth));
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths) {
    if (scores.size() != truths.size()) throw DataError("score and truth lists differ in length");
    // Per-bucket counts, then suffix sums give retrieval counts at every threshold.
    std::vector<std::uint64_t> retrieved(kScoreBuckets + 2, 0), relevant(kScoreBuckets + 2, 0);
    std::uint64_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int b = std::clamp(score_bucket(scores[i]), 0, kScoreBuckets);
        ++retrieved[b];
        if (truths[i]) {
            ++relevant[b];
            ++positives;
        }
    }
    if (positives == 0) return std::nullopt;
    for (int j = kScoreBuckets - 1; j >= 0; --j) {
        retrieved[j] += retrieved[j + 1];
        relevant[j] += relevant[j + 1];
    }
    const double total = static_cast<double>(positives);
    double ap = 0.0;
    for (int j = 1; j <= kScoreBuckets; ++j) {
        if (retrieved[j] == 0) continue;
        const double precision = static_cast<double>(relevant[j]) / static_cast<double>(retrieved[j]);
        const double recall_here = static_cast<double>(relevant[j]) / total;
        const double recall_next = static_cast<double>(relevant[j + 1]) / total;
        ap += precision * (recall_here - recall_next);
    }
    return ap;
}

MapResult mean_average_precision(const PredictionSet& p) {
    MapResult r;
    r.per_class.resize(p.label_count());
    std::vector<double> scores(p.video_count());
    std::vector<std::uint8_t> truths(p.video_count());
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < p.label_count(); ++l) {
        for (std::size_t v = 0; v < p.video_count(); ++v) {
            scores[v] = p.scores(v)[l];
            const auto& g = p.truth(v);
            truths[v] = std::binary_search(g.begin(), g.end(), static_cast<LabelId>(l)) ? 1 : 0;
        }
        r.per_class[l] = average_precision(scores, truths);
        if (r.per_class[l]) {
            sum += *r.per_class[l];
            ++used;
        } else {
            ++r.skipped;
        }
    }
    r.map = used ? sum / static_cast<double>(used) : 0.0;
    return r;
}

std::vector<LabelId> rank_labels(std::span<const double> scores) {
    std::vector<LabelId> order(scores.size());
    std::iota(order.begin(), order.end(), LabelId{0});
    std::stable_sort(order.begin(), order.end(), [&](LabelId a, LabelId b) { return scores[a] > scores[b]; });
    return order;
}

std::optional<double> hit_at_k(const PredictionSet& p, std::size_t k, bool include_empty) {
    if (k < 1) throw UsageError("hit@k needs k >= 1");
    std::size_t hits = 0, counted = 0;
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        const auto& g = p.truth(v);
        if (g.empty()) {
            if (include_empty) ++counted;
            continue;
        }
        ++counted;
        const auto order = rank_labels(p.scores(v));
        const std::size_t top = std::min(k, order.size());
        for (std::size_t r = 0; r < top; ++r) {
            if (std::binary_search(g.begin(), g.end(), order[r])) {
                ++hits;
                break;
            }
        }
    }
    if (counted == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(counted);
}

std::optional<double> perr(const PredictionSet& p) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        const auto& g = p.truth(v);
        if (g.empty()) continue;
        const auto order = rank_labels(p.scores(v));
        std::size_t found = 0;
        for (std::size_t r = 0; r < g.size(); ++r)
            if (std::binary_search(g.begin(), g.end(), order[r])) ++found;
        sum += static_cast<double>(found) / static_cast<double>(g.size());
        ++counted;
    }
    if (counted == 0) return std::nullopt;
    return sum / static_cast<double>(counted);
}

EvalReport evaluate(const PredictionSet& p, std::span<const std::size_t> ks, bool hit_include_empty) {
    static constexpr std::array<std::size_t, 2> kDefaultKs{1, 5};
    if (ks.empty()) ks = kDefaultKs;
    EvalReport r;
    auto m = mean_average_precision(p);
    r.map = m.map;
    r.per_class_ap = std::move(m.per_class);
    r.classes_skipped = m.skipped;
    for (std::size_t k : ks) r.hit_at_k[k] = hit_at_k(p, k, hit_include_empty);
    r.perr = perr(p);
    r.videos = p.video_count();
    for (std::size_t v = 0; v < p.video_count(); ++v)
        if (p.truth(v).empty()) ++r.videos_without_truth;
    return r;
}

io::KeyValues report_key_values(const EvalReport& r) {
    io::KeyValues kv{{"map", format_metric(r.map)}};
    for (const auto& [k, v] : r.hit_at_k) kv.emplace_back("hit_at_" + std::to_string(k), format_optional(v));
    kv.emplace_back("perr", format_optional(r.perr));
    kv.emplace_back("classes", std::to_string(r.per_class_ap.size()));
    kv.emplace_back("classes_skipped", std::to_string(r.classes_skipped));
    kv.emplace_back("videos", std::to_string(r.videos));
    kv.emplace_back("videos_without_truth", std::to_string(r.videos_without_truth));
    return kv;
}

void write_report(const EvalReport& r, const std::filesystem::path& path, const io::KeyValues& provenance) {
    auto kv = provenance;
    const auto body = report_key_values(r);
    kv.insert(kv.end(), body.begin(), body.end());
    io::write_key_values(path, kv);
}

void write_per_class_table(const EvalReport& r, std::span<const std::string> names, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "label_id\tname\tap\n";
    for (std::size_t l = 0; l < r.per_class_ap.size(); ++l) {
        out << l << '\t' << (l < names.size() ? names[l] : std::string{}) << '\t' << format_optional(r.per_class_ap[l])
            << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

void write_predictions(const PredictionSet& p, const std::filesystem::path& path, const io::KeyValues& header) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    for (const auto& [k, v] : header) out << "# " << k << '=' << v << '\n';
    out << "# label_count=" << p.label_count() << '\n';
    char buf[48];
    for (std::size_t v = 0; v < p.video_count(); ++v) {
        const auto s = p.scores(v);
        for (std::size_t l = 0; l < s.size(); ++l) {
            std::snprintf(buf, sizeof(buf), "%.9f", s[l]);
            out << p.video_id(v) << ' ' << l << ' ' << buf << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

PredictionFile read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    PredictionFile f;
    struct Entry {
        std::size_t video;
        std::size_t label;
        double score;
    };
    std::vector<Entry> entries;
    std::unordered_map<std::string, std::size_t> row_of;
    std::string line;
    std::size_t line_no = 0;
    bool have_count = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            const std::string value = line.substr(eq + 1);
            if (key == "label_count") {
                f.label_count = std::stoull(value);
                have_count = true;
            } else {
                f.header.emplace_back(key, value);
            }
            continue;
        }
        std::istringstream ss(line);
        std::string id;
        long long label = -1;
        double score = 0.0;
        if (!(ss >> id >> label >> score) || label < 0)
            throw DataError("malformed prediction line " + std::to_string(line_no) + " in " + path.string());
        auto [it, fresh] = row_of.emplace(id, f.video_ids.size());
        if (fresh) f.video_ids.push_back(id);
        entries.push_back({it->second, static_cast<std::size_t>(label), score});
    }
    if (!have_count) {
        for (const auto& e : entries) f.label_count = std::max(f.label_count, e.label + 1);
    }
    f.scores = RowMatrix(f.video_ids.size(), f.label_count, -1.0);
    for (const auto& e : entries) {
        if (e.label >= f.label_count) throw DataError("prediction label id out of range in " + path.string());
        f.scores(e.video, e.label) = e.score;
    }
    for (double s : f.scores.data())
        if (s < 0.0) throw DataError("missing or negative prediction scores in " + path.string());
    return f;
}

}  // namespace vidlabel
