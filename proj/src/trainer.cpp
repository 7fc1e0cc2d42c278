#include "vidlabel/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

namespace vidlabel {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Uniform subset of `pool` of size min(cap, |pool|), returned in ascending order.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t cap,
                                                    std::mt19937_64& rng) {
    if (pool.size() > cap) {
        for (std::size_t i = 0; i < cap; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(cap);
        std::sort(pool.begin(), pool.end());
    }
    return pool;
}

struct WeightedExample {
    std::size_t row;
    double target;
    double weight;
};

double objective(const Model& model, const TrainingSet& data, std::span<const WeightedExample> examples,
                 std::span<double> scratch) {
    double loss = 0.0;
    for (const auto& e : examples) loss += e.weight * accumulate_loss_gradient(model, data.input(e.row), e.target, 0.0, scratch);
    return loss + regularizer(model);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " expects a real number, got '" + v + "'");
    }
}

}  // namespace

void TrainingSet::add(std::span<const double> features, std::vector<LabelId> labels) {
    if (features.size() != feature_dim_)
        throw DataError("training example has dimension " + std::to_string(features.size()) + ", expected " +
                        std::to_string(feature_dim_));
    inputs_.append_row(with_bias(features));
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    labels_.push_back(std::move(labels));
}

bool TrainingSet::is_positive(std::size_t i, LabelId label) const {
    return std::binary_search(labels_[i].begin(), labels_[i].end(), label);
}

std::vector<double> with_bias(std::span<const double> features) {
    std::vector<double> x(features.begin(), features.end());
    x.push_back(1.0);
    return x;
}

LabelIndex::LabelIndex(const TrainingSet& data, std::size_t label_count)
    : examples_(data.size()), positives_(label_count) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (LabelId id : data.labels(i)) {
            if (id >= label_count)
                throw DataError("label id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(label_count));
            positives_[id].push_back(i);
        }
    }
}

SamplingWeights sampling_weights(std::size_t true_pos, std::size_t true_neg, std::size_t sampled_pos,
                                 std::size_t sampled_neg) {
    if (true_pos == 0 || true_neg == 0 || sampled_pos == 0 || sampled_neg == 0)
        throw DataError("sampling weights need non-zero positive and negative counts");
    const double w = std::sqrt((static_cast<double>(true_pos) * static_cast<double>(sampled_neg)) /
                               (static_cast<double>(true_neg) * static_cast<double>(sampled_pos)));
    return {w, 1.0 / w};
}

SamplingPlan build_sampling_plan(LabelId label, const LabelIndex& index, std::size_t max_per_class,
                                 std::uint64_t seed) {
    if (max_per_class < 1) throw UsageError("max_per_class must be at least 1");
    const auto& pos = index.positives(label);
    SamplingPlan plan;
    plan.label = label;
    plan.max_per_class = max_per_class;
    plan.seed = seed;
    plan.true_pos = pos.size();
    plan.true_neg = index.example_count() - pos.size();
    if (plan.true_pos == 0) throw DataError("label " + std::to_string(label) + " has no positive examples");
    if (plan.true_neg == 0) throw DataError("label " + std::to_string(label) + " has no negative examples");

    std::vector<std::size_t> neg;
    neg.reserve(plan.true_neg);
    std::size_t p = 0;
    for (std::size_t i = 0; i < index.example_count(); ++i) {
        if (p < pos.size() && pos[p] == i) {
            ++p;
            continue;
        }
        neg.push_back(i);
    }

    std::mt19937_64 rng(seed);
    plan.positives = sample_without_replacement(pos, max_per_class, rng);
    plan.negatives = sample_without_replacement(std::move(neg), max_per_class, rng);
    plan.sampled_pos = plan.positives.size();
    plan.sampled_neg = plan.negatives.size();
    const auto w = sampling_weights(plan.true_pos, plan.true_neg, plan.sampled_pos, plan.sampled_neg);
    plan.w_plus = w.positive;
    plan.w_minus = w.negative;
    return plan;
}

std::vector<FrameExample> expand_frame_examples(std::span<const VideoExample> videos, std::size_t frames_per_video,
                                                std::uint64_t seed) {
    if (frames_per_video < 1) throw UsageError("frames_per_video must be at least 1");
    std::vector<FrameExample> out;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        const auto& fs = videos[v].features;
        std::vector<std::size_t> frames(fs.frame_count());
        std::iota(frames.begin(), frames.end(), std::size_t{0});
        std::mt19937_64 rng(mix_seed(seed, v));
        frames = sample_without_replacement(std::move(frames), frames_per_video, rng);
        for (std::size_t t : frames) {
            const auto f = fs.frame(t);
            out.push_back({std::vector<double>(f.begin(), f.end()), videos[v].labels});
        }
    }
    return out;
}

TrainerConfig TrainerConfig::video_level_defaults() {
    TrainerConfig c;
    c.learning_rate = 1.0;
    c.batch_size = 32;
    return c;
}

TrainerConfig TrainerConfig::frame_level_defaults() {
    TrainerConfig c;
    c.model = ModelKind::logistic;
    c.batch_size = 1;
    c.l2 = 1e-6;
    return c;
}

void TrainerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (batch_size < 1) throw UsageError("batch_size must be at least 1");
    if (!(l2 >= 0.0)) throw UsageError("l2 must be non-negative");
    if (iterations < 1) throw UsageError("iterations must be at least 1");
    if (!(adagrad_epsilon > 0.0)) throw UsageError("adagrad_epsilon must be positive");
    if (frames_per_video < 1) throw UsageError("frames_per_video must be at least 1");
    if (max_per_class < 1) throw UsageError("max_per_class must be at least 1");
    if (trace_interval < 1) throw UsageError("trace_interval must be at least 1");
    if (model == ModelKind::moe && mixtures < 1) throw UsageError("mixtures must be at least 1");
    if (model == ModelKind::hinge && !(hinge_margin > 0.0)) throw UsageError("hinge_margin must be positive");
    if (!(init_scale >= 0.0)) throw UsageError("init_scale must be non-negative");
}

io::KeyValues TrainerConfig::to_key_values() const {
    return {{"model", to_string(model)},
            {"mixtures", std::to_string(mixtures)},
            {"hinge_margin", format_double(hinge_margin)},
            {"learning_rate", format_double(learning_rate)},
            {"batch_size", std::to_string(batch_size)},
            {"l2", format_double(l2)},
            {"iterations", std::to_string(iterations)},
            {"adagrad_epsilon", format_double(adagrad_epsilon)},
            {"frames_per_video", std::to_string(frames_per_video)},
            {"max_per_class", std::to_string(max_per_class)},
            {"seed", std::to_string(seed)},
            {"trace_interval", std::to_string(trace_interval)},
            {"init_scale", format_double(init_scale)}};
}

TrainerConfig TrainerConfig::from_key_values(const io::KeyValues& kv, TrainerConfig c) {
    for (const auto& [k, v] : kv) {
        if (k == "model") c.model = parse_model_kind(v);
        else if (k == "mixtures") c.mixtures = parse_size(k, v);
        else if (k == "hinge_margin") c.hinge_margin = parse_real(k, v);
        else if (k == "learning_rate") c.learning_rate = parse_real(k, v);
        else if (k == "batch_size") c.batch_size = parse_size(k, v);
        else if (k == "l2") c.l2 = parse_real(k, v);
        else if (k == "iterations") c.iterations = parse_size(k, v);
        else if (k == "adagrad_epsilon") c.adagrad_epsilon = parse_real(k, v);
        else if (k == "frames_per_video") c.frames_per_video = parse_size(k, v);
        else if (k == "max_per_class") c.max_per_class = parse_size(k, v);
        else if (k == "seed") c.seed = parse_size(k, v);
        else if (k == "trace_interval") c.trace_interval = parse_size(k, v);
        else if (k == "init_scale") c.init_scale = parse_real(k, v);
        else throw UsageError("unknown trainer config key: " + k);
    }
    return c;
}

TrainerConfig TrainerConfig::from_key_values(const io::KeyValues& kv) { return from_key_values(kv, TrainerConfig{}); }

void save_trainer_config(const TrainerConfig& cfg, const std::filesystem::path& path) {
    io::write_key_values(path, cfg.to_key_values());
}

TrainerConfig load_trainer_config(const std::filesystem::path& path, TrainerConfig base) {
    return TrainerConfig::from_key_values(io::read_key_values(path), base);
}

std::uint64_t label_seed(std::uint64_t global_seed, LabelId label) { return mix_seed(global_seed, 0x1ABE1000ULL + label); }

Model initial_model(const TrainerConfig& cfg, std::size_t feature_dim, std::uint64_t seed) {
    switch (cfg.model) {
        case ModelKind::logistic: return LogisticModel::zeros(feature_dim, cfg.l2);
        case ModelKind::hinge: return HingeModel::zeros(feature_dim, cfg.hinge_margin, cfg.l2);
        case ModelKind::moe: {
            MoEModel m = MoEModel::zeros(feature_dim, cfg.mixtures, cfg.l2);
            if (cfg.init_scale > 0.0) {
                std::mt19937_64 rng(mix_seed(seed, 0x1417ULL));
                std::normal_distribution<double> normal(0.0, cfg.init_scale);
                for (double& v : m.params) v = normal(rng);
            }
            return m;
        }
    }
    throw UsageError("unknown model kind");
}

TrainResult train_label(Model model, LabelId label, const TrainingSet& data, const LabelIndex& index,
                        const TrainerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (feature_dim(model) != data.feature_dim()) throw DataError("model and training data dimensions differ");

    TrainResult result;
    const std::size_t n_params = parameter_count(model);
    std::vector<double> grad(n_params), scratch(n_params);
    std::vector<WeightedExample> examples;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const SamplingPlan plan = build_sampling_plan(label, index, cfg.max_per_class, mix_seed(seed, 2 * iter));
        examples.clear();
        for (std::size_t i : plan.positives) examples.push_back({i, 1.0, plan.w_plus});
        for (std::size_t i : plan.negatives) examples.push_back({i, 0.0, plan.w_minus});
        if (examples.empty()) throw DataError("empty sample for label " + std::to_string(label));
        std::mt19937_64 rng(mix_seed(seed, 2 * iter + 1));
        std::shuffle(examples.begin(), examples.end(), rng);
        if (iter == 0) {
            result.loss_trace.push_back(objective(model, data, examples, scratch));
            result.true_pos = plan.true_pos;
            result.true_neg = plan.true_neg;
        }
        result.sampled_pos = plan.sampled_pos;
        result.sampled_neg = plan.sampled_neg;

        const double sample_size = static_cast<double>(examples.size());
        auto params = parameters(model);
        auto accum = adagrad_state(model);
        for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(examples.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const auto& e = examples[b];
                const double loss = accumulate_loss_gradient(model, data.input(e.row), e.target, e.weight, grad);
                if (!std::isfinite(loss))
                    throw NumericalError("non-finite loss for label " + std::to_string(label) + " at step " +
                                         std::to_string(result.steps));
            }
            accumulate_regularizer_gradient(model, static_cast<double>(stop - start) / sample_size, grad);
            for (std::size_t j = 0; j < n_params; ++j) {
                accum[j] += grad[j] * grad[j];
                params[j] -= cfg.learning_rate * grad[j] / std::sqrt(accum[j] + cfg.adagrad_epsilon);
            }
            ++result.steps;
        }

        if ((iter + 1) % cfg.trace_interval == 0 || iter + 1 == cfg.iterations) {
            const double obj = objective(model, data, examples, scratch);
            if (!std::isfinite(obj)) throw NumericalError("non-finite objective for label " + std::to_string(label));
            result.loss_trace.push_back(obj);
        }
    }
    result.model = std::move(model);
    return result;
}

const char* to_string(LabelStatus status) {
    switch (status) {
        case LabelStatus::trained: return "trained";
        case LabelStatus::skipped: return "skipped";
        case LabelStatus::failed: return "failed";
    }
    return "unknown";
}

std::size_t ModelBank::trained_count() const {
    return static_cast<std::size_t>(std::count_if(models.begin(), models.end(), [](const auto& m) { return m.has_value(); }));
}

ModelBank train_all(const LabelVocabulary& labels, const TrainerConfig& cfg, const TrainingSet& data,
                    std::size_t workers) {
    cfg.validate();
    if (workers < 1) throw UsageError("worker count must be at least 1");
    const LabelIndex index(data, labels.size());

    ModelBank bank;
    bank.kind = cfg.model;
    bank.feature_dim = data.feature_dim();
    bank.models.resize(labels.size());
    bank.reports.resize(labels.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t l = next++; l < labels.size(); l = next++) {
            const auto label = static_cast<LabelId>(l);
            LabelReport& report = bank.reports[l];
            report.label = label;
            const auto& pos = index.positives(label);
            report.true_pos = pos.size();
            report.true_neg = index.example_count() - pos.size();
            if (report.true_pos == 0 || report.true_neg == 0) {
                report.status = LabelStatus::skipped;
                report.message = report.true_pos == 0 ? "no positive examples" : "no negative examples";
                continue;
            }
            try {
                const std::uint64_t seed = label_seed(cfg.seed, label);
                TrainResult r = train_label(initial_model(cfg, data.feature_dim(), seed), label, data, index, cfg, seed);
                report.steps = r.steps;
                report.initial_loss = r.loss_trace.front();
                report.final_loss = r.loss_trace.back();
                bank.models[l] = std::move(r.model);
            } catch (const Error& e) {
                report.status = LabelStatus::failed;
                report.message = e.what();
            }
        }
    };

    const std::size_t n_threads = std::min(workers, std::max<std::size_t>(labels.size(), 1));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    return bank;
}

void save_bank(const ModelBank& bank, const std::filesystem::path& dir, const io::KeyValues& provenance) {
    std::filesystem::create_directories(dir);
    io::KeyValues index{{"kind", to_string(bank.kind)},
                        {"feature_dim", std::to_string(bank.feature_dim)},
                        {"label_count", std::to_string(bank.label_count())}};
    index.insert(index.end(), provenance.begin(), provenance.end());
    for (std::size_t l = 0; l < bank.label_count(); ++l) {
        const std::string prefix = "label." + std::to_string(l) + ".";
        const LabelReport& r = bank.reports[l];
        index.emplace_back(prefix + "status", to_string(r.status));
        if (bank.models[l]) {
            char name[32];
            std::snprintf(name, sizeof(name), "label_%05zu.mdl", l);
            save_model(*bank.models[l], dir / name);
            index.emplace_back(prefix + "file", name);
        }
        index.emplace_back(prefix + "positives", std::to_string(r.true_pos));
        index.emplace_back(prefix + "negatives", std::to_string(r.true_neg));
        index.emplace_back(prefix + "steps", std::to_string(r.steps));
        index.emplace_back(prefix + "initial_loss", format_double(r.initial_loss));
        index.emplace_back(prefix + "final_loss", format_double(r.final_loss));
        if (!r.message.empty()) index.emplace_back(prefix + "message", r.message);
    }
    io::write_key_values(dir / "index.txt", index);
}

ModelBank load_bank(const std::filesystem::path& dir) {
    const auto kv = io::read_key_values(dir / "index.txt");
    auto need = [&](std::string_view key) -> const std::string& {
        const std::string* v = io::find_value(kv, key);
        if (!v) throw DataError("model bank index lacks key " + std::string(key));
        return *v;
    };
    ModelBank bank;
    bank.kind = parse_model_kind(need("kind"));
    bank.feature_dim = std::stoull(need("feature_dim"));
    const std::size_t count = std::stoull(need("label_count"));
    bank.models.resize(count);
    bank.reports.resize(count);
    for (std::size_t l = 0; l < count; ++l) {
        const std::string prefix = "label." + std::to_string(l) + ".";
        LabelReport& r = bank.reports[l];
        r.label = static_cast<LabelId>(l);
        const std::string& status = need(prefix + "status");
        r.status = status == "trained" ? LabelStatus::trained : status == "skipped" ? LabelStatus::skipped : LabelStatus::failed;
        r.true_pos = std::stoull(need(prefix + "positives"));
        r.true_neg = std::stoull(need(prefix + "negatives"));
        r.steps = std::stoull(need(prefix + "steps"));
        r.initial_loss = std::stod(need(prefix + "initial_loss"));
        r.final_loss = std::stod(need(prefix + "final_loss"));
        if (const auto* msg = io::find_value(kv, prefix + "message")) r.message = *msg;
        if (const auto* file = io::find_value(kv, prefix + "file")) {
            Model m = load_model(dir / *file);
            if (kind_of(m) != bank.kind || feature_dim(m) != bank.feature_dim)
                throw DataError("model file " + *file + " does not match the bank header");
            bank.models[l] = std::move(m);
        }
    }
    return bank;
}

std::vector<double> predict_video_frame_level(const ModelBank& bank, const RowMatrix& frames) {
    if (frames.rows() == 0) throw DataError("frame-level prediction needs at least one frame");
    std::vector<double> out(bank.label_count(), 0.0);
    for (std::size_t l = 0; l < bank.label_count(); ++l) {
        if (!bank.models[l]) continue;
        double s = 0.0;
        for (std::size_t t = 0; t < frames.rows(); ++t) s += predict(*bank.models[l], frames.row(t));
        out[l] = s / static_cast<double>(frames.rows());
    }
    return out;
}

std::vector<double> predict_video_level(const ModelBank& bank, std::span<const double> descriptor) {
    std::vector<double> out(bank.label_count(), 0.0);
    for (std::size_t l = 0; l < bank.label_count(); ++l)
        if (bank.models[l]) out[l] = predict(*bank.models[l], descriptor);
    return out;
}

}  // namespace vidlabel
