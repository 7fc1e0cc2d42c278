#include "vidlabel/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "vidlabel/encoders.hpp"
#include "vidlabel/preprocess.hpp"

namespace vidlabel::pipeline {

namespace {

const io::Magic kFeatureMagicBytes = io::make_magic("YT8MDESK");
const io::Magic kDescriptorMagicBytes = io::make_magic("YT8MAGG0");

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string num(std::size_t v) { return std::to_string(v); }

// Runs fn(i) for i in [0, n) on up to `workers` threads; each index is written by one thread.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                    next = n;
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string upstream_hash(const fs::path& input) {
    const auto meta = read_meta(input);
    if (const auto* h = io::find_value(meta, "config_hash")) return *h;
    const auto m = manifest_path_for(input);
    if (fs::exists(m)) {
        const auto manifest = read_manifest(m);
        if (const auto* h = io::find_value(manifest.provenance, "config_hash")) return *h;
    }
    return "none";
}

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes));
}

void check_fit_partition(const fs::path& input, bool allow, const std::string& what) {
    const auto p = partition_of(input);
    if (p == Partition::train || allow) return;
    throw UsageError(what + " must be fitted on the train partition; " + input.string() + " is " +
                     (p ? to_string(*p) : std::string("of unknown partition")) + " (use --allow-fit-partition)");
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::uint64_t seed_of(const io::KeyValues& kv) {
    const auto* s = io::find_value(kv, "seed");
    return s ? std::stoull(*s) : 0;
}

void write_feature_file(std::span<const VideoExample> examples, const fs::path& path, Partition partition,
                        const io::KeyValues& prov) {
    DatasetManifest m = write_features(examples, path, partition);
    m.provenance = prov;
    write_manifest(m, manifest_path_for(path));
}

// Up to `limit` rows, taking every frame when they fit and an even stride otherwise.
RowMatrix frame_sample(const std::vector<VideoExample>& videos, std::size_t limit) {
    std::size_t total = 0;
    for (const auto& v : videos) total += v.features.frame_count();
    const std::size_t stride = limit == 0 || total <= limit ? 1 : (total + limit - 1) / limit;
    RowMatrix sample;
    std::size_t index = 0;
    for (const auto& v : videos) {
        for (std::size_t t = 0; t < v.features.frame_count(); ++t, ++index)
            if (index % stride == 0) sample.append_row(to_double(v.features.frame(t)));
    }
    return sample;
}

}  // namespace

std::string config_hash(const io::KeyValues& params) {
    std::string canon;
    for (const auto& [k, v] : params) canon += k + "=" + v + "\n";
    return hex64(fnv1a64(canon));
}

io::KeyValues provenance(const std::string& stage, std::uint64_t seed, const io::KeyValues& params) {
    io::KeyValues kv{{"stage", stage}, {"seed", std::to_string(seed)}, {"config_hash", config_hash(params)}};
    kv.insert(kv.end(), params.begin(), params.end());
    return kv;
}

fs::path meta_path_for(const fs::path& artifact) { return fs::path(artifact.string() + ".meta"); }

void write_meta(const fs::path& artifact, const io::KeyValues& kv) { io::write_key_values(meta_path_for(artifact), kv); }

io::KeyValues read_meta(const fs::path& artifact) {
    const auto p = meta_path_for(artifact);
    return fs::exists(p) ? io::read_key_values(p) : io::KeyValues{};
}

std::optional<Partition> partition_of(const fs::path& feature_file) {
    const auto m = manifest_path_for(feature_file);
    if (fs::exists(m)) return read_manifest(m).partition;
    const auto meta = read_meta(feature_file);
    if (const auto* p = io::find_value(meta, "partition")) return parse_partition(*p);
    return std::nullopt;
}

GenerateResult generate(const GenerateOptions& opt) {
    if (opt.labels < 1) throw UsageError("--labels must be at least 1");
    if (opt.videos < 1) throw UsageError("--videos must be at least 1");
    if (opt.dim < 1) throw UsageError("--dim must be at least 1");
    if (!(opt.separation >= 0.0)) throw UsageError("--separation must be non-negative");
    fs::create_directories(opt.out_dir);

    const ClusterSpec clusters = make_cluster_spec(mix_seed(opt.seed, 0xC1), opt.labels, opt.dim, opt.separation, opt.scale);
    auto videos = generate_synthetic(opt.seed, opt.labels, opt.videos, opt.dim, clusters, opt.synthetic);

    const io::KeyValues params{{"labels", num(opt.labels)},
                               {"videos", num(opt.videos)},
                               {"dim", num(opt.dim)},
                               {"separation", num(opt.separation)},
                               {"scale", num(opt.scale)},
                               {"min_frames", num(opt.synthetic.min_frames)},
                               {"max_frames", num(opt.synthetic.max_frames)},
                               {"second_label_prob", num(opt.synthetic.second_label_prob)}};
    const auto prov = provenance("gen-synthetic", opt.seed, params);

    GenerateResult r;
    r.train_count = opt.videos * 70 / 100;
    r.validate_count = opt.videos * 20 / 100;
    r.test_count = opt.videos - r.train_count - r.validate_count;
    const std::span<const VideoExample> all(videos);
    r.train = opt.out_dir / "train.yt8m";
    r.validate = opt.out_dir / "validate.yt8m";
    r.test = opt.out_dir / "test.yt8m";
    r.labels = opt.out_dir / "labels.txt";
    write_feature_file(all.subspan(0, r.train_count), r.train, Partition::train, prov);
    write_feature_file(all.subspan(r.train_count, r.validate_count), r.validate, Partition::validate, prov);
    write_feature_file(all.subspan(r.train_count + r.validate_count), r.test, Partition::test, prov);
    LabelVocabulary::numbered(opt.labels).save(r.labels);
    return r;
}

PreprocessResult preprocess(const PreprocessOptions& opt) {
    check_fit_partition(opt.fit_input, opt.allow_fit_partition, "the whitening transform");
    fs::create_directories(opt.out_dir);

    const FeatureFile fit = read_feature_file(opt.fit_input);
    const std::size_t d_out = opt.output_dim == 0 ? fit.dim : opt.output_dim;
    if (d_out > fit.dim) throw UsageError("--output-dim exceeds the input dimension");
    RowMatrix sample = frame_sample(fit.examples, 0);
    if (sample.rows() == 0) throw DataError("fit input has no frames: " + opt.fit_input.string());

    PreprocessResult result;
    result.transform = opt.out_dir / "transform.pca";
    result.quantizer = opt.out_dir / "quantizer.qnt";
    result.report = opt.out_dir / "preprocess_report.txt";

    save_transform(fit_whitening(sample, d_out), result.transform);
    const WhiteningTransform t = load_transform(result.transform);
    RowMatrix whitened(sample.rows(), d_out);
    for (std::size_t i = 0; i < sample.rows(); ++i) {
        const auto z = apply_whitening(t, sample.row(i), false).values;
        std::copy(z.begin(), z.end(), whitened.row(i).begin());
    }
    save_quantizer(fit_quantizer(whitened, opt.lloyd_iterations), result.quantizer);
    const Quantizer q = load_quantizer(result.quantizer);
    const ReluReconstructor recon(t, q);

    const io::KeyValues params{{"output_dim", num(d_out)},
                               {"lloyd_iterations", std::to_string(opt.lloyd_iterations)},
                               {"fit_input_hash", upstream_hash(opt.fit_input)}};
    const auto prov = provenance("preprocess", opt.seed, params);
    write_meta(result.transform, prov);
    write_meta(result.quantizer, prov);

    io::KeyValues report = prov;
    for (const auto& input : opt.inputs) {
        const FeatureFile in = read_feature_file(input);
        if (in.dim != fit.dim && !in.examples.empty())
            throw DataError("input " + input.string() + " has D=" + std::to_string(in.dim) + ", transform expects " +
                            std::to_string(fit.dim));
        RoundTripStats stats;
        stats.input = input;
        std::string stem = input.filename().string();
        if (const auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
        stats.output = opt.out_dir / (stem + ".q.yt8m");

        std::vector<VideoExample> out;
        out.reserve(in.examples.size());
        double z_err = 0.0, x_err = 0.0;
        for (const auto& ex : in.examples) {
            VideoExample o;
            o.labels = ex.labels;
            o.features.video_id = ex.features.video_id;
            o.features.dim = d_out;
            for (std::size_t f = 0; f < ex.features.frame_count(); ++f) {
                const auto x = to_double(ex.features.frame(f));
                const auto z = apply_whitening(t, x, false).values;
                const auto codes = quantize(q, z);
                const auto zq = dequantize(q, codes);
                for (double v : zq) o.features.values.push_back(static_cast<float>(v));
                const auto xr = recon(codes);
                const auto z2 = apply_whitening(t, xr, false).values;
                double dz = 0.0, nz = 0.0, dx = 0.0, nx = 0.0;
                for (std::size_t j = 0; j < z.size(); ++j) {
                    dz += (z2[j] - z[j]) * (z2[j] - z[j]);
                    nz += z[j] * z[j];
                }
                for (std::size_t j = 0; j < x.size(); ++j) {
                    dx += (xr[j] - x[j]) * (xr[j] - x[j]);
                    nx += x[j] * x[j];
                }
                if (nz > 0.0) z_err += std::sqrt(dz / nz);
                if (nx > 0.0) x_err += std::sqrt(dx / nx);
                ++stats.frames;
            }
            out.push_back(std::move(o));
        }
        if (stats.frames) {
            stats.whitened_relative_error = z_err / static_cast<double>(stats.frames);
            stats.input_relative_error = x_err / static_cast<double>(stats.frames);
        }
        const auto partition = partition_of(input).value_or(Partition::test);
        io::KeyValues file_prov = prov;
        file_prov.emplace_back("input_hash", upstream_hash(input));
        write_feature_file(out, stats.output, partition, file_prov);

        const std::string key = stats.output.filename().string();
        report.emplace_back(key + ".frames", num(stats.frames));
        report.emplace_back(key + ".whitened_relative_error", num(stats.whitened_relative_error));
        report.emplace_back(key + ".input_relative_error", num(stats.input_relative_error));
        result.outputs.push_back(std::move(stats));
    }
    io::write_key_values(result.report, report);
    return result;
}

const char* to_string(EncodeMethod m) {
    switch (m) {
        case EncodeMethod::stats: return "stats";
        case EncodeMethod::fisher: return "fisher";
        case EncodeMethod::vlad: return "vlad";
    }
    return "unknown";
}

EncodeMethod parse_encode_method(std::string_view text) {
    if (text == "stats") return EncodeMethod::stats;
    if (text == "fisher") return EncodeMethod::fisher;
    if (text == "vlad") return EncodeMethod::vlad;
    throw UsageError("unknown encode method: " + std::string(text));
}

EncodeResult encode(const EncodeOptions& opt) {
    for (const auto* p : {&opt.output, &opt.codebook, &opt.normalizer})
        if (p->has_parent_path()) fs::create_directories(p->parent_path());
    const FeatureFile in = read_feature_file(opt.input);
    const auto& videos = in.examples;
    if (videos.empty()) throw DataError("no videos in " + opt.input.string());
    io::KeyValues params{{"method", to_string(opt.method)}, {"input_hash", upstream_hash(opt.input)}};

    std::vector<RowMatrix> frames(videos.size());
    std::optional<ReluReconstructor> recon;
    Quantizer quantizer;
    if (opt.method == EncodeMethod::stats) {
        if (opt.transform.empty() || opt.quantizer.empty())
            throw UsageError("stats encoding needs --transform and --quantizer to reconstruct activations");
        const auto t = load_transform(opt.transform);
        const auto q = load_quantizer(opt.quantizer);
        if (t.output_dim != in.dim) throw DataError("transform output dim does not match the input features");
        recon.emplace(t, q);
        quantizer = q;
        params.emplace_back("transform_hash", file_hash(opt.transform));
        params.emplace_back("quantizer_hash", file_hash(opt.quantizer));
        params.emplace_back("topk", num(opt.topk));
        params.emplace_back("components", std::string(opt.components.mean ? "mean," : "") +
                                              (opt.components.std ? "std," : "") + (opt.components.topk ? "topk" : ""));
    }
    parallel_for(videos.size(), opt.workers, [&](std::size_t v) {
        const auto& fs_ = videos[v].features;
        RowMatrix m;
        for (std::size_t t = 0; t < fs_.frame_count(); ++t) {
            const auto z = to_double(fs_.frame(t));
            m.append_row(recon ? (*recon)(quantize(quantizer, z)) : z);
        }
        frames[v] = std::move(m);
    });

    DescriptorFile out;
    std::vector<std::vector<double>> desc(videos.size());
    std::vector<char> degenerate(videos.size(), 0);
    switch (opt.method) {
        case EncodeMethod::stats: {
            out.layout = descriptor_layout(frames.front().cols(), opt.topk, opt.components);
            parallel_for(videos.size(), opt.workers, [&](std::size_t v) {
                desc[v] = build_descriptor(frames[v], opt.topk, opt.components).values;
            });
            break;
        }
        case EncodeMethod::fisher:
        case EncodeMethod::vlad: {
            if (opt.codebook.empty()) throw UsageError("fisher/vlad encoding needs --codebook");
            const bool fisher = opt.method == EncodeMethod::fisher;
            if (opt.fit_codebook) {
                check_fit_partition(opt.input, opt.allow_fit_partition, "the codebook");
                const RowMatrix sample = frame_sample(videos, opt.max_fit_frames);
                const std::uint64_t seed = mix_seed(opt.seed, 0xC0DE);
                if (fisher) save_gmm(fit_gmm(sample, opt.codebook_size, seed).codebook, opt.codebook);
                else save_kmeans(fit_kmeans(sample, opt.codebook_size, seed).codebook, opt.codebook);
                write_meta(opt.codebook, provenance(fisher ? "fit-gmm" : "fit-kmeans", opt.seed,
                                                    {{"codebook_size", num(opt.codebook_size)},
                                                     {"max_fit_frames", num(opt.max_fit_frames)},
                                                     {"input_hash", upstream_hash(opt.input)}}));
            }
            params.emplace_back("codebook_hash", file_hash(opt.codebook));
            if (fisher) {
                const auto gmm = load_gmm(opt.codebook);
                if (gmm.dim != in.dim) throw DataError("codebook dimension does not match the input features");
                params.emplace_back("codebook_size", num(gmm.components));
                out.layout = {{"fisher", 0, 2 * gmm.components * gmm.dim}};
                parallel_for(videos.size(), opt.workers, [&](std::size_t v) { desc[v] = encode_fisher(frames[v], gmm); });
            } else {
                const auto cb = load_kmeans(opt.codebook);
                if (cb.dim != in.dim) throw DataError("codebook dimension does not match the input features");
                params.emplace_back("codebook_size", num(cb.k));
                out.layout = {{"vlad", 0, cb.k * cb.dim}};
                parallel_for(videos.size(), opt.workers, [&](std::size_t v) {
                    auto r = encode_vlad(frames[v], cb);
                    degenerate[v] = r.degenerate;
                    desc[v] = std::move(r.values);
                });
            }
            break;
        }
    }

    if (!opt.normalizer.empty()) {
        if (opt.fit_normalizer) {
            check_fit_partition(opt.input, opt.allow_fit_partition, "the descriptor normalizer");
            RowMatrix sample;
            for (const auto& d : desc) sample.append_row(d);
            save_transform(fit_global_normalizer(sample), opt.normalizer);
            write_meta(opt.normalizer, provenance("fit-normalizer", opt.seed, params));
        }
        const auto norm = load_transform(opt.normalizer);
        if (norm.input_dim != desc.front().size()) throw DataError("normalizer dimension does not match the descriptors");
        params.emplace_back("normalizer_hash", file_hash(opt.normalizer));
        parallel_for(videos.size(), opt.workers, [&](std::size_t v) {
            auto r = normalize_descriptor(norm, desc[v]);
            degenerate[v] = degenerate[v] || r.degenerate;
            desc[v] = std::move(r.values);
        });
        out.layout = {{"normalized", 0, norm.output_dim}};
    }

    EncodeResult result;
    result.output = opt.output;
    result.videos = videos.size();
    result.dim = desc.front().size();
    out.dim = result.dim;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        out.records.push_back({videos[v].features.video_id, videos[v].labels, std::move(desc[v])});
        result.degenerate += degenerate[v] ? 1 : 0;
    }
    write_descriptors(out, opt.output);
    auto prov = provenance("encode", opt.seed, params);
    if (const auto p = partition_of(opt.input)) prov.emplace_back("partition", to_string(*p));
    prov.emplace_back("degenerate", num(result.degenerate));
    write_meta(opt.output, prov);
    return result;
}

const char* to_string(Level level) { return level == Level::frame ? "frame" : "video"; }

Level parse_level(std::string_view text) {
    if (text == "frame") return Level::frame;
    if (text == "video") return Level::video;
    throw UsageError("unknown level: " + std::string(text));
}

namespace {

std::vector<double> prepare_frame(std::span<const float> frame, bool l2) {
    auto x = to_double(frame);
    if (l2) l2_normalize(x);
    return x;
}

}  // namespace

TrainSummary train(const TrainOptions& opt) {
    opt.config.validate();
    const LabelVocabulary vocab = LabelVocabulary::load(opt.labels);
    TrainingSet data;
    if (opt.level == Level::frame) {
        const FeatureFile in = read_feature_file(opt.input);
        data = TrainingSet(in.dim);
        const auto examples = expand_frame_examples(in.examples, opt.config.frames_per_video,
                                                    mix_seed(opt.config.seed, 0xF4A3E));
        for (const auto& e : examples) {
            auto x = e.frame;
            if (opt.l2_normalize_frames) l2_normalize(x);
            data.add(x, e.labels);
        }
    } else {
        const DescriptorFile in = read_descriptors(opt.input);
        data = TrainingSet(in.dim);
        for (const auto& r : in.records) data.add(r.values, r.labels);
    }
    if (data.size() == 0) throw DataError("no training examples in " + opt.input.string());

    const ModelBank bank = train_all(vocab, opt.config, data, opt.workers);

    io::KeyValues params = opt.config.to_key_values();
    params.emplace_back("level", to_string(opt.level));
    params.emplace_back("l2_normalize_frames", opt.l2_normalize_frames ? "1" : "0");
    params.emplace_back("input_hash", upstream_hash(opt.input));
    save_bank(bank, opt.bank_dir, provenance("train", opt.config.seed, params));

    TrainSummary s;
    s.examples = data.size();
    std::ofstream report(opt.bank_dir / "training_report.tsv", std::ios::trunc);
    report << "label_id\tname\tstatus\tpositives\tnegatives\tsteps\tinitial_loss\tfinal_loss\tmessage\n";
    for (const auto& r : bank.reports) {
        report << r.label << '\t' << vocab.name(r.label) << '\t' << to_string(r.status) << '\t' << r.true_pos << '\t'
               << r.true_neg << '\t' << r.steps << '\t' << num(r.initial_loss) << '\t' << num(r.final_loss) << '\t'
               << r.message << '\n';
        if (r.status == LabelStatus::trained) ++s.trained;
        else if (r.status == LabelStatus::skipped) ++s.skipped;
        else ++s.failed;
    }
    if (!report) throw DataError("write failed: " + (opt.bank_dir / "training_report.tsv").string());
    return s;
}

std::size_t predict(const PredictOptions& opt) {
    const ModelBank bank = load_bank(opt.bank_dir);
    const auto index = io::read_key_values(opt.bank_dir / "index.txt");
    const auto* level_text = io::find_value(index, "level");
    const Level level = level_text ? parse_level(*level_text) : Level::video;
    const auto* l2_text = io::find_value(index, "l2_normalize_frames");
    const bool l2 = !l2_text || *l2_text == "1";

    PredictionSet preds(bank.label_count());
    io::KeyValues header{{"stage", "predict"},
                         {"seed", std::to_string(seed_of(index))},
                         {"level", to_string(level)},
                         {"model_config_hash", io::find_value(index, "config_hash") ? *io::find_value(index, "config_hash") : "none"},
                         {"input_hash", upstream_hash(opt.input)},
                         {"feature_dim", num(bank.feature_dim)}};
    header.insert(header.begin() + 2, {"config_hash", config_hash(header)});

    if (level == Level::frame) {
        const FeatureFile in = read_feature_file(opt.input);
        if (in.dim != bank.feature_dim) throw DataError("input feature dim does not match the model bank");
        for (const auto& ex : in.examples) {
            RowMatrix frames;
            for (std::size_t t = 0; t < ex.features.frame_count(); ++t)
                frames.append_row(with_bias(prepare_frame(ex.features.frame(t), l2)));
            preds.add(ex.features.video_id, predict_video_frame_level(bank, frames), {});
        }
    } else {
        const DescriptorFile in = read_descriptors(opt.input);
        if (in.dim != bank.feature_dim) throw DataError("descriptor dim does not match the model bank");
        for (const auto& r : in.records) preds.add(r.video_id, predict_video_level(bank, with_bias(r.values)), {});
    }
    if (opt.output.has_parent_path()) fs::create_directories(opt.output.parent_path());
    write_predictions(preds, opt.output, header);
    return preds.video_count();
}

TruthSet load_truth(const fs::path& path) {
    io::Magic magic{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open for reading: " + path.string());
        in.read(magic.data(), magic.size());
        if (!in) throw DataError("bad magic (file too short): " + path.string());
    }
    TruthSet t;
    if (magic == kFeatureMagicBytes) {
        const FeatureFile f = read_feature_file(path);
        t.dim = f.dim;
        for (const auto& ex : f.examples) {
            t.video_ids.push_back(ex.features.video_id);
            t.labels.push_back(ex.labels);
        }
    } else if (magic == kDescriptorMagicBytes) {
        const DescriptorFile f = read_descriptors(path);
        t.dim = f.dim;
        for (const auto& r : f.records) {
            t.video_ids.push_back(r.video_id);
            t.labels.push_back(r.labels);
        }
    } else {
        throw DataError("truth file is neither a feature nor a descriptor file: " + path.string());
    }
    return t;
}

PredictionSet join_predictions(const PredictionFile& predictions, const TruthSet& truth) {
    if (const auto* d = io::find_value(predictions.header, "feature_dim")) {
        if (std::stoull(*d) != truth.dim)
            throw DataError("prediction feature_dim " + *d + " does not match truth dim " + std::to_string(truth.dim));
    }
    std::unordered_map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < predictions.video_ids.size(); ++i) row.emplace(predictions.video_ids[i], i);
    if (row.size() != truth.video_ids.size())
        throw DataError("predictions cover " + std::to_string(row.size()) + " videos, truth has " +
                        std::to_string(truth.video_ids.size()));
    PredictionSet p(predictions.label_count);
    for (std::size_t v = 0; v < truth.video_ids.size(); ++v) {
        const auto it = row.find(truth.video_ids[v]);
        if (it == row.end()) throw DataError("no predictions for video " + truth.video_ids[v]);
        p.add(truth.video_ids[v], predictions.scores.row(it->second), truth.labels[v]);
    }
    return p;
}

EvalReport evaluate(const EvaluateOptions& opt) {
    const PredictionFile preds = read_predictions(opt.predictions);
    const PredictionSet p = join_predictions(preds, load_truth(opt.truth));
    const EvalReport r = vidlabel::evaluate(p, opt.ks, opt.hit_include_empty);

    io::KeyValues params{{"predictions_hash", file_hash(opt.predictions)},
                         {"truth_hash", upstream_hash(opt.truth)},
                         {"hit_include_empty", opt.hit_include_empty ? "1" : "0"}};
    const auto prov = provenance("evaluate", seed_of(preds.header), params);
    if (opt.report.has_parent_path()) fs::create_directories(opt.report.parent_path());
    write_report(r, opt.report, prov);
    if (!opt.per_class_table.empty()) {
        std::vector<std::string> names;
        if (!opt.labels.empty()) {
            const auto vocab = LabelVocabulary::load(opt.labels);
            for (const auto& [id, name] : vocab.labels()) names.push_back(name);
        }
        write_per_class_table(r, names, opt.per_class_table);
    }
    return r;
}

}  // namespace vidlabel::pipeline
