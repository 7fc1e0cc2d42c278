// vidlabel: command-line driver for the video labeling pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reference.hpp"
#include "vidlabel/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vidlabel;

namespace {

fs::path resolve(const fs::path& work_dir, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return work_dir / p;
}

std::string show(const std::optional<double>& v) {
    if (!v) return "skipped";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

DescriptorComponents parse_components(const std::string& text) {
    DescriptorComponents c{false, false, false};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "mean") c.mean = true;
        else if (item == "std") c.std = true;
        else if (item == "topk") c.topk = true;
        else throw UsageError("unknown descriptor component: " + item);
    }
    if (!c.any()) throw UsageError("--components must name at least one of mean,std,topk");
    return c;
}

// Trainer flags start unset so that level-dependent defaults apply.
struct TrainFlags {
    std::optional<std::string> model;
    std::optional<std::size_t> mixtures, batch_size, iterations, frames_per_video, max_per_class, trace_interval;
    std::optional<double> hinge_margin, learning_rate, l2, adagrad_epsilon, init_scale;
    std::uint64_t seed = 0;
};

TrainerConfig trainer_config(pipeline::Level level, const TrainFlags& f) {
    TrainerConfig c = level == pipeline::Level::frame ? TrainerConfig::frame_level_defaults()
                                                      : TrainerConfig::video_level_defaults();
    if (f.model) c.model = parse_model_kind(*f.model);
    if (f.mixtures) c.mixtures = *f.mixtures;
    if (f.batch_size) c.batch_size = *f.batch_size;
    if (f.iterations) c.iterations = *f.iterations;
    if (f.frames_per_video) c.frames_per_video = *f.frames_per_video;
    if (f.max_per_class) c.max_per_class = *f.max_per_class;
    if (f.trace_interval) c.trace_interval = *f.trace_interval;
    if (f.hinge_margin) c.hinge_margin = *f.hinge_margin;
    if (f.learning_rate) c.learning_rate = *f.learning_rate;
    if (f.l2) c.l2 = *f.l2;
    if (f.adagrad_epsilon) c.adagrad_epsilon = *f.adagrad_epsilon;
    if (f.init_scale) c.init_scale = *f.init_scale;
    c.seed = f.seed;
    c.validate();
    return c;
}

int run_oracle(const fs::path& predictions, const fs::path& truth, const std::vector<std::size_t>& ks) {
    const auto p = pipeline::join_predictions(read_predictions(predictions), pipeline::load_truth(truth));
    bool ok = true;
    auto check = [&](const std::string& name, const std::optional<double>& fast, const std::optional<double>& slow) {
        const bool same = fast.has_value() == slow.has_value() && (!fast || *fast == *slow);
        ok = ok && same;
        std::cout << name << " fast=" << show(fast) << " reference=" << show(slow) << (same ? " equal" : " MISMATCH")
                  << '\n';
    };
    const auto fast_map = mean_average_precision(p);
    const auto slow_map = reference::mean_average_precision(p);
    check("map", fast_map.map, slow_map.map);
    for (std::size_t l = 0; l < p.label_count(); ++l)
        check("ap." + std::to_string(l), fast_map.per_class[l], slow_map.per_class[l]);
    for (std::size_t k : ks) check("hit_at_" + std::to_string(k), hit_at_k(p, k), reference::hit_at_k(p, k));
    check("perr", perr(p), reference::perr(p));
    std::cout << (ok ? "oracle: all metrics equal" : "oracle: mismatch detected") << '\n';
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video labeling pipeline: synthetic data, preprocessing, encoding, training, evaluation"};
    app.require_subcommand(1);
    app.ignore_underscore();
    fs::path work_dir = ".";
    app.add_option("--work-dir", work_dir, "Directory relative paths are resolved against")->envname("YT8M_WORK_DIR");

    // gen-synthetic
    pipeline::GenerateOptions gen;
    gen.out_dir = "data";
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a planted-cluster dataset split 70/20/10");
    gen_cmd->set_config("--config", "", "key=value config file");
    gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();
    gen_cmd->add_option("--labels", gen.labels, "Number of labels L")->capture_default_str();
    gen_cmd->add_option("--videos", gen.videos, "Number of videos V")->capture_default_str();
    gen_cmd->add_option("--dim", gen.dim, "Feature dimension D")->capture_default_str();
    gen_cmd->add_option("--separation", gen.separation, "Norm of each cluster mean")->capture_default_str();
    gen_cmd->add_option("--scale", gen.scale, "Per-cluster standard deviation")->capture_default_str();
    gen_cmd->add_option("--min-frames", gen.synthetic.min_frames)->capture_default_str();
    gen_cmd->add_option("--max-frames", gen.synthetic.max_frames)->capture_default_str();
    gen_cmd->add_option("--second-label-prob", gen.synthetic.second_label_prob)->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();

    // preprocess
    pipeline::PreprocessOptions pre;
    pre.out_dir = "preprocessed";
    auto* pre_cmd = app.add_subcommand("preprocess", "Fit PCA whitening and quantization on train, apply to inputs");
    pre_cmd->set_config("--config", "", "key=value config file");
    pre_cmd->add_option("--fit-input", pre.fit_input, "Feature file to fit on (train partition)")->required();
    pre_cmd->add_option("--inputs", pre.inputs, "Feature files to transform (default: the fit input)");
    pre_cmd->add_option("--out-dir", pre.out_dir)->capture_default_str();
    pre_cmd->add_option("--output-dim", pre.output_dim, "Whitened dimension (0 keeps D)")->capture_default_str();
    pre_cmd->add_option("--lloyd-iterations", pre.lloyd_iterations)->capture_default_str();
    pre_cmd->add_flag("--allow-fit-partition", pre.allow_fit_partition, "Permit fitting on a non-train partition");
    pre_cmd->add_option("--seed", pre.seed)->capture_default_str();

    // encode
    pipeline::EncodeOptions enc;
    std::string enc_method = "stats", enc_components = "mean,std,topk";
    auto* enc_cmd = app.add_subcommand("encode", "Aggregate frame features into per-video descriptors");
    enc_cmd->set_config("--config", "", "key=value config file");
    enc_cmd->add_option("--input", enc.input, "Preprocessed feature file")->required();
    enc_cmd->add_option("--output", enc.output, "Descriptor file")->required();
    enc_cmd->add_option("--method", enc_method, "stats, fisher or vlad")->capture_default_str();
    enc_cmd->add_option("--transform", enc.transform, "Whitening transform (stats)");
    enc_cmd->add_option("--quantizer", enc.quantizer, "Quantizer (stats)");
    enc_cmd->add_option("--topk", enc.topk)->capture_default_str();
    enc_cmd->add_option("--components", enc_components, "Comma list of mean,std,topk")->capture_default_str();
    enc_cmd->add_option("--codebook-size", enc.codebook_size, "GMM components N or k-means k")->capture_default_str();
    enc_cmd->add_option("--codebook", enc.codebook, "Codebook file (fisher, vlad)");
    enc_cmd->add_flag("--fit-codebook", enc.fit_codebook, "Fit the codebook on the input and write it");
    enc_cmd->add_option("--normalizer", enc.normalizer, "Descriptor PCA-whitening file");
    enc_cmd->add_flag("--fit-normalizer", enc.fit_normalizer, "Fit the normalizer on the input and write it");
    enc_cmd->add_option("--max-fit-frames", enc.max_fit_frames)->capture_default_str();
    enc_cmd->add_flag("--allow-fit-partition", enc.allow_fit_partition);
    enc_cmd->add_option("--seed", enc.seed)->capture_default_str();
    enc_cmd->add_option("--workers", enc.workers)->capture_default_str();

    // train
    pipeline::TrainOptions tr;
    TrainFlags tf;
    std::string tr_level = "video";
    bool no_frame_l2 = false;
    auto* tr_cmd = app.add_subcommand("train", "Train one-vs-all classifiers for every label");
    tr_cmd->set_config("--config", "", "key=value config file");
    tr_cmd->add_option("--input", tr.input, "Frame features (frame level) or descriptors (video level)")->required();
    tr_cmd->add_option("--labels", tr.labels, "Label vocabulary file")->required();
    tr_cmd->add_option("--bank", tr.bank_dir, "Output model bank directory")->required();
    tr_cmd->add_option("--level", tr_level, "frame or video")->capture_default_str();
    tr_cmd->add_option("--model", tf.model, "logistic, hinge or moe (default: moe video, logistic frame)");
    tr_cmd->add_option("--mixtures", tf.mixtures, "MoE experts (default 2)");
    tr_cmd->add_option("--hinge-margin", tf.hinge_margin);
    tr_cmd->add_option("--learning-rate", tf.learning_rate, "Adagrad learning rate (default 1.0)");
    tr_cmd->add_option("--batch-size", tf.batch_size, "Mini-batch size (default 32 video, 1 frame)");
    tr_cmd->add_option("--l2", tf.l2, "L2 weight (default 1e-6)");
    tr_cmd->add_option("--iterations", tf.iterations, "Sample-and-update iterations (default 10)");
    tr_cmd->add_option("--adagrad-epsilon", tf.adagrad_epsilon);
    tr_cmd->add_option("--frames-per-video", tf.frames_per_video, "Frames sampled per video (default 20)");
    tr_cmd->add_option("--max-per-class", tf.max_per_class, "Per-class sampling cap M (default 200000)");
    tr_cmd->add_option("--trace-interval", tf.trace_interval);
    tr_cmd->add_option("--init-scale", tf.init_scale, "Std of the random MoE initialization");
    tr_cmd->add_option("--seed", tf.seed)->capture_default_str();
    tr_cmd->add_flag("--no-frame-l2", no_frame_l2, "Skip L2 normalization of frames (sparse features)");
    tr_cmd->add_option("--workers", tr.workers)->capture_default_str();

    // predict
    pipeline::PredictOptions pr;
    auto* pr_cmd = app.add_subcommand("predict", "Score videos with a model bank");
    pr_cmd->set_config("--config", "", "key=value config file");
    pr_cmd->add_option("--input", pr.input, "Frame features or descriptors, matching the bank level")->required();
    pr_cmd->add_option("--bank", pr.bank_dir)->required();
    pr_cmd->add_option("--output", pr.output, "Prediction file")->required();

    // evaluate
    pipeline::EvaluateOptions ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Compute mAP, Hit@k and PERR");
    ev_cmd->set_config("--config", "", "key=value config file");
    ev_cmd->add_option("--predictions", ev.predictions)->required();
    ev_cmd->add_option("--truth", ev.truth, "Feature or descriptor file carrying labels")->required();
    ev_cmd->add_option("--report", ev.report, "key=value report")->required();
    ev_cmd->add_option("--per-class", ev.per_class_table, "Tab-separated per-class AP table");
    ev_cmd->add_option("--labels", ev.labels, "Label vocabulary for the per-class table");
    ev_cmd->add_option("--k", ev.ks, "Hit@k cutoffs")->capture_default_str();
    ev_cmd->add_flag("--hit-include-empty", ev.hit_include_empty, "Count empty-truth videos in Hit@k");

    // oracle
    fs::path or_predictions, or_truth;
    std::vector<std::size_t> or_ks{1, 5};
    auto* or_cmd = app.add_subcommand("oracle", "Cross-check metrics against brute-force references");
    or_cmd->add_option("--predictions", or_predictions)->required();
    or_cmd->add_option("--truth", or_truth)->required();
    or_cmd->add_option("--k", or_ks)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen_cmd) {
            gen.out_dir = resolve(work_dir, gen.out_dir);
            const auto r = pipeline::generate(gen);
            std::cout << "train " << r.train.string() << " (" << r.train_count << " videos)\n"
                      << "validate " << r.validate.string() << " (" << r.validate_count << " videos)\n"
                      << "test " << r.test.string() << " (" << r.test_count << " videos)\n";
        } else if (*pre_cmd) {
            pre.fit_input = resolve(work_dir, pre.fit_input);
            pre.out_dir = resolve(work_dir, pre.out_dir);
            if (pre.inputs.empty()) pre.inputs.push_back(pre.fit_input);
            for (auto& p : pre.inputs) p = resolve(work_dir, p);
            const auto r = pipeline::preprocess(pre);
            for (const auto& s : r.outputs)
                std::cout << s.output.string() << " frames=" << s.frames
                          << " whitened_relative_error=" << s.whitened_relative_error << '\n';
        } else if (*enc_cmd) {
            enc.method = pipeline::parse_encode_method(enc_method);
            enc.components = parse_components(enc_components);
            for (auto* p : {&enc.input, &enc.output, &enc.transform, &enc.quantizer, &enc.codebook, &enc.normalizer})
                *p = resolve(work_dir, *p);
            const auto r = pipeline::encode(enc);
            std::cout << r.output.string() << " videos=" << r.videos << " dim=" << r.dim
                      << " degenerate=" << r.degenerate << '\n';
        } else if (*tr_cmd) {
            tr.level = pipeline::parse_level(tr_level);
            tr.config = trainer_config(tr.level, tf);
            tr.l2_normalize_frames = !no_frame_l2;
            for (auto* p : {&tr.input, &tr.labels, &tr.bank_dir}) *p = resolve(work_dir, *p);
            const auto s = pipeline::train(tr);
            std::cout << "examples=" << s.examples << " trained=" << s.trained << " skipped=" << s.skipped
                      << " failed=" << s.failed << '\n';
            if (s.trained == 0) return 3;
        } else if (*pr_cmd) {
            for (auto* p : {&pr.input, &pr.bank_dir, &pr.output}) *p = resolve(work_dir, *p);
            const auto n = pipeline::predict(pr);
            std::cout << pr.output.string() << " videos=" << n << '\n';
        } else if (*ev_cmd) {
            for (auto* p : {&ev.predictions, &ev.truth, &ev.report, &ev.per_class_table, &ev.labels})
                *p = resolve(work_dir, *p);
            const auto r = pipeline::evaluate(ev);
            std::cout << "map=" << show(r.map);
            for (const auto& [k, v] : r.hit_at_k) std::cout << " hit_at_" << k << '=' << show(v);
            std::cout << " perr=" << show(r.perr) << " classes_skipped=" << r.classes_skipped << '\n';
        } else if (*or_cmd) {
            return run_oracle(resolve(work_dir, or_predictions), resolve(work_dir, or_truth), or_ks);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
