#pragma once

// Drives every pipeline stage on synthetic data inside one directory.

#include <filesystem>

#include "vidlabel/pipeline.hpp"

namespace testutil {

struct PipelineRun {
    std::filesystem::path dir;
    std::filesystem::path bank, predictions, report;
    vidlabel::EvalReport result;
};

struct PipelineSetup {
    std::size_t labels = 8;
    std::size_t videos = 2000;
    std::size_t dim = 32;
    double separation = 4.0;
    std::uint64_t seed = 7;
    std::size_t workers = 1;
    vidlabel::pipeline::Level level = vidlabel::pipeline::Level::video;
    vidlabel::pipeline::EncodeMethod method = vidlabel::pipeline::EncodeMethod::stats;
    std::size_t codebook_size = 4;
    int iterations = 10;
};

inline PipelineRun run_pipeline(const std::filesystem::path& dir, const PipelineSetup& s) {
    namespace pl = vidlabel::pipeline;
    PipelineRun run;
    run.dir = dir;

    pl::GenerateOptions g;
    g.out_dir = dir / "data";
    g.labels = s.labels;
    g.videos = s.videos;
    g.dim = s.dim;
    g.separation = s.separation;
    g.seed = s.seed;
    const auto gen = pl::generate(g);

    pl::PreprocessOptions p;
    p.fit_input = gen.train;
    p.inputs = {gen.train, gen.test};
    p.out_dir = dir / "pre";
    p.seed = s.seed;
    const auto pre = pl::preprocess(p);
    const auto train_q = pre.outputs[0].output;
    const auto test_q = pre.outputs[1].output;

    pl::TrainOptions t;
    t.labels = gen.labels;
    t.level = s.level;
    t.workers = s.workers;
    t.config = s.level == pl::Level::video ? vidlabel::TrainerConfig::video_level_defaults()
                                           : vidlabel::TrainerConfig::frame_level_defaults();
    t.config.seed = s.seed;
    t.config.iterations = s.iterations;
    run.bank = dir / "bank";
    t.bank_dir = run.bank;

    std::filesystem::path predict_input = test_q;
    if (s.level == pl::Level::video) {
        pl::EncodeOptions e;
        e.method = s.method;
        e.transform = pre.transform;
        e.quantizer = pre.quantizer;
        e.codebook_size = s.codebook_size;
        if (s.method != pl::EncodeMethod::stats) e.codebook = dir / "desc" / "codebook.bin";
        e.normalizer = dir / "desc" / "normalizer.pca";
        e.seed = s.seed;
        e.workers = s.workers;
        e.input = train_q;
        e.output = dir / "desc" / "train.agg";
        e.fit_codebook = s.method != pl::EncodeMethod::stats;
        e.fit_normalizer = true;
        pl::encode(e);
        e.input = test_q;
        e.output = dir / "desc" / "test.agg";
        e.fit_codebook = false;
        e.fit_normalizer = false;
        pl::encode(e);
        t.input = dir / "desc" / "train.agg";
        predict_input = dir / "desc" / "test.agg";
    } else {
        t.input = train_q;
    }
    pl::train(t);

    run.predictions = dir / "predictions.txt";
    pl::predict({predict_input, run.bank, run.predictions});

    pl::EvaluateOptions ev;
    ev.predictions = run.predictions;
    ev.truth = predict_input;
    run.report = dir / "report.txt";
    ev.report = run.report;
    ev.per_class_table = dir / "per_class.tsv";
    ev.labels = gen.labels;
    run.result = pl::evaluate(ev);
    return run;
}

}  // namespace testutil
