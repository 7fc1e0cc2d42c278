#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vidlabel/metrics.hpp"
#include "vidlabel/models.hpp"
#include "vidlabel/pipeline.hpp"
#include "vidlabel/preprocess.hpp"
#include "vidlabel/trainer.hpp"

namespace py = pybind11;
using namespace vidlabel;

namespace {

PredictionSet make_set(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<LabelId>>& truth) {
    if (scores.size() != truth.size()) throw UsageError("scores and truth must have the same number of videos");
    PredictionSet p(scores.empty() ? 0 : scores.front().size());
    for (std::size_t v = 0; v < scores.size(); ++v) p.add(std::to_string(v), scores[v], truth[v]);
    return p;
}

RowMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    RowMatrix m;
    for (const auto& r : rows) m.append_row(r);
    return m;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["map"] = r.map;
    d["per_class_ap"] = r.per_class_ap;
    d["perr"] = r.perr;
    py::dict hits;
    for (const auto& [k, v] : r.hit_at_k) hits[py::int_(k)] = v;
    d["hit_at_k"] = hits;
    d["classes_skipped"] = r.classes_skipped;
    d["videos"] = r.videos;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Video labeling pipeline: metrics, models and pipeline stages";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("average_precision",
          [](const std::vector<double>& scores, const std::vector<std::uint8_t>& truths) {
              if (scores.size() != truths.size()) throw UsageError("scores and truths differ in length");
              return average_precision(scores, truths);
          },
          py::arg("scores"), py::arg("truths"));
    m.def("mean_average_precision",
          [](const std::vector<std::vector<double>>& s, const std::vector<std::vector<LabelId>>& t) {
              return mean_average_precision(make_set(s, t)).map;
          },
          py::arg("scores"), py::arg("truth"));
    m.def("hit_at_k",
          [](const std::vector<std::vector<double>>& s, const std::vector<std::vector<LabelId>>& t, std::size_t k,
             bool include_empty) { return hit_at_k(make_set(s, t), k, include_empty); },
          py::arg("scores"), py::arg("truth"), py::arg("k"), py::arg("include_empty") = false);
    m.def("perr",
          [](const std::vector<std::vector<double>>& s, const std::vector<std::vector<LabelId>>& t) {
              return perr(make_set(s, t));
          },
          py::arg("scores"), py::arg("truth"));
    m.def("rank_labels", [](const std::vector<double>& s) { return rank_labels(s); }, py::arg("scores"));

    m.def("sampling_weights",
          [](std::size_t tp, std::size_t tn, std::size_t sp, std::size_t sn) {
              const auto w = sampling_weights(tp, tn, sp, sn);
              return py::make_tuple(w.positive, w.negative);
          },
          py::arg("true_pos"), py::arg("true_neg"), py::arg("sampled_pos"), py::arg("sampled_neg"));

    m.def("moe_predict",
          [](const std::vector<std::vector<double>>& gating, const std::vector<std::vector<double>>& experts,
             std::vector<double> x) {
              if (gating.empty() || gating.size() != experts.size()) throw UsageError("need H gating and H expert rows");
              auto model = MoEModel::zeros(x.size(), gating.size());
              x.push_back(1.0);
              for (std::size_t h = 0; h < gating.size(); ++h) {
                  if (gating[h].size() != x.size() || experts[h].size() != x.size())
                      throw UsageError("weight rows must have length D + 1");
                  std::copy(gating[h].begin(), gating[h].end(), model.gating(h).begin());
                  std::copy(experts[h].begin(), experts[h].end(), model.expert(h).begin());
              }
              return moe_predict(model, x);
          },
          py::arg("gating"), py::arg("experts"), py::arg("x"),
          "Weight rows have length D + 1 with the bias last; x has length D.");

    m.def("whiten",
          [](const std::vector<std::vector<double>>& sample, std::size_t output_dim) {
              const auto x = to_matrix(sample);
              const auto t = fit_whitening(x, output_dim == 0 ? x.cols() : output_dim);
              std::vector<std::vector<double>> out;
              for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(apply_whitening(t, x.row(i), false).values);
              return out;
          },
          py::arg("sample"), py::arg("output_dim") = 0, "Fits whitening on the sample and applies it to every row.");

    namespace pl = vidlabel::pipeline;
    m.def("generate",
          [](const std::filesystem::path& out_dir, std::size_t labels, std::size_t videos, std::size_t dim,
             double separation, std::uint64_t seed) {
              pl::GenerateOptions o;
              o.out_dir = out_dir;
              o.labels = labels;
              o.videos = videos;
              o.dim = dim;
              o.separation = separation;
              o.seed = seed;
              const auto r = pl::generate(o);
              py::dict d;
              d["train"] = r.train;
              d["validate"] = r.validate;
              d["test"] = r.test;
              d["labels"] = r.labels;
              return d;
          },
          py::arg("out_dir"), py::arg("labels") = 8, py::arg("videos") = 2000, py::arg("dim") = 32,
          py::arg("separation") = 4.0, py::arg("seed") = 0);
    m.def("preprocess",
          [](const std::filesystem::path& fit_input, const std::vector<std::filesystem::path>& inputs,
             const std::filesystem::path& out_dir, std::uint64_t seed) {
              pl::PreprocessOptions o;
              o.fit_input = fit_input;
              o.inputs = inputs;
              o.out_dir = out_dir;
              o.seed = seed;
              const auto r = pl::preprocess(o);
              std::vector<std::filesystem::path> outputs;
              for (const auto& s : r.outputs) outputs.push_back(s.output);
              py::dict d;
              d["transform"] = r.transform;
              d["quantizer"] = r.quantizer;
              d["outputs"] = outputs;
              return d;
          },
          py::arg("fit_input"), py::arg("inputs"), py::arg("out_dir"), py::arg("seed") = 0);
    m.def("encode_stats",
          [](const std::filesystem::path& input, const std::filesystem::path& output,
             const std::filesystem::path& transform, const std::filesystem::path& quantizer,
             const std::filesystem::path& normalizer, bool fit_normalizer, std::size_t workers) {
              pl::EncodeOptions o;
              o.input = input;
              o.output = output;
              o.transform = transform;
              o.quantizer = quantizer;
              o.normalizer = normalizer;
              o.fit_normalizer = fit_normalizer;
              o.workers = workers;
              return pl::encode(o).dim;
          },
          py::arg("input"), py::arg("output"), py::arg("transform"), py::arg("quantizer"),
          py::arg("normalizer") = std::filesystem::path(), py::arg("fit_normalizer") = false, py::arg("workers") = 1);
    m.def("train",
          [](const std::filesystem::path& input, const std::filesystem::path& labels,
             const std::filesystem::path& bank, const std::string& level, const std::map<std::string, std::string>& config,
             std::size_t workers) {
              pl::TrainOptions o;
              o.input = input;
              o.labels = labels;
              o.bank_dir = bank;
              o.level = pl::parse_level(level);
              const auto base = o.level == pl::Level::video ? TrainerConfig::video_level_defaults()
                                                            : TrainerConfig::frame_level_defaults();
              o.config = TrainerConfig::from_key_values(io::KeyValues(config.begin(), config.end()), base);
              o.workers = workers;
              const auto s = pl::train(o);
              return py::make_tuple(s.trained, s.skipped, s.failed);
          },
          py::arg("input"), py::arg("labels"), py::arg("bank"), py::arg("level") = "video",
          py::arg("config") = std::map<std::string, std::string>{}, py::arg("workers") = 1,
          "Returns (trained, skipped, failed) label counts.");
    m.def("predict",
          [](const std::filesystem::path& input, const std::filesystem::path& bank, const std::filesystem::path& output) {
              return pl::predict({input, bank, output});
          },
          py::arg("input"), py::arg("bank"), py::arg("output"));
    m.def("evaluate",
          [](const std::filesystem::path& predictions, const std::filesystem::path& truth,
             const std::filesystem::path& report, std::vector<std::size_t> ks) {
              pl::EvaluateOptions o;
              o.predictions = predictions;
              o.truth = truth;
              o.report = report;
              o.ks = std::move(ks);
              return report_dict(pl::evaluate(o));
          },
          py::arg("predictions"), py::arg("truth"), py::arg("report"), py::arg("ks") = std::vector<std::size_t>{1, 5});
}
