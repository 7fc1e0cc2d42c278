#include "vidlabel/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "vidlabel/binary_io.hpp"

namespace vidlabel {

namespace {

constexpr io::Magic kModelMagic = io::make_magic("YT8MMDL0");

void check_input(std::size_t dim, std::span<const double> x) {
    if (x.size() != dim + 1)
        throw DataError("model input has length " + std::to_string(x.size()) + ", expected D+1 = " +
                        std::to_string(dim + 1));
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct MoEForward {
    GatingDistribution gating;
    std::vector<double> expert_prob;
    double p = 0.0;  // p(y = 1 | x)
    double q = 1.0;  // 1 - p, accumulated directly
};

MoEForward moe_forward(const MoEModel& m, std::span<const double> x) {
    check_input(m.dim, x);
    MoEForward f;
    f.gating = moe_gating(m, x);
    f.expert_prob.resize(m.experts);
    f.p = 0.0;
    f.q = f.gating.dummy;
    for (std::size_t h = 0; h < m.experts; ++h) {
        const double z = dot(m.expert(h), x);
        const double s = sigmoid(z);
        f.expert_prob[h] = s;
        f.p += f.gating.experts[h] * s;
        f.q += f.gating.experts[h] * sigmoid(-z);
    }
    return f;
}

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

// Log-loss from p and 1-p computed separately; both are clamped.
double clamped_log_loss(double p, double q, double g) {
    p = clamp_probability(p);
    q = clamp_probability(q);
    return -g * std::log(p) - (1.0 - g) * std::log(q);
}

// Adds weight * dL/dparams for the [gating | expert] layout; returns the clamped log-loss.
double accumulate_moe(const MoEModel& m, std::span<const double> x, double g, double weight, std::span<double> grad) {
    const MoEForward f = moe_forward(m, x);
    const double p = clamp_probability(f.p);
    const double q = clamp_probability(f.q);
    const double common = weight * (p - g) / (p * q);
    const std::size_t r = m.row_size();
    for (std::size_t h = 0; h < m.experts; ++h) {
        const double ph = f.gating.experts[h];
        const double sh = f.expert_prob[h];
        const double gate_scale = ph * (sh - p) * common;
        const double expert_scale = ph * sh * (1.0 - sh) * common;
        double* dg = grad.data() + h * r;
        double* de = grad.data() + (m.experts + h) * r;
        for (std::size_t j = 0; j < r; ++j) {
            dg[j] += gate_scale * x[j];
            de[j] += expert_scale * x[j];
        }
    }
    return clamped_log_loss(f.p, f.q, g);
}

template <typename F>
decltype(auto) visit_model(F&& f, Model& m) {
    return std::visit(std::forward<F>(f), m);
}

}  // namespace

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::logistic: return "logistic";
        case ModelKind::hinge: return "hinge";
        case ModelKind::moe: return "moe";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "logistic") return ModelKind::logistic;
    if (text == "hinge") return ModelKind::hinge;
    if (text == "moe") return ModelKind::moe;
    throw UsageError("unknown model kind: " + std::string(text));
}

LogisticModel LogisticModel::zeros(std::size_t dim, double l2) {
    return {dim, l2, std::vector<double>(dim + 1, 0.0), std::vector<double>(dim + 1, 0.0)};
}

HingeModel HingeModel::zeros(std::size_t dim, double margin, double l2) {
    if (!(margin > 0.0)) throw UsageError("hinge margin must be positive");
    return {dim, l2, margin, std::vector<double>(dim + 1, 0.0), std::vector<double>(dim + 1, 0.0)};
}

MoEModel MoEModel::zeros(std::size_t dim, std::size_t experts, double l2) {
    if (experts < 1) throw UsageError("mixture of experts needs H >= 1");
    const std::size_t n = 2 * experts * (dim + 1);
    return {dim, experts, l2, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

GatingDistribution moe_gating(const MoEModel& m, std::span<const double> x) {
    check_input(m.dim, x);
    GatingDistribution g;
    g.experts.resize(m.experts);
    double top = 0.0;  // logit of the dummy state
    for (std::size_t h = 0; h < m.experts; ++h) {
        g.experts[h] = dot(m.gating(h), x);
        top = std::max(top, g.experts[h]);
    }
    double denom = std::exp(-top);
    for (double& a : g.experts) {
        a = std::exp(a - top);
        denom += a;
    }
    for (double& a : g.experts) a /= denom;
    g.dummy = std::exp(-top) / denom;
    return g;
}

double moe_predict(const MoEModel& m, std::span<const double> x) {
    const double p = moe_forward(m, x).p;
    return p < 1.0 ? p : std::nextafter(1.0, 0.0);
}

double moe_log_loss(const MoEModel& m, std::span<const double> x, double g) {
    const MoEForward f = moe_forward(m, x);
    return clamped_log_loss(f.p, f.q, g);
}

GradientPair moe_gradients(const MoEModel& m, std::span<const double> x, double g) {
    std::vector<double> flat(m.params.size(), 0.0);
    accumulate_moe(m, x, g, 1.0, flat);
    const std::size_t r = m.row_size();
    GradientPair out{RowMatrix(m.experts, r), RowMatrix(m.experts, r)};
    const auto half = static_cast<std::ptrdiff_t>(m.experts * r);
    std::copy(flat.begin(), flat.begin() + half, out.d_gating.data().begin());
    std::copy(flat.begin() + half, flat.end(), out.d_expert.data().begin());
    return out;
}

double logistic_predict(const LogisticModel& m, std::span<const double> x) {
    check_input(m.dim, x);
    return sigmoid(dot(m.weights, x));
}

double logistic_log_loss(const LogisticModel& m, std::span<const double> x, double g) {
    check_input(m.dim, x);
    const double z = dot(m.weights, x);
    return g * softplus(-z) + (1.0 - g) * softplus(z);
}

std::vector<double> logistic_gradient(const LogisticModel& m, std::span<const double> x, double g) {
    check_input(m.dim, x);
    const double err = sigmoid(dot(m.weights, x)) - g;
    std::vector<double> grad(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) grad[j] = err * x[j];
    for (std::size_t j = 0; j < m.dim; ++j) grad[j] += 2.0 * m.l2 * m.weights[j];
    return grad;
}

HingeResult hinge_loss_and_subgradient(const HingeModel& m, std::span<const double> x, double g) {
    check_input(m.dim, x);
    const double s = 2.0 * g - 1.0;
    const double slack = m.margin - s * dot(m.weights, x);
    HingeResult r;
    r.subgradient.assign(x.size(), 0.0);
    if (slack > 0.0) {
        r.loss = slack;
        for (std::size_t j = 0; j < x.size(); ++j) r.subgradient[j] = -s * x[j];
    }
    return r;
}

ModelKind kind_of(const Model& m) {
    return std::visit(
        [](const auto& model) {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, LogisticModel>) return ModelKind::logistic;
            else if constexpr (std::is_same_v<T, HingeModel>) return ModelKind::hinge;
            else return ModelKind::moe;
        },
        m);
}

std::size_t feature_dim(const Model& m) {
    return std::visit([](const auto& model) { return model.dim; }, m);
}

std::span<double> parameters(Model& m) {
    return visit_model(
        [](auto& model) -> std::span<double> {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, MoEModel>) return model.params;
            else return model.weights;
        },
        m);
}

std::span<const double> parameters(const Model& m) { return parameters(const_cast<Model&>(m)); }

std::span<double> adagrad_state(Model& m) {
    return visit_model([](auto& model) -> std::span<double> { return model.adagrad; }, m);
}

std::span<const double> adagrad_state(const Model& m) { return adagrad_state(const_cast<Model&>(m)); }

std::size_t parameter_count(const Model& m) { return parameters(m).size(); }

double l2_coefficient(const Model& m) {
    return std::visit([](const auto& model) { return model.l2; }, m);
}

double predict(const Model& m, std::span<const double> x) {
    return std::visit(
        [&](const auto& model) {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, LogisticModel>) return logistic_predict(model, x);
            else if constexpr (std::is_same_v<T, HingeModel>) {
                check_input(model.dim, x);
                return sigmoid(dot(model.weights, x));
            } else return moe_predict(model, x);
        },
        m);
}

double accumulate_loss_gradient(const Model& m, std::span<const double> x, double g, double weight,
                                std::span<double> grad) {
    return std::visit(
        [&](const auto& model) {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, LogisticModel>) {
                check_input(model.dim, x);
                const double z = dot(model.weights, x);
                const double err = weight * (sigmoid(z) - g);
                for (std::size_t j = 0; j < x.size(); ++j) grad[j] += err * x[j];
                return g * softplus(-z) + (1.0 - g) * softplus(z);
            } else if constexpr (std::is_same_v<T, HingeModel>) {
                check_input(model.dim, x);
                const double s = 2.0 * g - 1.0;
                const double slack = model.margin - s * dot(model.weights, x);
                if (slack <= 0.0) return 0.0;
                for (std::size_t j = 0; j < x.size(); ++j) grad[j] -= weight * s * x[j];
                return slack;
            } else {
                return accumulate_moe(model, x, g, weight, grad);
            }
        },
        m);
}

double regularizer(const Model& m) {
    const auto params = parameters(m);
    const std::size_t row = feature_dim(m) + 1;
    double s = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (i % row != row - 1) s += params[i] * params[i];
    return l2_coefficient(m) * s;
}

void accumulate_regularizer_gradient(const Model& m, double scale, std::span<double> grad) {
    const auto params = parameters(m);
    const std::size_t row = feature_dim(m) + 1;
    const double c = 2.0 * l2_coefficient(m) * scale;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (i % row != row - 1) grad[i] += c * params[i];
}

std::vector<unsigned char> serialize_model(const Model& m) {
    io::BinaryWriter w;
    w.magic(kModelMagic);
    w.u32(static_cast<std::uint32_t>(kind_of(m)));
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(feature_dim(m)));
    const std::size_t experts = std::holds_alternative<MoEModel>(m) ? std::get<MoEModel>(m).experts : 1;
    w.u32(static_cast<std::uint32_t>(experts));
    w.f64(l2_coefficient(m));
    w.f64(std::holds_alternative<HingeModel>(m) ? std::get<HingeModel>(m).margin : 0.0);
    const auto params = parameters(m);
    const auto acc = adagrad_state(m);
    w.u64(params.size());
    for (double v : params) w.f64(v);
    for (double v : acc) w.f64(v);
    return w.take();
}

Model deserialize_model(std::span<const unsigned char> bytes) {
    io::BinaryReader r(bytes, "model payload");
    r.expect_magic(kModelMagic);
    const std::uint32_t kind = r.u32();
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) throw DataError("model version mismatch: " + std::to_string(version));
    const std::size_t dim = r.u32();
    const std::size_t experts = r.u32();
    if (experts == 0) throw DataError("model declares H = 0 experts");
    const double l2 = r.f64();
    const double margin = r.f64();
    const std::uint64_t count = r.u64();

    Model m;
    switch (static_cast<ModelKind>(kind)) {
        case ModelKind::logistic:
            if (experts != 1) throw DataError("logistic model must declare H = 1");
            m = LogisticModel::zeros(dim, l2);
            break;
        case ModelKind::hinge:
            if (experts != 1) throw DataError("hinge model must declare H = 1");
            if (!(margin > 0.0)) throw DataError("hinge margin must be positive");
            m = HingeModel::zeros(dim, margin, l2);
            break;
        case ModelKind::moe: m = MoEModel::zeros(dim, experts, l2); break;
        default: throw DataError("unknown model kind tag " + std::to_string(kind));
    }
    auto params = parameters(m);
    auto acc = adagrad_state(m);
    if (count != params.size()) throw DataError("model parameter count does not match header");
    if (r.remaining() != 16 * count) throw DataError("truncated model payload");
    for (double& v : params) {
        v = r.f64();
        if (!std::isfinite(v)) throw DataError("non-finite model weight");
    }
    for (double& v : acc) v = r.f64();
    return m;
}

void save_model(const Model& m, const std::filesystem::path& path) {
    const auto bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace vidlabel
