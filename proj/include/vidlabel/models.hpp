#pragma once

// Per-label binary classifiers: logistic regression, online hinge loss, and a
// mixture of logistic experts with softmax gating over H experts plus a dummy
// "entity absent" state.
//
// All models take inputs of length D+1 whose last coordinate is the constant 1
// (bias). The bias coordinate is excluded from L2 regularization.

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "vidlabel/common.hpp"

namespace vidlabel {

inline constexpr double kDefaultL2 = 1e-6;
inline constexpr std::size_t kDefaultMixtures = 2;
// Probability clamp applied inside MoE loss and gradients.
inline constexpr double kProbabilityClamp = 1e-12;

enum class ModelKind : std::uint32_t { logistic = 1, hinge = 2, moe = 3 };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct LogisticModel {
    std::size_t dim = 0;
    double l2 = kDefaultL2;
    std::vector<double> weights;  // D+1
    std::vector<double> adagrad;  // squared-gradient accumulators, same shape as weights

    static LogisticModel zeros(std::size_t dim, double l2 = kDefaultL2);
    bool operator==(const LogisticModel&) const = default;
};

struct HingeModel {
    std::size_t dim = 0;
    double l2 = kDefaultL2;
    double margin = 1.0;
    std::vector<double> weights;  // D+1
    std::vector<double> adagrad;

    static HingeModel zeros(std::size_t dim, double margin = 1.0, double l2 = kDefaultL2);
    bool operator==(const HingeModel&) const = default;
};

struct MoEModel {
    std::size_t dim = 0;
    std::size_t experts = 0;  // H
    double l2 = kDefaultL2;
    // [gating H x (D+1) | expert H x (D+1)], row-major.
    std::vector<double> params;
    std::vector<double> adagrad;

    static MoEModel zeros(std::size_t dim, std::size_t experts, double l2 = kDefaultL2);

    std::size_t row_size() const noexcept { return dim + 1; }
    std::span<double> gating(std::size_t h) { return {params.data() + h * row_size(), row_size()}; }
    std::span<const double> gating(std::size_t h) const { return {params.data() + h * row_size(), row_size()}; }
    std::span<double> expert(std::size_t h) { return {params.data() + (experts + h) * row_size(), row_size()}; }
    std::span<const double> expert(std::size_t h) const {
        return {params.data() + (experts + h) * row_size(), row_size()};
    }
    bool operator==(const MoEModel&) const = default;
};

using Model = std::variant<LogisticModel, HingeModel, MoEModel>;

double sigmoid(double z);

// --- Mixture of experts ---

struct GatingDistribution {
    std::vector<double> experts;  // p(h | x), h = 1..H
    double dummy = 0.0;           // p(H+1 | x) = 1 / (1 + sum_h exp(w_h^T x))
};

GatingDistribution moe_gating(const MoEModel& m, std::span<const double> x);

/// sum_h p(h | x) sigma(u_h^T x); always strictly below 1.
double moe_predict(const MoEModel& m, std::span<const double> x);

// Log-loss with p clamped to [1e-12, 1 - 1e-12].
double moe_log_loss(const MoEModel& m, std::span<const double> x, double g);

struct GradientPair {
    RowMatrix d_gating;  // H x (D+1)
    RowMatrix d_expert;  // H x (D+1)
};

/// Analytic log-loss gradients with respect to gating and expert weights:
///   dL/dw_h = x p_h|x (p_y|h,x - p_y|x)(p_y|x - g) / (p_y|x (1 - p_y|x))
///   dL/du_h = x p_h|x p_y|h,x (1 - p_y|h,x)(p_y|x - g) / (p_y|x (1 - p_y|x))
/// The regularizer is not included.
GradientPair moe_gradients(const MoEModel& m, std::span<const double> x, double g);

// --- Logistic regression ---

double logistic_predict(const LogisticModel& m, std::span<const double> x);
double logistic_log_loss(const LogisticModel& m, std::span<const double> x, double g);
// (sigma(w^T x) - g) x + 2 lambda w, bias excluded from the penalty.
std::vector<double> logistic_gradient(const LogisticModel& m, std::span<const double> x, double g);

// --- Hinge ---

struct HingeResult {
    double loss = 0.0;
    std::vector<double> subgradient;
};

/// loss = max(0, b - s w^T x), s = 2g - 1; subgradient -s x inside the margin, 0 otherwise
/// (including exactly at the kink).
HingeResult hinge_loss_and_subgradient(const HingeModel& m, std::span<const double> x, double g);

// --- Kind-generic interface used by the trainer ---

ModelKind kind_of(const Model& m);
std::size_t feature_dim(const Model& m);
std::size_t parameter_count(const Model& m);
std::span<double> parameters(Model& m);
std::span<const double> parameters(const Model& m);
std::span<double> adagrad_state(Model& m);
std::span<const double> adagrad_state(const Model& m);
double l2_coefficient(const Model& m);

// Score in [0, 1]: probability for logistic/MoE, sigma(w^T x) for hinge.
double predict(const Model& m, std::span<const double> x);

/// Data loss of one example; accumulates weight * dLoss/dparams into `grad`.
double accumulate_loss_gradient(const Model& m, std::span<const double> x, double g, double weight,
                                std::span<double> grad);

// lambda * (squared norm of all non-bias parameters).
double regularizer(const Model& m);
void accumulate_regularizer_gradient(const Model& m, double scale, std::span<double> grad);

// --- Serialization (64-bit little-endian, bit-exact) ---

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<unsigned char> serialize_model(const Model& m);
Model deserialize_model(std::span<const unsigned char> bytes);
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace vidlabel
