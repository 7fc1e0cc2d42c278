#pragma once

// Slow, direct reference implementations used for cross-checking: threshold
// enumeration for AP, rank counting for Hit@k / PERR, central differences for
// gradients, extended precision for the mixture of experts.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vidlabel/common.hpp"
#include "vidlabel/metrics.hpp"
#include "vidlabel/models.hpp"

namespace vidlabel::reference {

// Visits every threshold j/10000 and counts retrieved examples by binary search in
// the sorted bucket list.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> truths);

struct MapResult {
    double map = 0.0;
    std::vector<std::optional<double>> per_class;
    std::size_t skipped = 0;
};
MapResult mean_average_precision(const PredictionSet& p);

// 1-based rank of `label`: 1 + number of labels with a higher score, or an equal score
// and a lower id.
std::size_t rank_of(std::span<const double> scores, LabelId label);

std::optional<double> hit_at_k(const PredictionSet& p, std::size_t k, bool include_empty = false);
std::optional<double> perr(const PredictionSet& p);

// Central differences of `loss` at `params` with step h, perturbing one coordinate at a time.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& loss,
                                      std::vector<double> params, double h = 1e-5);

// Mixture prediction and gating evaluated in long double.
long double moe_predict(const MoEModel& m, std::span<const double> x);
std::vector<long double> moe_gating(const MoEModel& m, std::span<const double> x);  // H experts then dummy

struct MeanStd {
    std::vector<double> mean;
    std::vector<double> std;
};
// Plain two-pass long-double accumulation.
MeanStd mean_std(const RowMatrix& frames);
// Full descending sort per dimension, padding with the minimum.
std::vector<double> topk(const RowMatrix& frames, std::size_t k);

// Population covariance of the rows.
RowMatrix covariance(const RowMatrix& sample);

}  // namespace vidlabel::reference
