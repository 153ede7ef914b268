#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmgnn/graph.hpp"
#include "mmgnn/model.hpp"

namespace mmgnn {

enum class StatisticKind { Mean, Variance, Skewness, OriginMoment, CentralMoment, StandardizedMoment };

/// A neighborhood-distribution statistic; order is meaningful for the moment
/// kinds only. Parsed/printed as mean|variance|skewness|origin:k|central:k|std:k.
struct Statistic {
    StatisticKind kind = StatisticKind::Mean;
    int order = 0;

    std::string name() const;
    static std::optional<Statistic> parse(std::string_view s);
    void validate() const;
};

/// Per-node statistic of {X[j, dim] : j in N(v)}. Population (1/n)
/// denominators throughout. Zero-degree nodes yield NaN (missing); skewness
/// and standardized moments of a zero-variance neighborhood are 0 by
/// convention.
std::vector<double> neighborhood_statistic(const SparseGraph& g, const Mat& x, std::size_t dim, Statistic stat);

/// Sum over class pairs of (mu_i - mu_j)^2 / (sigma_i^2 + sigma_j^2)
/// (population variances; unordered pairs by default, ordered doubles the
/// sum). A zero-variance pair with distinct means yields +inf. NaN inputs are
/// dropped.
double fisher_index(std::span<const double> values, const LabelVector& labels, bool ordered_pairs = false);

/// Plug-in mutual information (nats) between equal-frequency-binned values
/// and labels. NaN values dropped; requires >= 2*bins usable samples.
double mutual_information(std::span<const double> values, const LabelVector& labels, int bins = 16);

struct ComplexityConfig {
    double p = 2.0;  // norm order, >= 1
};

/// Consistency-of-representations complexity: mean over classes of the worst
/// ratio (S_i + S_j) / M_ij where S is intra-class spread and M the
/// centroid distance. Coincident centroids yield the +inf sentinel.
double complexity_measure(const Mat& h, const LabelVector& labels, const ComplexityConfig& cfg = {});

struct DeviationBound {
    double epsilon = 0.0;  // expansion-point radius
    double c = 1.0;        // feature magnitude bound, > 0
    int k = 1;             // moment order, >= 1
};

/// Lagrange-remainder bound (epsilon*c)^(k+1) / (k+1)! on the error of a
/// finite-order moment representation.
double deviation_bound(const DeviationBound& b);

/// Mean attention per (layer, order) over all nodes and hidden dimensions;
/// one row per layer.
Mat attention_summary(const std::vector<AttentionWeights>& per_layer);

}  // namespace mmgnn
