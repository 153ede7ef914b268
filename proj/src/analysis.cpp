#include "mmgnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace mmgnn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

}  // namespace

std::string Statistic::name() const {
    switch (kind) {
        case StatisticKind::Mean: return "mean";
        case StatisticKind::Variance: return "variance";
        case StatisticKind::Skewness: return "skewness";
        case StatisticKind::OriginMoment: return "origin:" + std::to_string(order);
        case StatisticKind::CentralMoment: return "central:" + std::to_string(order);
        case StatisticKind::StandardizedMoment: return "std:" + std::to_string(order);
    }
    return "?";
}

std::optional<Statistic> Statistic::parse(std::string_view s) {
    if (s == "mean") return Statistic{StatisticKind::Mean, 0};
    if (s == "variance") return Statistic{StatisticKind::Variance, 0};
    if (s == "skewness") return Statistic{StatisticKind::Skewness, 0};
    auto with_order = [&](std::string_view prefix, StatisticKind kind) -> std::optional<Statistic> {
        if (s.size() <= prefix.size() || s.substr(0, prefix.size()) != prefix) return std::nullopt;
        int order = 0;
        for (char c : s.substr(prefix.size())) {
            if (c < '0' || c > '9') return std::nullopt;
            order = order * 10 + (c - '0');
        }
        return Statistic{kind, order};
    };
    if (auto r = with_order("origin:", StatisticKind::OriginMoment)) return r;
    if (auto r = with_order("central:", StatisticKind::CentralMoment)) return r;
    if (auto r = with_order("std:", StatisticKind::StandardizedMoment)) return r;
    return std::nullopt;
}

void Statistic::validate() const {
    switch (kind) {
        case StatisticKind::OriginMoment:
        case StatisticKind::CentralMoment:
            if (order < 1) throw std::invalid_argument("statistic: moment order must be >= 1");
            break;
        case StatisticKind::StandardizedMoment:
            if (order < 3)
                throw std::invalid_argument("statistic: standardized moments below order 3 duplicate mean/variance");
            break;
        default:
            break;
    }
}

std::vector<double> neighborhood_statistic(const SparseGraph& g, const Mat& x, std::size_t dim, Statistic stat) {
    if (dim >= x.cols) throw std::invalid_argument("neighborhood_statistic: dim out of range");
    stat.validate();
    std::vector<double> out(static_cast<std::size_t>(g.num_nodes), kNaN);
    for (NodeId v = 0; v < g.num_nodes; ++v) {
        const auto nbrs = g.neighbors(v);
        if (nbrs.empty()) continue;
        const double inv = 1.0 / static_cast<double>(nbrs.size());
        double mean = 0.0;
        for (NodeId j : nbrs) mean += x(static_cast<std::size_t>(j), dim);
        mean *= inv;

        auto central = [&](int k) {
            double s = 0.0;
            for (NodeId j : nbrs) s += ipow(x(static_cast<std::size_t>(j), dim) - mean, k);
            return s * inv;
        };

        double r = kNaN;
        switch (stat.kind) {
            case StatisticKind::Mean: r = mean; break;
            case StatisticKind::Variance: r = central(2); break;
            case StatisticKind::Skewness: {
                const double var = central(2);
                r = var > 0 ? central(3) / std::pow(var, 1.5) : 0.0;
                break;
            }
            case StatisticKind::OriginMoment: {
                double s = 0.0;
                for (NodeId j : nbrs) s += ipow(x(static_cast<std::size_t>(j), dim), stat.order);
                r = s * inv;
                break;
            }
            case StatisticKind::CentralMoment: r = central(stat.order); break;
            case StatisticKind::StandardizedMoment: {
                const double var = central(2);
                r = var > 0 ? central(stat.order) / std::pow(var, stat.order / 2.0) : 0.0;
                break;
            }
        }
        out[static_cast<std::size_t>(v)] = r;
    }
    return out;
}

double fisher_index(std::span<const double> values, const LabelVector& labels, bool ordered_pairs) {
    if (values.size() != labels.labels.size()) throw std::invalid_argument("fisher_index: size mismatch");
    const NodeId C = labels.num_classes;
    std::vector<double> mean(static_cast<std::size_t>(C), 0.0), var(static_cast<std::size_t>(C), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(C), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) continue;
        const auto c = static_cast<std::size_t>(labels.labels[i]);
        ++count[c];
        mean[c] += values[i];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) {
        if (count[c] < 2) throw std::invalid_argument("fisher_index: class " + std::to_string(c) + " has fewer than 2 samples");
        mean[c] /= static_cast<double>(count[c]);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) continue;
        const auto c = static_cast<std::size_t>(labels.labels[i]);
        const double d = values[i] - mean[c];
        var[c] += d * d;
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) var[c] /= static_cast<double>(count[c]);

    double total = 0.0;
    bool warned = false;
    for (std::size_t i = 0; i < static_cast<std::size_t>(C); ++i)
        for (std::size_t j = i + 1; j < static_cast<std::size_t>(C); ++j) {
            const double num = (mean[i] - mean[j]) * (mean[i] - mean[j]);
            const double den = var[i] + var[j];
            if (den == 0.0) {
                if (num == 0.0) continue;  // coincident degenerate classes contribute nothing
                if (!warned) {
                    std::cerr << "fisher_index: zero pooled variance with distinct means; reporting inf\n";
                    warned = true;
                }
                return kInf;
            }
            total += num / den;
        }
    return ordered_pairs ? 2.0 * total : total;
}

double mutual_information(std::span<const double> values, const LabelVector& labels, int bins) {
    if (values.size() != labels.labels.size()) throw std::invalid_argument("mutual_information: size mismatch");
    if (bins < 2) throw std::invalid_argument("mutual_information: bins must be >= 2");
    std::vector<std::pair<double, NodeId>> usable;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isnan(values[i])) usable.emplace_back(values[i], labels.labels[i]);
    const std::size_t n = usable.size();
    if (n < 2 * static_cast<std::size_t>(bins))
        throw std::invalid_argument("mutual_information: need at least 2*bins usable samples");

    // equal-frequency bin edges; ties fall into the bin left of the edge
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = usable[i].first;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int b = 1; b < bins; ++b) edges.push_back(sorted[n * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins)]);

    const auto C = static_cast<std::size_t>(labels.num_classes);
    std::vector<double> joint(static_cast<std::size_t>(bins) * C, 0.0);
    std::vector<double> pb(static_cast<std::size_t>(bins), 0.0), pc(C, 0.0);
    for (const auto& [v, y] : usable) {
        const auto b = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
        joint[b * C + static_cast<std::size_t>(y)] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& j : joint) j *= inv;
    for (std::size_t b = 0; b < static_cast<std::size_t>(bins); ++b)
        for (std::size_t c = 0; c < C; ++c) {
            pb[b] += joint[b * C + c];
            pc[c] += joint[b * C + c];
        }
    double mi = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(bins); ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double pbc = joint[b * C + c];
            if (pbc > 0) mi += pbc * std::log(pbc / (pb[b] * pc[c]));
        }
    return std::max(mi, 0.0);
}

double complexity_measure(const Mat& h, const LabelVector& labels, const ComplexityConfig& cfg) {
    if (h.rows != labels.labels.size()) throw std::invalid_argument("complexity_measure: size mismatch");
    if (cfg.p < 1) throw std::invalid_argument("complexity_measure: p must be >= 1");
    const auto C = static_cast<std::size_t>(labels.num_classes);
    if (C < 2) throw std::invalid_argument("complexity_measure: need >= 2 classes");
    const std::size_t d = h.cols;

    std::vector<Mat> centroid(C, Mat(1, d));
    std::vector<std::size_t> count(C, 0);
    for (std::size_t i = 0; i < h.rows; ++i) {
        const auto c = static_cast<std::size_t>(labels.labels[i]);
        ++count[c];
        for (std::size_t j = 0; j < d; ++j) centroid[c](0, j) += h(i, j);
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (count[c] == 0) throw std::invalid_argument("complexity_measure: empty class");
        for (std::size_t j = 0; j < d; ++j) centroid[c](0, j) /= static_cast<double>(count[c]);
    }

    // S_c = (E ||h - mu_c||_p^p)^(1/p)
    std::vector<double> spread(C, 0.0);
    for (std::size_t i = 0; i < h.rows; ++i) {
        const auto c = static_cast<std::size_t>(labels.labels[i]);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += std::pow(std::abs(h(i, j) - centroid[c](0, j)), cfg.p);
        spread[c] += s;
    }
    for (std::size_t c = 0; c < C; ++c) spread[c] = std::pow(spread[c] / static_cast<double>(count[c]), 1.0 / cfg.p);

    double gamma = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            if (i == j) continue;
            double m = 0.0;
            for (std::size_t t = 0; t < d; ++t) m += std::pow(std::abs(centroid[i](0, t) - centroid[j](0, t)), cfg.p);
            m = std::pow(m, 1.0 / cfg.p);
            const double s = spread[i] + spread[j];
            if (m == 0.0) {
                if (s == 0.0) continue;  // identical point classes: 0/0 treated as no contribution
                return kInf;
            }
            worst = std::max(worst, s / m);
        }
        gamma += worst;
    }
    return gamma / static_cast<double>(C);
}

double deviation_bound(const DeviationBound& b) {
    if (!(b.c > 0)) throw std::invalid_argument("deviation_bound: c must be > 0");
    if (b.k < 1) throw std::invalid_argument("deviation_bound: k must be >= 1");
    double r = 1.0;
    for (int i = 1; i <= b.k + 1; ++i) r *= b.epsilon * b.c / static_cast<double>(i);
    return std::abs(r);
}

Mat attention_summary(const std::vector<AttentionWeights>& per_layer) {
    if (per_layer.empty()) throw std::invalid_argument("attention_summary: no layers");
    std::size_t K = 0;
    for (const auto& layer : per_layer) K = std::max(K, layer.size());
    if (K == 0) throw std::invalid_argument("attention_summary: no attention weights recorded");
    Mat out(per_layer.size(), K, kNaN);
    for (std::size_t l = 0; l < per_layer.size(); ++l)
        for (std::size_t k = 0; k < per_layer[l].size(); ++k) {
            const Tensor& a = per_layer[l][k];
            if (!a.val) continue;
            double s = 0.0;
            for (double v : a.m().a) s += v;
            out(l, k) = s / static_cast<double>(a.m().size());
        }
    return out;
}

}  // namespace mmgnn
