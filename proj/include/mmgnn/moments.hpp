#pragma once

#include <optional>
#include <vector>

#include "mmgnn/graph.hpp"
#include "mmgnn/tensor.hpp"

namespace mmgnn {

enum class MomentKind { Origin, Central };

const char* moment_kind_name(MomentKind k);
std::optional<MomentKind> parse_moment_kind(std::string_view s);

/// One projection matrix per moment order: raw moment (n x d_in) -> signature
/// (n x d_hidden).
struct MomentLayerParams {
    std::vector<Parameter> weights;  // order k at index k-1

    int max_order() const { return static_cast<int>(weights.size()); }
};

/// Per-order neighborhood moment signatures of one layer. Raw (pre-projection)
/// moments are kept for the analysis exports; raw order 1 equals spmm_mean
/// exactly.
struct MomentSignatures {
    std::vector<Tensor> raw;        // n x d_in
    std::vector<Tensor> projected;  // n x d_hidden

    int max_order() const { return static_cast<int>(projected.size()); }
    const Tensor& sig(int k) const { return projected[static_cast<std::size_t>(k) - 1]; }
    const Tensor& raw_moment(int k) const { return raw[static_cast<std::size_t>(k) - 1]; }
};

/// k-th order neighborhood moment of h, 1/k-root normalized.
/// Origin:  signed_root(mean_N(h^k), k, eps)
/// Central: signed_root(mean_N((h - mu)^k), k, eps) with mu = mean_N(h); k >= 2.
/// Zero-degree rows are 0.
Tensor raw_moment(const SparseGraph& g, const Tensor& h, int k, MomentKind kind, double eps);

/// Variant sharing a precomputed neighborhood mean across orders.
Tensor raw_moment(const SparseGraph& g, const Tensor& h, const Tensor& mu, int k, MomentKind kind, double eps);

/// Computes signature_k = raw_moment(g, h, k, kind, eps) * W_k for each order
/// the params carry. In a Central configuration order 1 is the neighborhood
/// mean (the order-1 origin moment); central moments start at order 2.
/// `orders` restricts computation to a subset (empty = all); skipped orders
/// hold empty tensors.
MomentSignatures mme_forward(const SparseGraph& g, const Tensor& h, MomentLayerParams& params, MomentKind kind,
                             double eps, Tape* tape, const std::vector<int>& orders = {});

}  // namespace mmgnn
