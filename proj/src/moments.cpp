#include "mmgnn/moments.hpp"

#include <algorithm>
#include <stdexcept>

namespace mmgnn {

const char* moment_kind_name(MomentKind k) { return k == MomentKind::Origin ? "origin" : "central"; }

std::optional<MomentKind> parse_moment_kind(std::string_view s) {
    if (s == "origin") return MomentKind::Origin;
    if (s == "central") return MomentKind::Central;
    return std::nullopt;
}

Tensor raw_moment(const SparseGraph& g, const Tensor& h, int k, MomentKind kind, double eps) {
    if (kind == MomentKind::Central) {
        return raw_moment(g, h, spmm_mean(g, h), k, kind, eps);
    }
    return raw_moment(g, h, Tensor{}, k, kind, eps);
}

Tensor raw_moment(const SparseGraph& g, const Tensor& h, const Tensor& mu, int k, MomentKind kind, double eps) {
    if (k < 1) throw std::invalid_argument("raw_moment: order must be >= 1");
    if (kind == MomentKind::Central) {
        if (k < 2) throw std::invalid_argument("raw_moment: central moment of order 1 is identically zero");
        return signed_root(spmm_centered_pow(g, h, mu, k), k, eps);
    }
    return signed_root(spmm_mean(g, pow_elem(h, k)), k, eps);
}

MomentSignatures mme_forward(const SparseGraph& g, const Tensor& h, MomentLayerParams& params, MomentKind kind,
                             double eps, Tape* tape, const std::vector<int>& orders) {
    const int K = params.max_order();
    if (K < 1) throw std::invalid_argument("mme_forward: no moment weights");
    auto wanted = [&](int k) {
        return orders.empty() || std::find(orders.begin(), orders.end(), k) != orders.end();
    };

    MomentSignatures sigs;
    sigs.raw.resize(static_cast<std::size_t>(K));
    sigs.projected.resize(static_cast<std::size_t>(K));

    Tensor mu;
    if (kind == MomentKind::Central) {
        bool central_needed = false;
        for (int k = 2; k <= K; ++k) central_needed |= wanted(k);
        if (central_needed) mu = spmm_mean(g, h);
    }

    for (int k = 1; k <= K; ++k) {
        if (!wanted(k)) continue;
        Parameter& w = params.weights[static_cast<std::size_t>(k) - 1];
        if (h.cols() != w.value.rows) throw std::invalid_argument("mme_forward: input width != W_k rows");
        Tensor rawk;
        if (k == 1) {
            // order 1 is the neighborhood mean under either kind
            rawk = (kind == MomentKind::Central && mu.val) ? mu : raw_moment(g, h, 1, MomentKind::Origin, eps);
        } else if (kind == MomentKind::Central) {
            rawk = raw_moment(g, h, mu, k, kind, eps);
        } else {
            rawk = raw_moment(g, h, k, kind, eps);
        }
        Tensor w_t = tape ? tape->watch(w) : Tensor{std::shared_ptr<const Mat>(&w.value, [](const Mat*) {}), nullptr, -1};
        sigs.projected[static_cast<std::size_t>(k) - 1] = matmul(rawk, w_t);
        sigs.raw[static_cast<std::size_t>(k) - 1] = std::move(rawk);
    }
    return sigs;
}

}  // namespace mmgnn
