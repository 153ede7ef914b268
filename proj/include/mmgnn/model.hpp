#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmgnn/moments.hpp"
#include "mmgnn/rng.hpp"

namespace mmgnn {

/// Query/key/attention matrices of one layer's moment adaptor.
struct AdaptorParams {
    Parameter w_query;  // d_prev x d_hidden
    Parameter w_key;    // d_hidden x d_hidden
    Parameter w_attn;   // 2*d_hidden x d_hidden
};

/// Element-wise attention per order: entry (i, j) weights dimension j of the
/// k-th order signature of node i; strictly inside (0, 1).
using AttentionWeights = std::vector<Tensor>;  // order k at index k-1

enum class FusionMode { Attention, Mlp, MeanEnsemble, SingleMoment };

const char* fusion_mode_name(FusionMode m, int single_order = 0);

struct ModelConfig {
    int num_layers = 2;
    int hidden_dim = 16;
    int max_order = 2;  // K
    MomentKind kind = MomentKind::Origin;
    FusionMode fusion = FusionMode::Attention;
    int single_order = 1;  // used when fusion == SingleMoment
    bool residual = true;
    double root_eps = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
    /// Orders the fusion mode actually consumes (SingleMoment uses one).
    std::vector<int> active_orders() const;
};

struct LayerParams {
    MomentLayerParams moments;
    std::optional<AdaptorParams> adaptor;  // fusion == Attention
    std::optional<Parameter> mlp;          // fusion == Mlp: (K*d_hidden) x d_out
    std::optional<Parameter> residual;     // projection when widths differ
};

struct ModelParams {
    std::vector<LayerParams> layers;

    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
};

/// Glorot-uniform initialization; every matrix gets its own named substream,
/// so values do not depend on construction order.
ModelParams init_model_params(const ModelConfig& cfg, std::size_t d_in, NodeId num_classes, const Rng& root);

/// Eq.-style element-wise attention: a_k = sigmoid([h W_q || M_k W_k] W_a).
/// No normalization across orders.
AttentionWeights attention(const Tensor& h_prev, const MomentSignatures& sigs, AdaptorParams& p, Tape* tape);

/// Collapses per-order signatures into one representation.
Tensor fuse(const MomentSignatures& sigs, const AttentionWeights& att, const ModelConfig& cfg, LayerParams& lp,
            Tape* tape);

/// Captured per-layer internals of one forward pass (attention heat maps,
/// cached raw moments) for the analysis exports.
struct ForwardTrace {
    std::vector<AttentionWeights> attention;      // per layer (empty unless fusion == Attention)
    std::vector<MomentSignatures> signatures;     // per layer
};

Tensor layer_forward(const SparseGraph& g, const Tensor& h_prev, LayerParams& lp, const ModelConfig& cfg,
                     bool is_last, Tape* tape, ForwardTrace* trace = nullptr);

/// Stacked layers; the last layer's width is num_classes and carries no
/// nonlinearity.
Tensor model_forward(const SparseGraph& g, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                     Tape* tape, ForwardTrace* trace = nullptr);

}  // namespace mmgnn
