#include "mmgnn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mmgnn {

namespace {

Tensor as_constant(const Parameter& p) {
    return Tensor{std::shared_ptr<const Mat>(&p.value, [](const Mat*) {}), nullptr, -1};
}

Tensor use(Parameter& p, Tape* tape) { return tape ? tape->watch(p) : as_constant(p); }

Mat glorot(std::size_t fan_in, std::size_t fan_out, Rng rng) {
    Mat w(fan_in, fan_out);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.a) v = rng.uniform(-limit, limit);
    return w;
}

}  // namespace

const char* fusion_mode_name(FusionMode m, int single_order) {
    switch (m) {
        case FusionMode::Attention: return "attention";
        case FusionMode::Mlp: return "mlp";
        case FusionMode::MeanEnsemble: return "mean";
        case FusionMode::SingleMoment:
            switch (single_order) {
                case 1: return "single:1";
                case 2: return "single:2";
                case 3: return "single:3";
                default: return "single";
            }
    }
    return "?";
}

void ModelConfig::validate() const {
    if (num_layers < 1) throw std::invalid_argument("config: num_layers must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("config: hidden_dim must be >= 1");
    if (max_order < 1 || max_order > 3) throw std::invalid_argument("config: K must be in {1,2,3}");
    if (kind == MomentKind::Central && max_order < 2)
        throw std::invalid_argument("config: central moments need K >= 2 (order-1 central is identically zero)");
    if (fusion == FusionMode::SingleMoment && (single_order < 1 || single_order > max_order))
        throw std::invalid_argument("config: single-moment order must be in 1..K");
    if (root_eps < 0) throw std::invalid_argument("config: root_eps must be >= 0");
}

std::vector<int> ModelConfig::active_orders() const {
    if (fusion == FusionMode::SingleMoment) return {single_order};
    std::vector<int> orders;
    for (int k = 1; k <= max_order; ++k) orders.push_back(k);
    return orders;
}

std::vector<Parameter*> ModelParams::all() {
    std::vector<Parameter*> out;
    for (LayerParams& lp : layers) {
        for (Parameter& w : lp.moments.weights) out.push_back(&w);
        if (lp.adaptor) {
            out.push_back(&lp.adaptor->w_query);
            out.push_back(&lp.adaptor->w_key);
            out.push_back(&lp.adaptor->w_attn);
        }
        if (lp.mlp) out.push_back(&*lp.mlp);
        if (lp.residual) out.push_back(&*lp.residual);
    }
    return out;
}

std::vector<const Parameter*> ModelParams::all() const {
    std::vector<const Parameter*> out;
    for (const Parameter* p : const_cast<ModelParams*>(this)->all()) out.push_back(p);
    return out;
}

ModelParams init_model_params(const ModelConfig& cfg, std::size_t d_in, NodeId num_classes, const Rng& root) {
    cfg.validate();
    if (num_classes < 2) throw std::invalid_argument("init_model_params: need at least two classes");
    Rng init = root.fork("init");
    ModelParams params;
    params.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
        const std::size_t d_prev = l == 0 ? d_in : static_cast<std::size_t>(cfg.hidden_dim);
        const std::size_t d_out = l == cfg.num_layers - 1 ? static_cast<std::size_t>(num_classes)
                                                          : static_cast<std::size_t>(cfg.hidden_dim);
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (int k = 1; k <= cfg.max_order; ++k) {
            const std::string name = prefix + "moment" + std::to_string(k) + ".W";
            lp.moments.weights.emplace_back(name, glorot(d_prev, d_out, init.fork(name)));
        }
        if (cfg.fusion == FusionMode::Attention) {
            AdaptorParams ap;
            ap.w_query = Parameter(prefix + "attn.Wq", glorot(d_prev, d_out, init.fork(prefix + "attn.Wq")));
            ap.w_key = Parameter(prefix + "attn.Wk", glorot(d_out, d_out, init.fork(prefix + "attn.Wk")));
            ap.w_attn = Parameter(prefix + "attn.Wa", glorot(2 * d_out, d_out, init.fork(prefix + "attn.Wa")));
            lp.adaptor = std::move(ap);
        }
        if (cfg.fusion == FusionMode::Mlp) {
            const std::size_t in = static_cast<std::size_t>(cfg.max_order) * d_out;
            lp.mlp = Parameter(prefix + "fuse.W", glorot(in, d_out, init.fork(prefix + "fuse.W")));
        }
        if (cfg.residual && d_prev != d_out) {
            lp.residual = Parameter(prefix + "res.W", glorot(d_prev, d_out, init.fork(prefix + "res.W")));
        }
    }
    return params;
}

AttentionWeights attention(const Tensor& h_prev, const MomentSignatures& sigs, AdaptorParams& p, Tape* tape) {
    if (h_prev.cols() != p.w_query.value.rows) throw std::invalid_argument("attention: query width mismatch");
    const Tensor wq = use(p.w_query, tape);
    const Tensor wk = use(p.w_key, tape);
    const Tensor wa = use(p.w_attn, tape);
    const Tensor q = matmul(h_prev, wq);
    AttentionWeights att(sigs.projected.size());
    for (std::size_t i = 0; i < sigs.projected.size(); ++i) {
        const Tensor& sig = sigs.projected[i];
        if (!sig.val) continue;  // order not computed under this fusion mode
        if (sig.cols() != p.w_key.value.rows) throw std::invalid_argument("attention: key width mismatch");
        const Tensor key = matmul(sig, wk);
        const Tensor qk[] = {q, key};
        att[i] = sigmoid(matmul(concat_cols(qk), wa));
    }
    return att;
}

Tensor fuse(const MomentSignatures& sigs, const AttentionWeights& att, const ModelConfig& cfg, LayerParams& lp,
            Tape* tape) {
    switch (cfg.fusion) {
        case FusionMode::Attention: {
            if (att.size() != sigs.projected.size()) throw std::invalid_argument("fuse: attention/signature order mismatch");
            Tensor out;
            for (std::size_t i = 0; i < sigs.projected.size(); ++i) {
                if (!sigs.projected[i].val) continue;
                Tensor term = mul_elem(att[i], sigs.projected[i]);
                out = out.val ? add(out, term) : term;
            }
            if (!out.val) throw std::invalid_argument("fuse: no signatures");
            return out;
        }
        case FusionMode::SingleMoment:
            return sigs.sig(cfg.single_order);
        case FusionMode::MeanEnsemble: {
            Tensor out;
            int used = 0;
            for (const Tensor& sig : sigs.projected) {
                if (!sig.val) continue;
                out = out.val ? add(out, sig) : sig;
                ++used;
            }
            if (!used) throw std::invalid_argument("fuse: no signatures");
            return scale(out, 1.0 / used);
        }
        case FusionMode::Mlp: {
            if (!lp.mlp) throw std::invalid_argument("fuse: mlp weights missing");
            std::vector<Tensor> parts;
            for (const Tensor& sig : sigs.projected)
                if (sig.val) parts.push_back(sig);
            if (parts.empty()) throw std::invalid_argument("fuse: no signatures");
            return matmul(concat_cols(parts), use(*lp.mlp, tape));
        }
    }
    throw std::invalid_argument("fuse: unknown mode");
}

Tensor layer_forward(const SparseGraph& g, const Tensor& h_prev, LayerParams& lp, const ModelConfig& cfg,
                     bool is_last, Tape* tape, ForwardTrace* trace) {
    MomentSignatures sigs = mme_forward(g, h_prev, lp.moments, cfg.kind, cfg.root_eps, tape, cfg.active_orders());
    AttentionWeights att;
    if (cfg.fusion == FusionMode::Attention) {
        if (!lp.adaptor) throw std::invalid_argument("layer_forward: adaptor params missing");
        att = attention(h_prev, sigs, *lp.adaptor, tape);
    }
    Tensor h = fuse(sigs, att, cfg, lp, tape);
    if (cfg.residual) {
        Tensor res = h_prev;
        if (h_prev.cols() != h.cols()) {
            if (!lp.residual) throw std::invalid_argument("layer_forward: residual projection missing");
            res = matmul(h_prev, use(*lp.residual, tape));
        }
        h = add(h, res);
    }
    if (trace) {
        trace->attention.push_back(std::move(att));
        trace->signatures.push_back(std::move(sigs));
    }
    return is_last ? h : relu(h);
}

Tensor model_forward(const SparseGraph& g, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                     Tape* tape, ForwardTrace* trace) {
    if (params.layers.size() != static_cast<std::size_t>(cfg.num_layers))
        throw std::invalid_argument("model_forward: config/params layer count mismatch");
    Tensor h = x;
    for (int l = 0; l < cfg.num_layers; ++l)
        h = layer_forward(g, h, params.layers[static_cast<std::size_t>(l)], cfg, l == cfg.num_layers - 1, tape, trace);
    return h;
}

}  // namespace mmgnn
