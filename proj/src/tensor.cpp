#include "mmgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mmgnn/rng.hpp"

namespace mmgnn {

namespace {

double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

Tape* pick_tape(const Tensor& a, const Tensor& b) {
    if (a.tape && b.tape && a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
    return a.tape ? a.tape : b.tape;
}

}  // namespace

Tensor Tape::watch(Parameter& p) {
    Node n;
    // alias: the tape never outlives the step in which the parameter is read
    n.value = std::shared_ptr<const Mat>(&p.value, [](const Mat*) {});
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Tensor{nodes_.back().value, this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::record(Mat out, PullFn pull) {
    return record(std::shared_ptr<const Mat>(std::make_shared<Mat>(std::move(out))), std::move(pull));
}

Tensor Tape::record(std::shared_ptr<const Mat> out, PullFn pull) {
    Node n;
    n.value = std::move(out);
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return Tensor{nodes_.back().value, this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int node, const Mat& g) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        add_inplace(n.grad, g);
    }
}

void Tape::accumulate(int node, Mat&& g) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.grad.size() == 0) {
        n.grad = std::move(g);
    } else {
        add_inplace(n.grad, g);
    }
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape != this || loss.node < 0) throw std::invalid_argument("backward: loss not recorded on this tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be scalar");
    accumulate(loss.node, Mat(1, 1, 1.0));
    for (int i = loss.node; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0) continue;  // unreachable from loss
        if (n.pull) n.pull(*this, n.grad);
        if (n.param) add_inplace(n.param->grad, n.grad);
    }
}

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Mat out = mmgnn::matmul(a.m(), b.m());
    Tape* t = pick_tape(a, b);
    if (!t) return Tensor(std::move(out));
    const int ia = a.node, ib = b.node;
    auto av = a.val, bv = b.val;
    return t->record(std::move(out), [ia, ib, av, bv](Tape& tp, const Mat& g) {
        if (ia >= 0) tp.accumulate(ia, matmul_nt(g, *bv));
        if (ib >= 0) tp.accumulate(ib, matmul_tn(*av, g));
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.m().same_shape(b.m())) throw std::invalid_argument("add: shape mismatch");
    Mat out = a.m();
    add_inplace(out, b.m());
    Tape* t = pick_tape(a, b);
    if (!t) return Tensor(std::move(out));
    const int ia = a.node, ib = b.node;
    return t->record(std::move(out), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.m().same_shape(b.m())) throw std::invalid_argument("sub: shape mismatch");
    Mat out = a.m();
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] -= b.m().a[i];
    Tape* t = pick_tape(a, b);
    if (!t) return Tensor(std::move(out));
    const int ia = a.node, ib = b.node;
    return t->record(std::move(out), [ia, ib](Tape& tp, const Mat& g) {
        tp.accumulate(ia, g);
        if (ib >= 0) {
            Mat ng = g;
            for (double& v : ng.a) v = -v;
            tp.accumulate(ib, std::move(ng));
        }
    });
}

Tensor mul_elem(const Tensor& a, const Tensor& b) {
    if (!a.m().same_shape(b.m())) throw std::invalid_argument("mul_elem: shape mismatch");
    Mat out = a.m();
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] *= b.m().a[i];
    Tape* t = pick_tape(a, b);
    if (!t) return Tensor(std::move(out));
    const int ia = a.node, ib = b.node;
    auto av = a.val, bv = b.val;
    return t->record(std::move(out), [ia, ib, av, bv](Tape& tp, const Mat& g) {
        if (ia >= 0) {
            Mat ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] *= bv->a[i];
            tp.accumulate(ia, std::move(ga));
        }
        if (ib >= 0) {
            Mat gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb.a[i] *= av->a[i];
            tp.accumulate(ib, std::move(gb));
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    Mat out = a.m();
    for (double& v : out.a) v *= c;
    if (!a.tape) return Tensor(std::move(out));
    const int ia = a.node;
    return a.tape->record(std::move(out), [ia, c](Tape& tp, const Mat& g) {
        Mat ga = g;
        for (double& v : ga.a) v *= c;
        tp.accumulate(ia, std::move(ga));
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    Tape* t = nullptr;
    for (const Tensor& p : parts) {
        if (p.rows() != n) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.cols();
        if (p.tape) {
            if (t && t != p.tape) throw std::invalid_argument("operands recorded on different tapes");
            t = p.tape;
        }
    }
    Mat out(n, total);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        for (std::size_t i = 0; i < n; ++i)
            std::copy(p.m().row(i), p.m().row(i) + p.cols(), out.row(i) + off);
        off += p.cols();
    }
    if (!t) return Tensor(std::move(out));
    struct Piece {
        int node;
        std::size_t off, cols;
    };
    std::vector<Piece> pieces;
    off = 0;
    for (const Tensor& p : parts) {
        pieces.push_back({p.node, off, p.cols()});
        off += p.cols();
    }
    return t->record(std::move(out), [pieces, n](Tape& tp, const Mat& g) {
        for (const Piece& pc : pieces) {
            if (pc.node < 0) continue;
            Mat gp(n, pc.cols);
            for (std::size_t i = 0; i < n; ++i)
                std::copy(g.row(i) + pc.off, g.row(i) + pc.off + pc.cols, gp.row(i));
            tp.accumulate(pc.node, std::move(gp));
        }
    });
}

Tensor pow_elem(const Tensor& t, int k) {
    if (k < 1) throw std::invalid_argument("pow_elem: k must be >= 1");
    if (k == 1) return t;  // exact pass-through
    Mat out = t.m();
    for (double& v : out.a) v = ipow(v, k);
    if (!t.tape) return Tensor(std::move(out));
    const int it = t.node;
    auto tv = t.val;
    return t.tape->record(std::move(out), [it, tv, k](Tape& tp, const Mat& g) {
        Mat gt = g;
        for (std::size_t i = 0; i < gt.size(); ++i) gt.a[i] *= k * ipow(tv->a[i], k - 1);
        tp.accumulate(it, std::move(gt));
    });
}

double signed_root_scalar(double x, int k, double eps) {
    if (k < 1) throw std::invalid_argument("signed_root: k must be >= 1");
    if (k == 1) return x;
    const double s = x < 0 ? -1.0 : (x > 0 ? 1.0 : 0.0);
    return s * (std::pow(std::abs(x) + eps, 1.0 / k) - std::pow(eps, 1.0 / k));
}

Tensor signed_root(const Tensor& t, int k, double eps) {
    if (k < 1) throw std::invalid_argument("signed_root: k must be >= 1");
    if (eps < 0) throw std::invalid_argument("signed_root: eps must be >= 0");
    if (k == 1) return t;
    Mat out = t.m();
    const double inv_k = 1.0 / k;
    const double root_eps = std::pow(eps, inv_k);
    for (double& v : out.a) {
        const double s = v < 0 ? -1.0 : (v > 0 ? 1.0 : 0.0);
        v = s * (std::pow(std::abs(v) + eps, inv_k) - root_eps);
    }
    if (!t.tape) return Tensor(std::move(out));
    const int it = t.node;
    auto tv = t.val;
    return t.tape->record(std::move(out), [it, tv, k, eps, inv_k](Tape& tp, const Mat& g) {
        Mat gt = g;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const double x = tv->a[i];
            double d;
            if (x == 0.0 && eps == 0.0) {
                d = 0.0;  // subgradient at the unregularized cusp
            } else {
                d = inv_k * std::pow(std::abs(x) + eps, inv_k - 1.0);
            }
            gt.a[i] *= d;
        }
        tp.accumulate(it, std::move(gt));
    });
}

Tensor sigmoid(const Tensor& t) {
    Mat out = t.m();
    for (double& v : out.a) {
        if (v >= 0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    if (!t.tape) return Tensor(std::move(out));
    const int it = t.node;
    auto ov = std::make_shared<const Mat>(std::move(out));  // saved activation
    return t.tape->record(ov, [it, ov](Tape& tp, const Mat& g) {
        Mat gt = g;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const double s = ov->a[i];
            gt.a[i] *= s * (1.0 - s);
        }
        tp.accumulate(it, std::move(gt));
    });
}

Tensor relu(const Tensor& t) {
    Mat out = t.m();
    for (double& v : out.a) v = v > 0 ? v : 0.0;
    if (!t.tape) return Tensor(std::move(out));
    const int it = t.node;
    auto tv = t.val;
    return t.tape->record(std::move(out), [it, tv](Tape& tp, const Mat& g) {
        Mat gt = g;
        for (std::size_t i = 0; i < gt.size(); ++i)
            if (!(tv->a[i] > 0)) gt.a[i] = 0.0;
        tp.accumulate(it, std::move(gt));
    });
}

Tensor sum_all(const Tensor& t) {
    double s = 0.0;
    for (double v : t.m().a) s += v;
    Mat out(1, 1, s);
    if (!t.tape) return Tensor(std::move(out));
    const int it = t.node;
    const std::size_t r = t.rows(), c = t.cols();
    return t.tape->record(std::move(out), [it, r, c](Tape& tp, const Mat& g) {
        tp.accumulate(it, Mat(r, c, g(0, 0)));
    });
}

Tensor spmm_mean(const SparseGraph& g, const Tensor& h) {
    if (h.rows() != static_cast<std::size_t>(g.num_nodes)) throw std::invalid_argument("spmm_mean: row count != num_nodes");
    const std::size_t d = h.cols();
    Mat out(h.rows(), d);
    const Mat& hv = h.m();
    parallel_for(h.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto nbrs = g.neighbors(static_cast<NodeId>(i));
            if (nbrs.empty()) continue;
            double* oi = out.row(i);
            for (NodeId j : nbrs) {
                const double* hj = hv.row(static_cast<std::size_t>(j));
                for (std::size_t c = 0; c < d; ++c) oi[c] += hj[c];
            }
            const double inv = 1.0 / static_cast<double>(nbrs.size());
            for (std::size_t c = 0; c < d; ++c) oi[c] *= inv;
        }
    });
    if (!h.tape) return Tensor(std::move(out));
    const int ih = h.node;
    const SparseGraph* gp = &g;  // graphs are immutable and outlive the step
    return h.tape->record(std::move(out), [ih, gp, d](Tape& tp, const Mat& up) {
        Mat gh(up.rows, d);
        parallel_for(up.rows, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t j = lo; j < hi; ++j) {
                double* gj = gh.row(j);
                for (NodeId i : gp->neighbors(static_cast<NodeId>(j))) {
                    const double inv = 1.0 / static_cast<double>(gp->degree(i));
                    const double* ui = up.row(static_cast<std::size_t>(i));
                    for (std::size_t c = 0; c < d; ++c) gj[c] += inv * ui[c];
                }
            }
        });
        tp.accumulate(ih, std::move(gh));
    });
}

Tensor spmm_centered_pow(const SparseGraph& g, const Tensor& h, const Tensor& center, int k) {
    if (k < 1) throw std::invalid_argument("spmm_centered_pow: k must be >= 1");
    if (h.rows() != static_cast<std::size_t>(g.num_nodes) || !h.m().same_shape(center.m()))
        throw std::invalid_argument("spmm_centered_pow: shape mismatch");
    const std::size_t d = h.cols();
    Mat out(h.rows(), d);
    const Mat& hv = h.m();
    const Mat& cv = center.m();
    parallel_for(h.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto nbrs = g.neighbors(static_cast<NodeId>(i));
            if (nbrs.empty()) continue;
            double* oi = out.row(i);
            const double* ci = cv.row(i);
            for (NodeId j : nbrs) {
                const double* hj = hv.row(static_cast<std::size_t>(j));
                for (std::size_t c = 0; c < d; ++c) oi[c] += ipow(hj[c] - ci[c], k);
            }
            const double inv = 1.0 / static_cast<double>(nbrs.size());
            for (std::size_t c = 0; c < d; ++c) oi[c] *= inv;
        }
    });
    Tape* t = pick_tape(h, center);
    if (!t) return Tensor(std::move(out));
    const int ih = h.node, ic = center.node;
    auto hvp = h.val, cvp = center.val;
    const SparseGraph* gp = &g;
    return t->record(std::move(out), [ih, ic, hvp, cvp, gp, k, d](Tape& tp, const Mat& up) {
        const Mat& hm = *hvp;
        const Mat& cm = *cvp;
        if (ic >= 0) {
            // d out_i / d center_i = -(k/deg_i) * sum_j (h_j - c_i)^(k-1)
            Mat gc(up.rows, d);
            parallel_for(up.rows, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const auto nbrs = gp->neighbors(static_cast<NodeId>(i));
                    if (nbrs.empty()) continue;
                    double* gi = gc.row(i);
                    const double* ci = cm.row(i);
                    const double* ui = up.row(i);
                    const double f = -static_cast<double>(k) / static_cast<double>(nbrs.size());
                    for (NodeId j : nbrs) {
                        const double* hj = hm.row(static_cast<std::size_t>(j));
                        for (std::size_t c = 0; c < d; ++c) gi[c] += f * ipow(hj[c] - ci[c], k - 1) * ui[c];
                    }
                }
            });
            tp.accumulate(ic, std::move(gc));
        }
        if (ih >= 0) {
            // d out_i / d h_j = (k/deg_i) * (h_j - c_i)^(k-1) for j in N(i)
            Mat gh(up.rows, d);
            parallel_for(up.rows, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t j = lo; j < hi; ++j) {
                    double* gj = gh.row(j);
                    const double* hj = hm.row(j);
                    for (NodeId i : gp->neighbors(static_cast<NodeId>(j))) {
                        const double f = static_cast<double>(k) / static_cast<double>(gp->degree(i));
                        const double* ci = cm.row(static_cast<std::size_t>(i));
                        const double* ui = up.row(static_cast<std::size_t>(i));
                        for (std::size_t c = 0; c < d; ++c) gj[c] += f * ipow(hj[c] - ci[c], k - 1) * ui[c];
                    }
                }
            });
            tp.accumulate(ih, std::move(gh));
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const LabelVector& labels, const SplitMask& mask, Role role) {
    const std::size_t n = logits.rows(), C = logits.cols();
    if (labels.labels.size() != n || mask.roles.size() != n)
        throw std::invalid_argument("softmax_cross_entropy: labels/mask size mismatch");
    if (static_cast<NodeId>(C) != labels.num_classes)
        throw std::invalid_argument("softmax_cross_entropy: logit width != num_classes");
    std::size_t m = 0;
    double total = 0.0;
    const Mat& z = logits.m();
    for (std::size_t i = 0; i < n; ++i) {
        if (mask.roles[i] != role) continue;
        ++m;
        const double* zi = z.row(i);
        double zmax = zi[0];
        for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, zi[c]);
        double se = 0.0;
        for (std::size_t c = 0; c < C; ++c) se += std::exp(zi[c] - zmax);
        total += (zmax + std::log(se)) - zi[static_cast<std::size_t>(labels.labels[i])];
    }
    if (m == 0) throw std::invalid_argument("softmax_cross_entropy: empty mask for requested role");
    Mat out(1, 1, total / static_cast<double>(m));
    if (!logits.tape) return Tensor(std::move(out));
    const int iz = logits.node;
    auto zv = logits.val;
    const LabelVector* lp = &labels;
    const SplitMask* mp = &mask;
    return logits.tape->record(std::move(out), [iz, zv, lp, mp, role, n, C, m](Tape& tp, const Mat& up) {
        const double w = up(0, 0) / static_cast<double>(m);
        Mat gz(n, C);
        for (std::size_t i = 0; i < n; ++i) {
            if (mp->roles[i] != role) continue;
            const double* zi = zv->row(i);
            double* gi = gz.row(i);
            double zmax = zi[0];
            for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, zi[c]);
            double se = 0.0;
            for (std::size_t c = 0; c < C; ++c) se += std::exp(zi[c] - zmax);
            for (std::size_t c = 0; c < C; ++c) gi[c] = w * (std::exp(zi[c] - zmax) / se);
            gi[static_cast<std::size_t>(lp->labels[i])] -= w;
        }
        tp.accumulate(iz, std::move(gz));
    });
}

// ---- grad check ---------------------------------------------------------------

double grad_check(const std::function<Tensor(Tape&)>& build_loss, std::span<Parameter* const> params, double eps,
                  std::size_t max_coords_per_param, std::uint64_t seed) {
    for (Parameter* p : params) p->zero_grad();
    std::vector<Mat> analytic;
    {
        Tape t;
        Tensor loss = build_loss(t);
        t.backward(loss);
    }
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape t;
        return build_loss(t).m()(0, 0);
    };

    Rng rng = Rng(seed).fork("grad-check");
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const std::size_t total = p.value.size();
        std::vector<std::size_t> coords;
        if (total <= max_coords_per_param) {
            coords.resize(total);
            for (std::size_t i = 0; i < total; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(static_cast<std::size_t>(rng.uniform_int(total)));
        }
        for (std::size_t idx : coords) {
            const double saved = p.value.a[idx];
            p.value.a[idx] = saved + eps;
            const double fp = eval();
            p.value.a[idx] = saved - eps;
            const double fm = eval();
            p.value.a[idx] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic[pi].a[idx];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

// ---- checkpoint io --------------------------------------------------------------

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    char buf[64];
    for (const Parameter* p : params) {
        f << p->name << ' ' << p->value.rows << ' ' << p->value.cols << '\n';
        for (std::size_t i = 0; i < p->value.rows; ++i) {
            for (std::size_t j = 0; j < p->value.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", p->value(i, j));
                f << (j ? " " : "") << buf;
            }
            f << '\n';
        }
    }
}

void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing or unreadable checkpoint: " + path.string());
    for (Parameter* p : params) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(f >> name >> rows >> cols)) throw std::runtime_error("checkpoint truncated before " + p->name);
        if (name != p->name) throw std::runtime_error("checkpoint parameter order mismatch: expected " + p->name + ", found " + name);
        if (rows != p->value.rows || cols != p->value.cols)
            throw std::runtime_error("checkpoint shape mismatch for " + p->name);
        for (double& v : p->value.a)
            if (!(f >> v)) throw std::runtime_error("checkpoint truncated inside " + p->name);
    }
}

}  // namespace mmgnn
