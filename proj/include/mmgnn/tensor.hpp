#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmgnn/graph.hpp"
#include "mmgnn/mat.hpp"

namespace mmgnn {

/// Thrown when a computation produces non-finite values (training divergence).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Tape;

/// Value handle: a dense matrix plus an optional position on a recording
/// tape. Tensors without a tape entry are constants; ops record a tape node
/// whenever at least one operand carries one. Values are immutable after
/// construction.
struct Tensor {
    std::shared_ptr<const Mat> val;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;
    explicit Tensor(Mat m) : val(std::make_shared<Mat>(std::move(m))) {}
    Tensor(std::shared_ptr<const Mat> v, Tape* t, int n) : val(std::move(v)), tape(t), node(n) {}

    const Mat& m() const { return *val; }
    std::size_t rows() const { return val->rows; }
    std::size_t cols() const { return val->cols; }
    bool on_tape() const { return tape != nullptr; }
};

/// Trainable matrix with its accumulated gradient. Gradients are zeroed at
/// the optimizer step boundary, not by backward().
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;

    Parameter() = default;
    Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
    void zero_grad() { std::fill(grad.a.begin(), grad.a.end(), 0.0); }
};

/// Reverse-mode recording tape. Node order is recording order (already
/// topological); backward() visits nodes in strict reverse recording order
/// exactly once and accumulates leaf gradients into their Parameters.
/// A tape is confined to one thread and one backward pass.
class Tape {
public:
    using PullFn = std::function<void(Tape&, const Mat& upstream)>;

    /// Leaf node aliasing a parameter's current value.
    Tensor watch(Parameter& p);

    /// Records an op output; pull distributes the upstream gradient to parents.
    Tensor record(Mat out, PullFn pull);
    Tensor record(std::shared_ptr<const Mat> out, PullFn pull);

    /// Adds g into the gradient slot of a recorded node (no-op for node < 0).
    void accumulate(int node, const Mat& g);
    void accumulate(int node, Mat&& g);

    /// Seeds d(loss)/d(loss) = 1 and runs the reverse sweep; loss must be a
    /// 1x1 tensor recorded on this tape.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::shared_ptr<const Mat> value;
        Mat grad;  // empty until touched
        PullFn pull;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

// ---- differentiable op set -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor pow_elem(const Tensor& t, int k);

/// Odd, monotone k-th root: sign(x) * ((|x|+eps)^(1/k) - eps^(1/k)).
/// eps > 0 bounds the derivative by (1/k) * eps^(1/k - 1); k == 1 is the
/// identity for every eps.
Tensor signed_root(const Tensor& t, int k, double eps);
double signed_root_scalar(double x, int k, double eps);

Tensor sigmoid(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor sum_all(const Tensor& t);

/// Row i of the result is the mean of h over N(v_i); zero-degree rows are 0.
Tensor spmm_mean(const SparseGraph& g, const Tensor& h);

/// Row i is the neighborhood mean of (h_j - center_i)^k (element-wise);
/// gradient flows into both h and center. Zero-degree rows are 0.
Tensor spmm_centered_pow(const SparseGraph& g, const Tensor& h, const Tensor& center, int k);

/// Mean negative log-likelihood over nodes whose split role matches;
/// row-max-stabilized. Returns a 1x1 tensor.
Tensor softmax_cross_entropy(const Tensor& logits, const LabelVector& labels, const SplitMask& mask, Role role);

// ---- verification harness ---------------------------------------------------

/// Central finite differences vs tape gradients over sampled coordinates.
/// Returns the max relative error |fd - grad| / max(|fd|, |grad|, 1e-8).
double grad_check(const std::function<Tensor(Tape&)>& build_loss, std::span<Parameter* const> params,
                  double eps = 1e-4, std::size_t max_coords_per_param = 64, std::uint64_t seed = 0);

// ---- checkpoint io -----------------------------------------------------------

/// Plain-text checkpoint: per parameter one header line `name rows cols`
/// followed by row-major values at 17 significant digits (round-trip exact).
void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params);
void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace mmgnn
