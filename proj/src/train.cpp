#include "mmgnn/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace mmgnn {

void TrainConfig::validate() const {
    if (learning_rate < 1e-4 || learning_rate > 1e-1)
        throw std::invalid_argument("train config: learning_rate outside [1e-4, 1e-1]");
    if (weight_decay < 1e-4 || weight_decay > 1e-2)
        throw std::invalid_argument("train config: weight_decay outside [1e-4, 1e-2]");
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs)
        throw std::invalid_argument("train config: patience must be in [1, max_epochs]");
    if (repeats < 1) throw std::invalid_argument("train config: repeats must be >= 1");
}

AdamState AdamState::like(std::span<Parameter* const> params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Parameter* p : params) {
        s.m.emplace_back(p->value.rows, p->value.cols);
        s.v.emplace_back(p->value.rows, p->value.cols);
    }
    return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double wd, double beta1,
               double beta2, double eps) {
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state/param count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        Mat& m = state.m[pi];
        Mat& v = state.v[pi];
        if (!m.same_shape(p.value)) throw std::invalid_argument("adam_step: state shape mismatch for " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.a[i] + wd * p.value.a[i];
            m.a[i] = beta1 * m.a[i] + (1.0 - beta1) * g;
            v.a[i] = beta2 * v.a[i] + (1.0 - beta2) * g * g;
            const double mhat = m.a[i] / bc1;
            const double vhat = v.a[i] / bc2;
            p.value.a[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        p.zero_grad();
    }
}

double accuracy(const Mat& logits, const LabelVector& labels, const SplitMask& mask, Role role) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        if (mask.roles[i] != role) continue;
        ++total;
        const double* zi = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (zi[c] > zi[best]) best = c;  // strict > keeps the lowest index on ties
        if (static_cast<NodeId>(best) == labels.labels[i]) ++hit;
    }
    if (total == 0) throw std::invalid_argument("accuracy: no nodes with requested role");
    return static_cast<double>(hit) / static_cast<double>(total);
}

namespace {

double masked_loss_value(const Mat& logits, const LabelVector& labels, const SplitMask& mask, Role role) {
    Tensor z{std::shared_ptr<const Mat>(&logits, [](const Mat*) {}), nullptr, -1};
    return softmax_cross_entropy(z, labels, mask, role).m()(0, 0);
}

std::vector<Mat> snapshot_values(std::span<Parameter* const> params) {
    std::vector<Mat> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back(p->value);
    return out;
}

void restore_values(std::span<Parameter* const> params, const std::vector<Mat>& vals) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = vals[i];
}

}  // namespace

TrainResult train(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds) {
    mc.validate();
    tc.validate();
    if (!ds.split) throw std::invalid_argument("train: dataset has no split");
    ds.split->validate();

    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();

    result.params = init_model_params(mc, ds.input_dim(), ds.labels.num_classes, Rng(mc.seed));
    std::vector<Parameter*> params = result.params.all();
    for (Parameter* p : params) p->zero_grad();
    AdamState adam = AdamState::like(params);

    const Tensor x(ds.features.values);
    double best_val = -1.0;
    std::vector<Mat> best_values;

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        Tape tape;
        Tensor logits = model_forward(ds.graph, x, result.params, mc, &tape);
        Tensor loss = softmax_cross_entropy(logits, ds.labels, *ds.split, Role::Train);
        const double train_loss = loss.m()(0, 0);
        if (!std::isfinite(train_loss))
            throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        rec.train_acc = accuracy(logits.m(), ds.labels, *ds.split, Role::Train);
        rec.val_loss = masked_loss_value(logits.m(), ds.labels, *ds.split, Role::Val);
        rec.val_acc = accuracy(logits.m(), ds.labels, *ds.split, Role::Val);
        result.metrics.epochs.push_back(rec);

        if (rec.val_acc > best_val) {
            best_val = rec.val_acc;
            result.metrics.best_epoch = epoch;
            best_values = snapshot_values(params);
        }
        if (epoch - result.metrics.best_epoch >= tc.patience) break;

        tape.backward(loss);
        adam_step(params, adam, tc.learning_rate, tc.weight_decay);
    }

    restore_values(params, best_values);
    result.metrics.test_accuracy = evaluate(mc, result.params, ds, Role::Test);
    result.metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

double evaluate(const ModelConfig& mc, ModelParams& params, const Dataset& ds, Role role) {
    if (!ds.split) throw std::invalid_argument("evaluate: dataset has no split");
    const Tensor x(ds.features.values);
    Tensor logits = model_forward(ds.graph, x, params, mc, nullptr);
    return accuracy(logits.m(), ds.labels, *ds.split, role);
}

RepeatSummary repeat_runs(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds, int n, int fan_out) {
    if (n < 1) throw std::invalid_argument("repeat_runs: n must be >= 1");
    RepeatSummary summary;
    summary.runs.resize(static_cast<std::size_t>(n));

    auto run_one = [&](int i) {
        ModelConfig mci = mc;
        TrainConfig tci = tc;
        mci.seed = mc.seed + static_cast<std::uint64_t>(i);
        tci.seed = tc.seed + static_cast<std::uint64_t>(i);
        summary.runs[static_cast<std::size_t>(i)] = train(mci, tci, ds).metrics;
    };

    if (fan_out <= 1) {
        for (int i = 0; i < n; ++i) run_one(i);
    } else {
        for (int base = 0; base < n; base += fan_out) {
            std::vector<std::thread> pool;
            for (int i = base; i < std::min(n, base + fan_out); ++i) pool.emplace_back(run_one, i);
            for (auto& th : pool) th.join();
        }
    }

    double sum = 0.0;
    for (const RunMetrics& r : summary.runs) sum += r.test_accuracy;
    summary.mean_test_acc = sum / n;
    if (n > 1) {
        double ss = 0.0;
        for (const RunMetrics& r : summary.runs) {
            const double d = r.test_accuracy - summary.mean_test_acc;
            ss += d * d;
        }
        summary.std_test_acc = std::sqrt(ss / (n - 1));
    }
    return summary;
}

}  // namespace mmgnn
