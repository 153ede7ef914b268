#pragma once

#include <cstdint>
#include <vector>

#include "mmgnn/model.hpp"

namespace mmgnn {

struct TrainConfig {
    double learning_rate = 1e-2;
    double weight_decay = 5e-4;
    int max_epochs = 200;
    int patience = 50;
    std::uint64_t seed = 0;
    int repeats = 1;

    void validate() const;  // search-space bounds from the experimental protocol
};

struct EpochRecord {
    int epoch;
    double train_loss, train_acc;
    double val_loss, val_acc;
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;
    int best_epoch = 0;
};

/// First/second moment estimates per parameter plus the shared step count.
struct AdamState {
    std::vector<Mat> m, v;
    long step = 0;

    static AdamState like(std::span<Parameter* const> params);
};

/// Classic Adam with L2 coupled into the gradient (wd * theta added before
/// the moment updates). Zeroes parameter gradients afterwards.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double wd, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Accuracy of argmax predictions (ties broken toward the lowest class
/// index) over nodes with the given role.
double accuracy(const Mat& logits, const LabelVector& labels, const SplitMask& mask, Role role);

struct TrainResult {
    RunMetrics metrics;
    ModelParams params;  // best-validation-epoch parameters
};

/// Full optimization loop: Adam, early stopping on validation accuracy,
/// best-epoch restore before test evaluation. Deterministic under fixed
/// seeds. Throws NumericError if the loss leaves the reals.
TrainResult train(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds);

/// Forward + accuracy for the given role with fixed parameters.
double evaluate(const ModelConfig& mc, ModelParams& params, const Dataset& ds, Role role);

struct RepeatSummary {
    std::vector<RunMetrics> runs;  // seed base + i at index i
    double mean_test_acc = 0.0;
    double std_test_acc = 0.0;  // unbiased
};

/// Runs n trainings with seeds base+0..n-1 (both model and train seeds).
/// fan_out > 1 executes runs on worker threads; results are merged by run
/// index, so they are identical to serial execution.
RepeatSummary repeat_runs(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds, int n, int fan_out = 1);

}  // namespace mmgnn
