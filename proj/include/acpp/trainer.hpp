#pragma once

#include <string>
#include <vector>

#include "acpp/dataset.hpp"
#include "acpp/losses.hpp"
#include "acpp/model.hpp"

namespace acpp {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.0;  // first-moment smoothing off: the update direction is the raw gradient
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

void validate(const AdamConfig& cfg);

struct AdamState {
    AdamConfig cfg;
    uint64_t t = 0;                        // completed steps
    std::vector<std::vector<float>> m, v;  // parallel to params.tensors
};

AdamState make_adam_state(const ModelParams<float>& params, const AdamConfig& cfg);

// One bias-corrected Adam update from the gradients accumulated in
// params.tensors[*].grad. Non-finite gradients abort, naming the parameter.
void adam_step(ModelParams<float>& params, AdamState& state);

struct TrainConfig {
    uint64_t total_iterations = 2000;
    uint64_t phase_switch_iteration = 10000;  // first iteration of the combined phase
    uint64_t validation_interval = 500;       // 0: validate only at the end
    std::string checkpoint_dir;               // empty: no checkpoints written
    bool ensemble_validation = false;
    AdamConfig adam;
    LossConfig loss;
};

void validate(const TrainConfig& cfg);

struct HistoryRow {
    uint64_t iteration = 0;
    LossPhase phase = LossPhase::mae_only;
    double loss = 0;
    double mae = 0;
    double msssim = 0;  // meaningful only in the combined phase
    bool has_validation = false;
    double val_psnr = 0;
    double val_msssim = 0;
};

// CSV: iteration,phase,loss,val_psnr,val_msssim with blank validation fields
// on non-validation rows.
void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

struct TrainResult {
    std::vector<HistoryRow> history;
};

// Two-phase training loop: pixel loss until phase_switch_iteration, combined
// loss after. Deterministic given (params, provider, validation, config).
// Checkpoints land in checkpoint_dir at each validation and at completion
// (final.ckpt); a non-finite loss saves diagnostic.ckpt and throws.
TrainResult train(ModelParams<float>& params, const BatchProvider& provider,
                  const std::vector<TrainingPair>& validation, const TrainConfig& cfg);

struct EvalRow {
    std::string name;  // image label, or "mean" for the trailing summary row
    double bpp = 0;
    double base_psnr = 0;  // degraded vs ground truth
    double base_msssim = 0;
    double post_psnr = 0;  // restored vs ground truth
    double post_msssim = 0;
};

// Scores each pair before and after restoration. bpps may be empty (reported
// as 0). With quantize set, restored outputs are rounded to the 8-bit grid
// first, matching what saving them to disk would score.
std::vector<EvalRow> evaluate(ModelParams<float>& params, const std::vector<TrainingPair>& pairs,
                              const std::vector<std::string>& names,
                              const std::vector<double>& bpps, const LossConfig& loss,
                              bool ensemble, bool quantize);

}  // namespace acpp
