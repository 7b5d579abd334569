#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cellspan/attention.hpp"
#include "cellspan/parallel.hpp"

namespace cellspan {

struct TrainConfig {
    int stage1_epochs = 800;    // coarse stage, parameter loss
    double stage1_lr = 1e-3;
    int stage2_epochs = 3000;   // fine-tuning stage, cycle-life loss
    double stage2_lr = 5e-5;
    double w_a = 1.0;           // parameter-loss weights
    double w_b = 1.0;
    std::uint64_t rng_seed = 0;
    double threshold = 0.2;
};

enum class LossKind { param_loss, cycle_life_loss };

struct LossValue {
    LossKind kind = LossKind::param_loss;
    double value = 0.0;
};

// One training example: standardized inputs, fitted curve parameters as
// targets, and the quantities cycle-life loss needs.
struct TrainSample {
    std::string cell_id;
    std::vector<double> z;
    double a_target = 0.0;
    double b_target = 0.0;
    double c = 0.0;
    double life_true = 0.0;
};

struct HistoryRow {
    int stage = 0;
    int epoch = 0;  // 0 = before the stage's first update
    double param_loss = 0.0;
    double cycle_life_loss = 0.0;
};

// RMSE over cells of w_a (A - A_hat)^2 + w_b (B - B_hat)^2.
LossValue param_loss(const std::vector<std::array<double, 2>>& preds,
                     const std::vector<std::array<double, 2>>& targets,
                     double w_a, double w_b);

// RMSE between inverted predicted lives and true lives. Throws
// NumericError naming the cell index on invalid B_hat or C >= threshold.
LossValue cycle_life_loss(const std::vector<std::array<double, 2>>& preds,
                          const std::vector<double>& c_list,
                          const std::vector<double>& true_lives, double threshold);

// Train-target statistics backing the output calibration: mean/sd of the
// fitted A values and of softplus-inverted fitted B values.
OutputCalibration fit_calibration(const std::vector<TrainSample>& samples);

struct TrainResult {
    AttentionModel model;
    OutputCalibration calib;
    std::vector<HistoryRow> history;  // per stage: epochs+1 rows, 0..epochs
};

// Two-stage full-batch training with Adam (beta1 0.9, beta2 0.999,
// eps 1e-8). Stage 1 minimizes the parameter loss, stage 2 fine-tunes on
// cycle-life loss from the stage-1 weights. Per-example gradients may be
// computed in parallel; the reduction order is fixed, so results are
// bit-identical for any thread count. Divergence raises NumericError with
// the stage and epoch.
TrainResult train_two_stage(AttentionModel model, OutputCalibration calib,
                            const std::vector<TrainSample>& train,
                            const TrainConfig& cfg, Exec exec = Exec::parallel);

} // namespace cellspan
