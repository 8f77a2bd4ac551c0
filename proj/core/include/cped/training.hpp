#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cped/certification.hpp"
#include "cped/mlp.hpp"
#include "cped/sampling.hpp"

namespace cped {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    std::vector<int> hidden_layers{32, 32};
    Activation activation = Activation::Tanh;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int max_epochs_per_stage = 500;
    int batch_size = 256;
    LossWeights loss_weights;
    double loss_tolerance = 1e-4;
    int max_calibration_rounds = 5;
    double kappa_gain = 1.0;
    std::uint64_t rng_seed = 0;
    // Post-training Lipschitz probe used for the safe-set net-condition check.
    double lipschitz_probe_radius = 0.1;
    int lipschitz_probes = 8;

    void validate() const;
};

struct StageResult {
    MarginVector margins;
    std::vector<double> loss_curve;  // full-data loss after each epoch
    int epochs = 0;
    double final_loss = 0.0;
    bool reached_tolerance = false;
};

struct TrainingReport {
    std::string mode;  // "fm" or "cped"
    std::vector<StageResult> stages;
    std::vector<CalibrationReport> calibrations;  // one per round
    MarginVector final_margins;
    bool converged = false;
    int rounds_used = 0;
    NetConditionReport net_condition;
};

/// Observation points for progress output and instrumentation.
struct TrainHooks {
    std::function<void(int stage, int epoch, double loss)> on_epoch;
    // Indices into the training regions (safe, unsafe, derivative) of each minibatch.
    std::function<void(const std::vector<std::size_t>&, const std::vector<std::size_t>&,
                       const std::vector<std::size_t>&)>
        on_batch;
    std::function<void(int round, const CalibrationReport&)> on_calibration;
};

BarrierNet make_barrier_net(int state_dim, const TrainConfig& config);

/// Minibatch descent on total_loss with fixed margins and a fresh optimizer;
/// stops once the full-data loss is <= loss_tolerance or after
/// max_epochs_per_stage epochs. Throws TrainingDiverged on a non-finite loss.
StageResult train_stage(BarrierNet& net, const LabeledDataset& train_data, const SystemModel& model,
                        const MarginVector& margins, const TrainConfig& config, int stage_index = 0,
                        const TrainHooks& hooks = {});

struct TrainOutcome {
    BarrierNet net;
    TrainingReport report;
};

/// Two-stage training with conformal margin calibration: train with zero
/// margins, then repeatedly calibrate on the held-out data, raise every margin
/// whose quantile is positive and retrain, until all quantiles are <= 0 or
/// max_calibration_rounds is spent.
TrainOutcome run_cped(const LabeledDataset& train_data, const LabeledDataset& calib_data, const SystemModel& model,
                      const TrainConfig& train_cfg, const ConformalConfig& conformal_cfg,
                      const TrainHooks& hooks = {});

/// Single-stage training with user-fixed margins (no calibration).
TrainOutcome run_fm_baseline(const LabeledDataset& train_data, const SystemModel& model,
                             const MarginVector& fixed_margins, const TrainConfig& train_cfg,
                             const TrainHooks& hooks = {});

}  // namespace cped
