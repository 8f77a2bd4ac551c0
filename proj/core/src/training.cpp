#include "cped/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "cped/errors.hpp"
#include "cped/random.hpp"

namespace cped {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0))
        throw ConfigError("train.learning_rate", "must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("train.momentum", "must lie in [0, 1)");
    if (max_epochs_per_stage <= 0)
        throw ConfigError("train.max_epochs_per_stage", "must be > 0");
    if (batch_size <= 0)
        throw ConfigError("train.batch_size", "must be > 0");
    if (!(loss_weights.safe > 0.0 && loss_weights.unsafe > 0.0 && loss_weights.deriv > 0.0))
        throw ConfigError("train.loss_weights", "must be > 0");
    if (!(loss_tolerance >= 0.0))
        throw ConfigError("train.loss_tolerance", "must be >= 0");
    if (max_calibration_rounds < 0)
        throw ConfigError("train.max_calibration_rounds", "must be >= 0");
    if (!(kappa_gain > 0.0))
        throw ConfigError("train.kappa_gain", "must be > 0");
    for (int h : hidden_layers)
        if (h <= 0)
            throw ConfigError("train.hidden_layers", "sizes must be > 0");
}

BarrierNet make_barrier_net(int state_dim, const TrainConfig& config)
{
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), config.hidden_layers.begin(), config.hidden_layers.end());
    sizes.push_back(1);
    return BarrierNet::initialized(sizes, config.activation, derive_seed(config.rng_seed, 7001));
}

namespace {

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config)
{
    if (config.optimizer == OptimizerKind::Adam)
        return std::make_unique<Adam>(config.learning_rate);
    return std::make_unique<SgdMomentum>(config.learning_rate, config.momentum);
}

std::vector<std::size_t> iota_vec(std::size_t n)
{
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.index(i)]);
}

std::vector<std::size_t> chunk(const std::vector<std::size_t>& v, std::size_t b, std::size_t n_batches)
{
    const std::size_t lo = b * v.size() / n_batches;
    const std::size_t hi = (b + 1) * v.size() / n_batches;
    return {v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi)};
}

}  // namespace

StageResult train_stage(BarrierNet& net, const LabeledDataset& train_data, const SystemModel& model,
                        const MarginVector& margins, const TrainConfig& config, int stage_index,
                        const TrainHooks& hooks)
{
    config.validate();
    const PreparedData data = prepare(model, train_data);
    if (data.safe.empty() || data.unsafe.empty() || data.deriv.empty())
        throw InvalidInput("train_stage: every training region needs at least one point");

    std::vector<std::size_t> safe_all = iota_vec(data.safe.size());
    std::vector<std::size_t> unsafe_all = iota_vec(data.unsafe.size());
    std::vector<std::size_t> deriv_all = iota_vec(data.deriv.size());
    const std::size_t total = safe_all.size() + unsafe_all.size() + deriv_all.size();
    const std::size_t n_batches =
        std::max<std::size_t>(1, (total + static_cast<std::size_t>(config.batch_size) - 1) / config.batch_size);

    std::unique_ptr<Optimizer> optimizer = make_optimizer(config);
    Rng rng(derive_seed(config.rng_seed, 9000 + static_cast<std::uint64_t>(stage_index)));

    StageResult result;
    result.margins = margins;
    std::vector<std::size_t> safe_perm = safe_all, unsafe_perm = unsafe_all, deriv_perm = deriv_all;
    for (int epoch = 1; epoch <= config.max_epochs_per_stage; ++epoch) {
        shuffle(safe_perm, rng);
        shuffle(unsafe_perm, rng);
        shuffle(deriv_perm, rng);
        for (std::size_t b = 0; b < n_batches; ++b) {
            const auto s = chunk(safe_perm, b, n_batches);
            const auto u = chunk(unsafe_perm, b, n_batches);
            const auto d = chunk(deriv_perm, b, n_batches);
            if (hooks.on_batch)
                hooks.on_batch(s, u, d);
            LossResult batch = batch_loss(net, data, s, u, d, margins, config.loss_weights, config.kappa_gain, true);
            if (!std::isfinite(batch.total))
                throw TrainingDiverged("train_stage: non-finite minibatch loss at epoch " + std::to_string(epoch));
            optimizer->step(net, batch.grads);
        }
        const LossResult full = batch_loss(net, data, safe_all, unsafe_all, deriv_all, margins,
                                           config.loss_weights, config.kappa_gain, false);
        if (!std::isfinite(full.total))
            throw TrainingDiverged("train_stage: non-finite loss at epoch " + std::to_string(epoch));
        result.loss_curve.push_back(full.total);
        result.epochs = epoch;
        result.final_loss = full.total;
        if (hooks.on_epoch)
            hooks.on_epoch(stage_index, epoch, full.total);
        if (full.total <= config.loss_tolerance) {
            result.reached_tolerance = true;
            break;
        }
    }
    return result;
}

namespace {

NetConditionReport net_condition(const BarrierNet& net, const LabeledDataset& train, const MarginVector& margins,
                                 const TrainConfig& config)
{
    const double L = estimate_lipschitz(net, train.safe_points, config.lipschitz_probe_radius,
                                        config.lipschitz_probes, derive_seed(config.rng_seed, 31337));
    return check_net_condition(train.safe_points, L, margins.gamma_s, 2.0);
}

}  // namespace

TrainOutcome run_fm_baseline(const LabeledDataset& train_data, const SystemModel& model,
                             const MarginVector& fixed_margins, const TrainConfig& train_cfg, const TrainHooks& hooks)
{
    TrainOutcome out{make_barrier_net(model.state_dim, train_cfg), {}};
    out.report.mode = "fm";
    out.report.stages.push_back(train_stage(out.net, train_data, model, fixed_margins, train_cfg, 0, hooks));
    out.report.final_margins = fixed_margins;
    out.report.converged = out.report.stages.back().reached_tolerance;
    out.report.net_condition = net_condition(out.net, train_data, fixed_margins, train_cfg);
    return out;
}

TrainOutcome run_cped(const LabeledDataset& train_data, const LabeledDataset& calib_data, const SystemModel& model,
                      const TrainConfig& train_cfg, const ConformalConfig& conformal_cfg, const TrainHooks& hooks)
{
    conformal_cfg.validate();
    TrainOutcome out{make_barrier_net(model.state_dim, train_cfg), {}};
    TrainingReport& report = out.report;
    report.mode = "cped";

    MarginVector margins;  // stage 1: all zero
    report.stages.push_back(train_stage(out.net, train_data, model, margins, train_cfg, 0, hooks));

    for (int round = 1; round <= train_cfg.max_calibration_rounds; ++round) {
        CalibrationReport cal = calibrate(out.net, calib_data, model, train_cfg.kappa_gain, conformal_cfg);
        report.calibrations.push_back(cal);
        report.rounds_used = round;
        if (hooks.on_calibration)
            hooks.on_calibration(round, cal);
        if (cal.all_nonpositive()) {
            report.converged = true;
            break;
        }
        // Only violated constraints move, and a margin never shrinks.
        for (int k = 0; k < 3; ++k)
            if (cal.q_hat[k] > 0.0)
                margins[k] = std::max(margins[k], cal.q_hat[k]);
        report.stages.push_back(train_stage(out.net, train_data, model, margins, train_cfg, round, hooks));
    }
    report.final_margins = margins;
    report.net_condition = net_condition(out.net, train_data, margins, train_cfg);
    return out;
}

}  // namespace cped
