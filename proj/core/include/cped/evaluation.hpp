#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cped/dynamics.hpp"
#include "cped/mlp.hpp"
#include "cped/random.hpp"
#include "cped/safe_control.hpp"

namespace cped {

struct RolloutConfig {
    int horizon_steps = 1000;
    double dt = 0.01;
    double kappa_gain = 1.0;
};

/// Initial condition and task of rollout `index`.
struct RolloutSpec {
    Vec x0;
    Task task;
};
using TaskSampler = std::function<RolloutSpec(int index, Rng& rng)>;

struct SafetyRateResult {
    int n_rollouts = 0;
    int n_safe = 0;
    int n_infeasible = 0;
    double rate_percent = 0.0;
    double min_constraint_residual = 0.0;  // min over applied controls of <a,u> - b
};

/// Runs n_rollouts rollouts; rollout i draws from its own stream
/// derive_seed(rng_seed, i). Infeasible rollouts count as unsafe.
/// `sink`, when set, receives every trajectory.
SafetyRateResult safety_rate(const SystemModel& model, const BarrierNet& net, const TaskSampler& sampler,
                             int n_rollouts, const RolloutConfig& cfg, std::uint64_t rng_seed,
                             const std::function<void(int, const Trajectory&)>& sink = {});

/// Uniform initial conditions in a box around the start of the goal-reaching
/// task, alternating between the two goal directions.
struct UnicycleRolloutSpec {
    double start_x = 5.0;
    double start_y_spread = 1.0;
    double start_heading_spread = 0.2;
    bool bidirectional = true;
    GoalReachingTask base_task;
};
TaskSampler unicycle_task_sampler(const UnicycleRolloutSpec& spec);

/// Per radius: `rollouts_per_radius` circle-tracking rollouts with evenly
/// spaced phases, starting from the circle centre perturbed by a seeded
/// uniform draw of half-width start_spread.
struct RadiusSweepSpec {
    int rollouts_per_radius = 8;
    double start_spread = 0.05;
    CircleTrackingTask base_task;
};

struct RadiusSweep {
    std::vector<double> radii;
    std::vector<int> violations;  // per radius, unsafe or infeasible rollouts
    int rollouts_per_radius = 0;
    // Largest radius of the all-safe prefix; nullopt when the first radius fails.
    std::optional<double> max_safe_radius;
    double min_constraint_residual = 0.0;
};

RadiusSweep radius_sweep(const SystemModel& model, const BarrierNet& net, const std::vector<double>& radii,
                         const RadiusSweepSpec& spec, const RolloutConfig& cfg, std::uint64_t rng_seed,
                         const std::function<void(double, int, const Trajectory&)>& sink = {});

/// Aggregate of sweeps over training-set sizes (one entry per size).
struct SweepResult {
    std::vector<int> sample_sizes;
    std::vector<RadiusSweep> sweeps;
};

// ---------------------------------------------------------------------------

struct SurfaceGrid {
    double x_lo = -1.0, x_hi = 1.0;
    double y_lo = -1.0, y_hi = 1.0;
    int resolution = 101;
    std::vector<double> theta_slices{0.0};  // third-coordinate values for 3-D states
};

/// Evaluates the barrier on the regular grid and writes `csv_path`
/// (x1,x2,h, plus a theta column for 3-D states) and a JSON sidecar next to
/// it. Returns the CSV path.
std::filesystem::path export_surface(const BarrierNet& net, const SurfaceGrid& grid,
                                     const std::filesystem::path& csv_path);

// ---------------------------------------------------------------------------

/// Metrics of one trained network under one experiment configuration.
struct EvaluationSummary {
    std::string label;        // "fm", "cped", ...
    std::string config_key;   // identifies the experiment; must match to compare
    std::vector<std::uint64_t> seeds;
    std::optional<SafetyRateResult> safety;
    std::optional<RadiusSweep> sweep;
};

struct ComparisonCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ComparisonReport {
    std::string markdown;
    std::string json;
    std::vector<ComparisonCheck> checks;
};

/// Table-style comparison; the checks are CPED >= FM on the safe radius and
/// CPED >= FM + 3 points with CPED >= 95 % on the safety rate, where the
/// metrics exist. Throws InvalidComparison on mismatched configs.
ComparisonReport compare_report(const EvaluationSummary& fm, const EvaluationSummary& cped);

/// Writes <stem>.md and <stem>.json; returns the JSON path.
std::filesystem::path write_compare_report(const ComparisonReport& report, const std::filesystem::path& stem);

}  // namespace cped
