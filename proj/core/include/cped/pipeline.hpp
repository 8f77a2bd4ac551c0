#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cped/config.hpp"
#include "cped/evaluation.hpp"
#include "cped/sampling.hpp"
#include "cped/training.hpp"

namespace cped {

namespace fs = std::filesystem;

enum class TrainMode { Fm, Cped };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

/// Layout of runs/<run-id>/.
struct RunPaths {
    fs::path root;

    fs::path config() const { return root / "config.json"; }
    fs::path dataset() const { return root / "dataset.csv"; }
    fs::path split() const { return root / "split.json"; }
    fs::path checkpoint(TrainMode m) const { return root / ("checkpoint_" + to_string(m) + ".json"); }
    fs::path training_report(TrainMode m) const { return root / ("training_" + to_string(m) + ".json"); }
    fs::path calibration() const { return root / "calibration.json"; }
    fs::path recalibration(TrainMode m) const { return root / ("calibration_" + to_string(m) + ".json"); }
    fs::path rollout_summary(TrainMode m) const { return root / ("rollout_" + to_string(m) + ".json"); }
    fs::path trajectories() const { return root / "trajectories"; }
    fs::path surface(TrainMode m) const { return root / ("surface_" + to_string(m) + ".csv"); }
    fs::path report_stem() const { return root / "report"; }
};

RunPaths run_paths(const RunConfig& config);

// ---------------------------------------------------------------------------
// In-memory stages

struct GeneratedData {
    ExpertData experts;
    LabeledDataset dataset;
    DatasetSplit split;
};

/// Demonstrations, radial sampling and the calibration split, each on its own
/// stream of the master seed.
GeneratedData generate_data(const RunConfig& config);

/// The sampling domain used by generate_data (the third-coordinate range
/// falls back to the demonstrated range when not configured).
SamplingDomain sampling_domain(const RunConfig& config, const std::vector<ExpertRecord>& records);

TrainOutcome train_model(const RunConfig& config, const DatasetSplit& split, TrainMode mode,
                         const TrainHooks& hooks = {});

using TrajectorySink = std::function<void(int rollout, const Trajectory&)>;

/// Radius sweep for the point mass, safety rate for the unicycle.
/// `sink` sees every rollout, numbered in execution order.
EvaluationSummary evaluate_net(const RunConfig& config, const BarrierNet& net, const std::string& label,
                               const TrajectorySink& sink = {});

// ---------------------------------------------------------------------------
// Subcommands. Each reads its inputs from and writes its outputs to the run
// directory, and refreshes report.json so every file there is listed.

fs::path cmd_generate(const RunConfig& config);

struct TrainCommandResult {
    fs::path checkpoint;
    bool converged = false;
};
TrainCommandResult cmd_train(const RunConfig& config, TrainMode mode);

/// Recalibrates a stored checkpoint on the calibration split.
fs::path cmd_calibrate(const RunConfig& config, TrainMode mode);

/// Runs the evaluation rollouts of one checkpoint and stores the first
/// `saved_trajectories` of them plus a JSON summary.
fs::path cmd_rollout(const RunConfig& config, TrainMode mode);

fs::path cmd_export_surface(const RunConfig& config, TrainMode mode);

/// Evaluates every checkpoint present, exports surfaces when a grid is
/// configured, and writes report.md / report.json (with the comparison when
/// both checkpoints exist).
fs::path cmd_evaluate(const RunConfig& config);

/// generate, train fm, train cped, evaluate.
fs::path run_pipeline(const RunConfig& config);

/// Rewrites report.json's artifact list from the run directory contents.
void refresh_report_index(const RunPaths& paths);

}  // namespace cped
