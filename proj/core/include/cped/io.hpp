#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "cped/certification.hpp"
#include "cped/mlp.hpp"
#include "cped/safe_control.hpp"
#include "cped/sampling.hpp"
#include "cped/training.hpp"

namespace cped::io {

namespace fs = std::filesystem;

/// Shortest decimal form that round-trips a double.
std::string format_double(double v);

// Dataset CSV: region,x0..x{n-1},u0..u{m-1}. Safe and unsafe rows leave the
// control columns empty. Rows are written safe, unsafe, expert, buffer.
void write_dataset_csv(const fs::path& path, const LabeledDataset& data, int state_dim, int control_dim);
LabeledDataset read_dataset_csv(const fs::path& path);

struct SplitManifest {
    double calib_fraction = 0.0;
    std::uint64_t seed = 0;
    std::array<std::vector<std::size_t>, 4> calib_indices;  // safe, unsafe, expert, buffer
};
void write_split_manifest(const fs::path& path, const SplitManifest& manifest);
SplitManifest read_split_manifest(const fs::path& path);

// Network checkpoint: versioned JSON, parameters flattened per layer
// (weights column-major, then biases).
std::string checkpoint_json(const BarrierNet& net);
void save_checkpoint(const fs::path& path, const BarrierNet& net);
BarrierNet load_checkpoint(const fs::path& path);
BarrierNet parse_checkpoint(const std::string& text);

std::string calibration_json(const CalibrationReport& report, bool with_timestamp);
void write_calibration_report(const fs::path& path, const CalibrationReport& report, bool with_timestamp = true);

std::string training_report_json(const TrainingReport& report);
void write_training_report(const fs::path& path, const TrainingReport& report);

/// Columns t, x0.., u0.., filter_active, h_value; the final state carries
/// empty control/filter/h cells. With `rollout_id` >= 0 a leading rollout
/// column is emitted.
void write_trajectory_csv(const fs::path& path, const Trajectory& traj, int control_dim, int rollout_id = -1);
void append_trajectory_rows(std::ostream& out, const Trajectory& traj, int control_dim, int rollout_id);
std::string trajectory_csv_header(int state_dim, int control_dim, bool with_rollout_id);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace cped::io
