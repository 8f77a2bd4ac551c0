#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cped/certification.hpp"
#include "cped/dynamics.hpp"
#include "cped/evaluation.hpp"
#include "cped/experts.hpp"
#include "cped/sampling.hpp"
#include "cped/training.hpp"

namespace cped {

struct ExpertGenConfig {
    int n_trajectories = 30;
    int horizon_steps = 700;
    double dt = 0.01;
    int record_stride = 5;
    ExpertConfig expert;
    PointMassEpisodeSpec point_mass;
    UnicycleEpisodeSpec unicycle;
};

struct SamplingConfig {
    RegionSpec regions;
    RegionQuotas quotas{150, 150, 150, 50};
    double radius_max = 4.0;
    // Range of the third state coordinate for global candidates; when unset
    // it is the range seen in the demonstrations, padded by 0.5.
    std::optional<std::array<double, 2>> third_range;
    double global_fraction = 0.25;
    int max_attempts_per_point = 2000;
    double buffer_speed = 1.0;
    double calib_fraction = 0.2;
};

struct EvaluationConfig {
    RolloutConfig rollout;
    // point mass: radius sweep
    std::vector<double> radii;
    RadiusSweepSpec sweep;
    // unicycle: safety rate
    int n_rollouts = 100;
    UnicycleRolloutSpec unicycle;
    int saved_trajectories = 4;  // per net and protocol
    std::optional<SurfaceGrid> surface;
};

struct RunConfig {
    SystemKind system = SystemKind::PointMass;
    PointMassParams point_mass;
    UnicycleParams unicycle;
    std::uint64_t seed = 1;
    ExpertGenConfig experts;
    SamplingConfig sampling;
    TrainConfig train;
    MarginVector fm_margins;
    ConformalConfig conformal;
    EvaluationConfig evaluation;
    std::string output_dir = "runs";

    /// Throws ConfigError naming the offending field.
    void validate() const;
    SystemModel model() const;
};

/// Defaults for the two benchmark systems.
RunConfig default_run_config(SystemKind system);

/// Parses a JSON document over the defaults of its "system.kind". Unknown
/// keys and ill-typed values throw ConfigError naming the field.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON form (every field, fixed key order).
std::string run_config_json(const RunConfig& config);

/// 16 hex digits of the FNV-1a hash of the canonical JSON, excluding the
/// output directory.
std::string run_id(const RunConfig& config);

/// Stream-specific seeds derived from the master seed.
namespace seed_stream {
inline constexpr std::uint64_t experts = 1;
inline constexpr std::uint64_t sampling = 2;
inline constexpr std::uint64_t split = 3;
inline constexpr std::uint64_t training = 4;
inline constexpr std::uint64_t evaluation = 5;
}  // namespace seed_stream

}  // namespace cped
