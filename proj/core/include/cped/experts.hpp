#pragma once

#include <cstdint>

#include "cped/safe_control.hpp"
#include "cped/sampling.hpp"

namespace cped {

/// Scripted demonstrators: a reference controller filtered by a CBF-QP on
/// the analytic safety function, shifted inward by `margin` so that
/// demonstrations keep their distance from the boundary of S.
struct ExpertConfig {
    double kappa_gain = 1.0;
    double margin = 0.3;
};

/// Circle tracking filtered by the two wall constraints 1 - margin - x_i >= 0
/// (orthogonal normals, so sequential projection is the exact QP solution).
ExpertPolicy point_mass_expert(const PointMassParams& params, const CircleTrackingTask& task,
                               const ExpertConfig& config);

/// Goal reaching filtered by h_expert_unicycle - margin >= 0; nullopt where
/// the filter is infeasible.
ExpertPolicy unicycle_expert(const UnicycleParams& params, const GoalReachingTask& task,
                             const ExpertConfig& config);

struct PointMassEpisodeSpec {
    double radius_min = 0.1;
    double radius_max = 3.1;
    double start_spread = 0.1;  // x0 uniform in a box of this half-width around the circle centre
    CircleTrackingTask base_task;
};

struct UnicycleEpisodeSpec {
    double start_x = 5.0;        // episodes start at (-start_x, y0, 0) or mirrored (start_x, y0, pi)
    double lead_in = 0.0;        // extra distance behind the start line; the goal stays at +-start_x
    double start_y_spread = 1.0;
    double start_heading_spread = 0.2;
    bool bidirectional = true;
    GoalReachingTask base_task;
};

/// Start state and task of episode `index` (alternating directions for the
/// unicycle when bidirectional).
struct UnicycleEpisode {
    Vec x0;
    GoalReachingTask task;
};
UnicycleEpisode sample_unicycle_episode(const UnicycleEpisodeSpec& spec, int index, Rng& rng);

struct PointMassEpisode {
    Vec x0;
    CircleTrackingTask task;
};
PointMassEpisode sample_point_mass_episode(const PointMassEpisodeSpec& spec, Rng& rng);

EpisodeSampler point_mass_episode_sampler(const PointMassParams& params, const PointMassEpisodeSpec& spec,
                                          const ExpertConfig& config);
EpisodeSampler unicycle_episode_sampler(const UnicycleParams& params, const UnicycleEpisodeSpec& spec,
                                        const ExpertConfig& config);

}  // namespace cped
