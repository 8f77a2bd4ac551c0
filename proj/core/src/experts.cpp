#include "cped/experts.hpp"

#include <cmath>

#include "cped/errors.hpp"

namespace cped {

ExpertPolicy point_mass_expert(const PointMassParams& params, const CircleTrackingTask& task,
                               const ExpertConfig& config)
{
    const SystemModel model = make_point_mass(params);
    return [model, task, config](const Vec& x, double t) -> std::optional<Vec> {
        Vec u = reference_controller(model, task, x, t);
        const Mat g = model.actuation(x);
        const Vec f = model.drift(x);
        for (int i = 0; i < 2; ++i) {
            // h_i = 1 - margin - x_i, grad h_i = -e_i
            const double h = 1.0 - config.margin - x[i];
            Vec a = -g.row(i).transpose();
            const double b = f[i] - config.kappa_gain * h;
            u = project_halfspace(a, b, u).u;
        }
        return u;
    };
}

ExpertPolicy unicycle_expert(const UnicycleParams& params, const GoalReachingTask& task,
                             const ExpertConfig& config)
{
    const SystemModel model = make_unicycle(params);
    return [model, params, task, config](const Vec& x, double t) -> std::optional<Vec> {
        const Vec u_ref = reference_controller(model, task, x, t);
        const double h = h_expert_unicycle(x, params) - config.margin;
        try {
            return qp_filter(h, h_expert_unicycle_gradient(x, params), model, x, u_ref, config.kappa_gain).u;
        } catch (const QpInfeasible&) {
            return std::nullopt;
        }
    };
}

PointMassEpisode sample_point_mass_episode(const PointMassEpisodeSpec& spec, Rng& rng)
{
    PointMassEpisode ep;
    ep.task = spec.base_task;
    ep.task.radius = rng.uniform(spec.radius_min, spec.radius_max);
    ep.task.phase = rng.uniform(-M_PI, M_PI);
    ep.x0 = spec.base_task.center;
    ep.x0[0] += rng.uniform(-spec.start_spread, spec.start_spread);
    ep.x0[1] += rng.uniform(-spec.start_spread, spec.start_spread);
    return ep;
}

UnicycleEpisode sample_unicycle_episode(const UnicycleEpisodeSpec& spec, int index, Rng& rng)
{
    UnicycleEpisode ep;
    ep.task = spec.base_task;
    const bool mirrored = spec.bidirectional && (index % 2 == 1);
    const double y0 = rng.uniform(-spec.start_y_spread, spec.start_y_spread);
    const double th0 = rng.uniform(-spec.start_heading_spread, spec.start_heading_spread);
    ep.x0 = Vec(3);
    if (!mirrored) {
        ep.x0 << -spec.start_x - spec.lead_in, y0, th0;
        ep.task.goal = Vec(2);
        ep.task.goal << spec.start_x, 0.0;
        ep.task.goal_heading = M_PI;
    } else {
        ep.x0 << spec.start_x + spec.lead_in, y0, M_PI + th0;
        ep.task.goal = Vec(2);
        ep.task.goal << -spec.start_x, 0.0;
        ep.task.goal_heading = -M_PI;
    }
    return ep;
}

EpisodeSampler point_mass_episode_sampler(const PointMassParams& params, const PointMassEpisodeSpec& spec,
                                          const ExpertConfig& config)
{
    return [params, spec, config](int, Rng& rng) {
        PointMassEpisode ep = sample_point_mass_episode(spec, rng);
        return ExpertEpisode{ep.x0, point_mass_expert(params, ep.task, config)};
    };
}

EpisodeSampler unicycle_episode_sampler(const UnicycleParams& params, const UnicycleEpisodeSpec& spec,
                                        const ExpertConfig& config)
{
    return [params, spec, config](int index, Rng& rng) {
        UnicycleEpisode ep = sample_unicycle_episode(spec, index, rng);
        return ExpertEpisode{ep.x0, unicycle_expert(params, ep.task, config)};
    };
}

}  // namespace cped
