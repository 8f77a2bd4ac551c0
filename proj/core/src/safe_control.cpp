#include "cped/safe_control.hpp"

#include <cmath>

#include "cped/errors.hpp"

namespace cped {

HalfspaceProjection project_halfspace(const Vec& a, double b, const Vec& u_ref)
{
    if (a.size() != u_ref.size())
        throw ShapeError("project_halfspace: dimension mismatch");
    const double lhs = a.dot(u_ref);
    if (lhs >= b)
        return {u_ref, false};
    const double a2 = a.squaredNorm();
    if (a2 == 0.0)
        throw QpInfeasible({}, b - lhs, "CBF-QP infeasible: zero control coefficient with violated constraint");
    return {u_ref + ((b - lhs) / a2) * a, true};
}

FilterResult qp_filter(double h, const Vec& grad_h, const SystemModel& model, const Vec& x, const Vec& u_ref,
                       double kappa_gain)
{
    if (!all_finite(x) || !all_finite(u_ref))
        throw InvalidInput("qp_filter: non-finite input");
    FilterResult r;
    r.h = h;
    r.a = model.actuation(x).transpose() * grad_h;
    r.b = -grad_h.dot(model.drift(x)) - kappa_gain * h;
    try {
        HalfspaceProjection p = project_halfspace(r.a, r.b, u_ref);
        r.u = std::move(p.u);
        r.active = p.active;
    } catch (const QpInfeasible& e) {
        throw QpInfeasible(std::vector<double>(x.data(), x.data() + x.size()), e.slack(), e.what());
    }
    return r;
}

FilterResult qp_filter(const BarrierNet& net, const SystemModel& model, const Vec& x, const Vec& u_ref,
                       double kappa_gain)
{
    return qp_filter(net.forward(x), net.grad_input(x), model, x, u_ref, kappa_gain);
}

Vec CircleTrackingTask::reference(double t) const
{
    Vec r = center;
    r[0] += radius * std::cos(angular_rate * t + phase);
    r[1] += radius * std::sin(angular_rate * t + phase);
    return r;
}

double wrap_angle(double a)
{
    return std::remainder(a, 2.0 * M_PI);
}

namespace {

Vec circle_control(const CircleTrackingTask& task, const Vec& x, double t)
{
    return task.gain * (task.reference(t) - x.head(2));
}

Vec goal_control(const GoalReachingTask& task, const Vec& x)
{
    Vec u(2);
    const Vec err = task.goal - x.head(2);
    const double dist = err.norm();
    if (dist <= task.position_tolerance) {
        u << 0.0, task.heading_gain * wrap_angle(task.goal_heading - x[2]);
        return u;
    }
    const double heading_err = wrap_angle(std::atan2(err[1], err[0]) - x[2]);
    double v = task.speed_gain * dist * std::cos(heading_err);
    v = std::clamp(v, -task.max_speed, task.max_speed);
    u << v, task.heading_gain * heading_err;
    return u;
}

}  // namespace

Vec reference_controller(const SystemModel& model, const Task& task, const Vec& x, double t)
{
    if (const auto* c = std::get_if<CircleTrackingTask>(&task)) {
        if (model.kind != SystemKind::PointMass)
            throw InvalidInput("circle tracking task requires the point mass system");
        return circle_control(*c, x, t);
    }
    if (model.kind != SystemKind::Unicycle)
        throw InvalidInput("goal reaching task requires the unicycle system");
    return goal_control(std::get<GoalReachingTask>(task), x);
}

Trajectory rollout(const SystemModel& model, const BarrierNet& net, const Task& task, const Vec& x0,
                   int horizon_steps, double dt, double kappa_gain,
                   const std::function<bool(const Vec&)>& safe_predicate)
{
    if (horizon_steps <= 0 || !(dt > 0.0))
        throw InvalidInput("rollout: horizon_steps and dt must be positive");
    const auto& is_safe = safe_predicate ? safe_predicate : model.safe_predicate;
    Trajectory traj;
    Vec x = x0;
    auto observe = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(x);
        if (!traj.violated && !is_safe(x)) {
            traj.violated = true;
            traj.first_violation_time = t;
        }
    };
    observe(0.0);
    for (int k = 0; k < horizon_steps; ++k) {
        const double t = k * dt;
        const Vec u_ref = reference_controller(model, task, x, t);
        FilterResult f;
        try {
            f = qp_filter(net, model, x, u_ref, kappa_gain);
        } catch (const QpInfeasible&) {
            traj.infeasible = true;
            traj.infeasible_time = t;
            break;
        }
        traj.controls.push_back(f.u);
        traj.filter_active.push_back(f.active);
        traj.h_values.push_back(f.h);
        traj.constraint_residuals.push_back(f.a.dot(f.u) - f.b);
        try {
            x = rk4_step(model, x, f.u, dt);
        } catch (const IntegrationDiverged&) {
            traj.infeasible = true;
            traj.infeasible_time = t;
            break;
        }
        observe(t + dt);
    }
    return traj;
}

}  // namespace cped
