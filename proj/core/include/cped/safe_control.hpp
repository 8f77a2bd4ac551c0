#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "cped/dynamics.hpp"
#include "cped/mlp.hpp"

namespace cped {

struct HalfspaceProjection {
    Vec u;
    bool active = false;
};

/// Euclidean projection of u_ref onto {u : <a, u> >= b}. Returns u_ref
/// untouched when it is feasible; throws QpInfeasible when a == 0 and the
/// constraint is violated.
HalfspaceProjection project_halfspace(const Vec& a, double b, const Vec& u_ref);

struct FilterResult {
    Vec u;
    bool active = false;
    Vec a;           // g(x)^T grad h(x)
    double b = 0.0;  // -<grad h(x), f(x)> - kappa(h(x))
    double h = 0.0;
};

/// CBF-QP  min ||u - u_ref||^2  s.t.  L_f h + L_g h u + kappa(h) >= 0,
/// solved in closed form for an unconstrained input set.
FilterResult qp_filter(const BarrierNet& net, const SystemModel& model, const Vec& x, const Vec& u_ref,
                       double kappa_gain);

/// Same filter for an arbitrary differentiable barrier given its value and
/// gradient at x.
FilterResult qp_filter(double h, const Vec& grad_h, const SystemModel& model, const Vec& x, const Vec& u_ref,
                       double kappa_gain);

/// Point mass: u = gain * (x_ref(t) - x), with the reference moving on a
/// circle of `radius` around `center` at `angular_rate` rad/s.
struct CircleTrackingTask {
    double radius = 1.0;
    double angular_rate = 1.0;
    double phase = 0.0;
    double gain = 5.0;
    Vec center = Vec::Zero(2);

    Vec reference(double t) const;
};

/// Unicycle: proportional speed and heading law toward a goal pose.
struct GoalReachingTask {
    Vec goal = Vec::Zero(2);
    double goal_heading = 0.0;
    double speed_gain = 1.0;
    double heading_gain = 1.0;
    double max_speed = 1.0;
    double position_tolerance = 0.05;
};

using Task = std::variant<CircleTrackingTask, GoalReachingTask>;

double wrap_angle(double a);

Vec reference_controller(const SystemModel& model, const Task& task, const Vec& x, double t);

struct Trajectory {
    std::vector<double> times;
    StateList states;
    StateList controls;             // one fewer than states
    std::vector<bool> filter_active;
    std::vector<double> h_values;   // learned barrier at each recorded control step
    std::vector<double> constraint_residuals;  // <a, u> - b at the applied control
    bool violated = false;
    std::optional<double> first_violation_time;
    bool infeasible = false;
    std::optional<double> infeasible_time;

    bool safe() const { return !violated && !infeasible; }
};

/// Closed-loop simulation: u_ref from the task, CBF-QP filter on the learned
/// barrier, zero-order hold through one RK4 step. The first state failing
/// `safe_predicate` marks the trajectory violated; the simulation continues.
/// QP infeasibility truncates the trajectory and is recorded with its time.
Trajectory rollout(const SystemModel& model, const BarrierNet& net, const Task& task, const Vec& x0,
                   int horizon_steps, double dt, double kappa_gain,
                   const std::function<bool(const Vec&)>& safe_predicate = {});

}  // namespace cped
