#pragma once

#include <functional>
#include <string>

#include "cped/types.hpp"

namespace cped {

enum class SystemKind { PointMass, Unicycle };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

/// Control-affine system xdot = f(x) + g(x) u together with the geometric
/// safe set S it must stay in.
struct SystemModel {
    SystemKind kind = SystemKind::PointMass;
    int state_dim = 0;
    int control_dim = 0;
    std::function<Vec(const Vec&)> drift;              // f
    std::function<Mat(const Vec&)> actuation;          // g, state_dim x control_dim
    std::function<double(const Vec&)> safety_value;    // analytic h, S = {h >= 0}
    std::function<bool(const Vec&)> safe_predicate;

    Vec dynamics(const Vec& x, const Vec& u) const;
};

struct PointMassParams {
    double delta = 1.0;
};

struct UnicycleParams {
    double radius = 1.0;
    double safe_distance = 2.0;
};

// xdot_i = -x_i + (x_i^2 + delta) u_i
Vec eval_point_mass(const Vec& x, const Vec& u, const PointMassParams& params);

// xdot = [v cos(theta), v sin(theta), omega]
Vec eval_unicycle(const Vec& x, const Vec& u);

// min(1 - x1, 1 - x2); the box S = {x1 <= 1, x2 <= 1}.
double h_spec_point_mass(const Vec& x);

// (x - R sin th)^2 + (y + R cos th)^2 + 2 R^2 - Ds^2
double h_expert_unicycle(const Vec& x, const UnicycleParams& params);

// Gradient of h_expert_unicycle with respect to (x, y, theta).
Vec h_expert_unicycle_gradient(const Vec& x, const UnicycleParams& params);

SystemModel make_point_mass(const PointMassParams& params);
SystemModel make_unicycle(const UnicycleParams& params);

/// Classical RK4 step with u held constant over [t, t + dt].
/// Throws IntegrationDiverged if any stage becomes non-finite.
Vec rk4_step(const SystemModel& model, const Vec& x, const Vec& u, double dt);

bool all_finite(const Vec& v);

}  // namespace cped
