#include "cped/dynamics.hpp"

#include <cmath>

#include "cped/errors.hpp"

namespace cped {

namespace {

void require_finite(const Vec& v, const char* what)
{
    if (!all_finite(v))
        throw InvalidInput(std::string(what) + " contains non-finite values");
}

void require_size(const Vec& v, int n, const char* what)
{
    if (v.size() != n)
        throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
}

}  // namespace

bool all_finite(const Vec& v)
{
    return v.allFinite();
}

std::string to_string(SystemKind kind)
{
    return kind == SystemKind::PointMass ? "point_mass" : "unicycle";
}

SystemKind system_kind_from_string(const std::string& name)
{
    if (name == "point_mass")
        return SystemKind::PointMass;
    if (name == "unicycle")
        return SystemKind::Unicycle;
    throw ConfigError("system.kind", "unknown system '" + name + "'");
}

Vec SystemModel::dynamics(const Vec& x, const Vec& u) const
{
    return drift(x) + actuation(x) * u;
}

Vec eval_point_mass(const Vec& x, const Vec& u, const PointMassParams& params)
{
    require_size(x, 2, "point mass state");
    require_size(u, 2, "point mass control");
    require_finite(x, "point mass state");
    require_finite(u, "point mass control");
    Vec out(2);
    for (int i = 0; i < 2; ++i)
        out[i] = -x[i] + (x[i] * x[i] + params.delta) * u[i];
    return out;
}

Vec eval_unicycle(const Vec& x, const Vec& u)
{
    require_size(x, 3, "unicycle state");
    require_size(u, 2, "unicycle control");
    require_finite(x, "unicycle state");
    require_finite(u, "unicycle control");
    Vec out(3);
    out << u[0] * std::cos(x[2]), u[0] * std::sin(x[2]), u[1];
    return out;
}

double h_spec_point_mass(const Vec& x)
{
    return std::min(1.0 - x[0], 1.0 - x[1]);
}

double h_expert_unicycle(const Vec& x, const UnicycleParams& p)
{
    const double R = p.radius;
    const double cx = x[0] - R * std::sin(x[2]);
    const double cy = x[1] + R * std::cos(x[2]);
    return cx * cx + cy * cy + 2.0 * R * R - p.safe_distance * p.safe_distance;
}

Vec h_expert_unicycle_gradient(const Vec& x, const UnicycleParams& p)
{
    const double R = p.radius;
    const double s = std::sin(x[2]);
    const double c = std::cos(x[2]);
    const double cx = x[0] - R * s;
    const double cy = x[1] + R * c;
    Vec grad(3);
    grad << 2.0 * cx, 2.0 * cy, -2.0 * R * (cx * c + cy * s);
    return grad;
}

SystemModel make_point_mass(const PointMassParams& params)
{
    if (!(params.delta > 0.0))
        throw InvalidInput("point mass delta must be positive");
    const double delta = params.delta;
    SystemModel m;
    m.kind = SystemKind::PointMass;
    m.state_dim = 2;
    m.control_dim = 2;
    m.drift = [](const Vec& x) -> Vec { return -x; };
    m.actuation = [delta](const Vec& x) -> Mat {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = x[0] * x[0] + delta;
        g(1, 1) = x[1] * x[1] + delta;
        return g;
    };
    m.safety_value = [](const Vec& x) { return h_spec_point_mass(x); };
    m.safe_predicate = [](const Vec& x) { return x[0] <= 1.0 && x[1] <= 1.0; };
    return m;
}

SystemModel make_unicycle(const UnicycleParams& params)
{
    if (!(params.radius > 0.0) || !(params.safe_distance > 0.0))
        throw InvalidInput("unicycle radius and safe_distance must be positive");
    SystemModel m;
    m.kind = SystemKind::Unicycle;
    m.state_dim = 3;
    m.control_dim = 2;
    m.drift = [](const Vec&) -> Vec { return Vec::Zero(3); };
    m.actuation = [](const Vec& x) -> Mat {
        Mat g = Mat::Zero(3, 2);
        g(0, 0) = std::cos(x[2]);
        g(1, 0) = std::sin(x[2]);
        g(2, 1) = 1.0;
        return g;
    };
    m.safety_value = [params](const Vec& x) { return h_expert_unicycle(x, params); };
    m.safe_predicate = [params](const Vec& x) { return h_expert_unicycle(x, params) >= 0.0; };
    return m;
}

Vec rk4_step(const SystemModel& model, const Vec& x, const Vec& u, double dt)
{
    if (!(dt > 0.0))
        throw InvalidInput("rk4_step: dt must be positive");
    auto stage = [&](const Vec& s) {
        Vec d = model.dynamics(s, u);
        if (!all_finite(d))
            throw IntegrationDiverged("rk4_step: non-finite derivative");
        return d;
    };
    const Vec k1 = stage(x);
    const Vec k2 = stage(x + 0.5 * dt * k1);
    const Vec k3 = stage(x + 0.5 * dt * k2);
    const Vec k4 = stage(x + dt * k3);
    Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!all_finite(next))
        throw IntegrationDiverged("rk4_step: non-finite state");
    return next;
}

}  // namespace cped
