#include <cmath>

#include <doctest.h>

#include "cped/dynamics.hpp"
#include "cped/errors.hpp"
#include "cped/mlp.hpp"
#include "cped/random.hpp"
#include "cped/safe_control.hpp"

using namespace cped;

namespace {

Vec v2(double a, double b)
{
    Vec x(2);
    x << a, b;
    return x;
}

Vec v3(double a, double b, double c)
{
    Vec x(3);
    x << a, b, c;
    return x;
}

Vec one(double a)
{
    Vec x(1);
    x << a;
    return x;
}

Vec random_vec(Rng& rng, int n, double r)
{
    Vec x(n);
    for (int i = 0; i < n; ++i)
        x(i) = rng.uniform(-r, r);
    return x;
}

}  // namespace

TEST_SUITE("safe_control")
{
    TEST_CASE("half-space projection")
    {
        const HalfspaceProjection in = project_halfspace(v2(1, 0), -1.0, v2(0.3, 0.7));
        CHECK_FALSE(in.active);
        CHECK(in.u == v2(0.3, 0.7));

        const HalfspaceProjection p = project_halfspace(one(1), 2.0, one(0));
        CHECK(p.active);
        CHECK(p.u(0) == doctest::Approx(2.0));

        // brute-force grid over feasible u >= 2
        double best = INFINITY, arg = 0;
        for (int i = 0; i <= 100000; ++i) {
            const double u = 2.0 + i * 1e-4;
            if (u * u < best) {
                best = u * u;
                arg = u;
            }
        }
        CHECK(std::abs(p.u(0) - arg) < 1e-4);

        const HalfspaceProjection s = project_halfspace(one(10), 20.0, one(0));
        CHECK(s.u(0) == doctest::Approx(2.0));

        CHECK(project_halfspace(v2(0, 0), -1.0, v2(1, 1)).u == v2(1, 1));
        CHECK_THROWS_AS(project_halfspace(v2(0, 0), 1.0, v2(1, 1)), QpInfeasible);
    }

    TEST_CASE("projection is feasible, minimal and satisfies the KKT conditions")
    {
        Rng rng(19);
        for (int t = 0; t < 200; ++t) {
            const int m = 1 + static_cast<int>(rng.index(3));
            const Vec a = random_vec(rng, m, 2);
            const double b = rng.uniform(-3, 3);
            const Vec u_ref = random_vec(rng, m, 3);
            const HalfspaceProjection p = project_halfspace(a, b, u_ref);
            CHECK(a.dot(p.u) >= b - 1e-9);
            if (!p.active) {
                CHECK(p.u == u_ref);
                continue;
            }
            // u - u_ref = lambda a with lambda >= 0 and an active constraint
            const double lambda = (p.u - u_ref).dot(a) / a.squaredNorm();
            CHECK(lambda >= 0.0);
            CHECK((p.u - u_ref - lambda * a).norm() < 1e-12);
            CHECK(std::abs(a.dot(p.u) - b) < 1e-9);
            const double dev = (p.u - u_ref).norm();
            for (int k = 0; k < 1000; ++k) {
                Vec w = random_vec(rng, m, 6);
                if (a.dot(w) < b)
                    continue;
                CHECK(dev <= (w - u_ref).norm() + 1e-12);
            }
        }
    }

    TEST_CASE("qp filter builds the Lie-derivative constraint")
    {
        const SystemModel pm = make_point_mass({});
        const BarrierNet net = BarrierNet::initialized({2, 16, 16, 1}, Activation::Tanh, 4);
        Rng rng(27);
        for (int t = 0; t < 100; ++t) {
            const Vec x = random_vec(rng, 2, 2);
            const Vec u_ref = random_vec(rng, 2, 5);
            const FilterResult f = qp_filter(net, pm, x, u_ref, 1.5);
            const Vec g = net.grad_input(x);
            CHECK((f.a - pm.actuation(x).transpose() * g).norm() < 1e-12);
            CHECK(std::abs(f.b - (-g.dot(pm.drift(x)) - 1.5 * net.forward(x))) < 1e-12);
            CHECK(f.a.dot(f.u) >= f.b - 1e-9);
            // the applied control satisfies Lf h + Lg h u + kappa(h) >= 0
            CHECK(g.dot(pm.dynamics(x, f.u)) + 1.5 * net.forward(x) >= -1e-9);
        }
        const Vec bad = v2(NAN, 0);
        CHECK_THROWS_AS(qp_filter(net, pm, bad, v2(0, 0), 1.0), InvalidInput);
    }

    TEST_CASE("infeasible filter carries the state and slack")
    {
        const SystemModel pm = make_point_mass({});
        // constant h = -1, zero gradient: a = 0, b = 1
        BarrierNet net({2, 1});
        net.bias(0) << -1.0;
        try {
            qp_filter(net, pm, v2(0.5, 0.25), v2(0, 0), 1.0);
            FAIL("expected QpInfeasible");
        } catch (const QpInfeasible& e) {
            CHECK(e.state().size() == 2);
            CHECK(e.state()[1] == 0.25);
            CHECK(e.slack() == doctest::Approx(1.0));
        }
    }

    TEST_CASE("reference controllers")
    {
        const SystemModel pm = make_point_mass({});
        CircleTrackingTask c;
        c.radius = 0.0;
        CHECK(reference_controller(pm, c, Vec::Zero(2), 0.3).norm() == 0.0);
        c.radius = 1.0;
        CHECK((reference_controller(pm, c, c.reference(2.0), 2.0)).norm() < 1e-12);
        CHECK((c.reference(0.0) - v2(1, 0)).norm() < 1e-15);

        const SystemModel uni = make_unicycle({});
        GoalReachingTask g;
        g.goal = v2(5, 0);
        g.goal_heading = M_PI;
        CHECK(reference_controller(uni, g, v3(5, 0, M_PI), 0.0).norm() < 1e-12);
        CHECK(reference_controller(uni, g, v3(5, 0, -M_PI), 0.0).norm() < 1e-12);
        const Vec u = reference_controller(uni, g, v3(0, 0, 0), 0.0);
        CHECK(u(0) > 0.0);
        CHECK(std::abs(u(1)) < 1e-12);

        CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
        CHECK_THROWS_AS(reference_controller(uni, c, v3(0, 0, 0), 0.0), InvalidInput);
    }

    TEST_CASE("rollouts")
    {
        const SystemModel pm = make_point_mass({});
        // h = 100, zero gradient: the filter never acts
        BarrierNet inert({2, 1});
        inert.bias(0) << 100.0;
        CircleTrackingTask c;
        c.radius = 0.3;
        const Trajectory t = rollout(pm, inert, c, v2(-0.5, -0.5), 50, 0.01, 1.0);
        CHECK_FALSE(t.violated);
        CHECK(t.safe());
        CHECK(t.states.size() == 51);
        CHECK(t.controls.size() == 50);
        CHECK(t.filter_active.size() == 50);
        CHECK(t.h_values.size() == 50);
        for (bool a : t.filter_active)
            CHECK_FALSE(a);

        const Trajectory out = rollout(pm, inert, c, v2(1.5, 0), 10, 0.01, 1.0);
        CHECK(out.violated);
        REQUIRE(out.first_violation_time.has_value());
        CHECK(*out.first_violation_time == 0.0);
        CHECK(out.states.size() == 11);  // keeps simulating

        BarrierNet dead({2, 1});
        dead.bias(0) << -1.0;
        const Trajectory inf = rollout(pm, dead, c, v2(0, 0), 10, 0.01, 1.0);
        CHECK(inf.infeasible);
        CHECK(inf.infeasible_time.has_value());
        CHECK_FALSE(inf.safe());
        CHECK(inf.controls.empty());

        // a linear barrier h = 0.9 - x1 keeps a large circle inside the wall
        BarrierNet wall({2, 1});
        wall.weight(0) << -1, 0;
        wall.bias(0) << 0.9;
        c.radius = 2.0;
        c.center = v2(0, -2);  // only the x1 wall is in reach
        const Trajectory w = rollout(pm, wall, c, v2(0, -2), 600, 0.01, 1.0);
        CHECK_FALSE(w.violated);
        bool acted = false;
        for (std::size_t k = 0; k < w.controls.size(); ++k) {
            acted = acted || w.filter_active[k];
            CHECK(w.constraint_residuals[k] >= -1e-9);
        }
        CHECK(acted);

        CHECK_THROWS_AS(rollout(pm, wall, c, v2(0, 0), 0, 0.01, 1.0), InvalidInput);
    }
}
