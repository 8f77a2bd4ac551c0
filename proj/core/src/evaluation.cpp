#include "cped/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cped/errors.hpp"
#include "cped/io.hpp"
#include "detail_json.hpp"
#include "json.hpp"

namespace cped {

using nlohmann::json;

SafetyRateResult safety_rate(const SystemModel& model, const BarrierNet& net, const TaskSampler& sampler,
                             int n_rollouts, const RolloutConfig& cfg, std::uint64_t rng_seed,
                             const std::function<void(int, const Trajectory&)>& sink)
{
    if (n_rollouts <= 0)
        throw InvalidInput("safety_rate: n_rollouts must be positive");
    SafetyRateResult r;
    r.n_rollouts = n_rollouts;
    r.min_constraint_residual = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_rollouts; ++i) {
        Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(i)));
        const RolloutSpec spec = sampler(i, rng);
        const Trajectory traj = rollout(model, net, spec.task, spec.x0, cfg.horizon_steps, cfg.dt, cfg.kappa_gain);
        if (traj.safe())
            ++r.n_safe;
        if (traj.infeasible)
            ++r.n_infeasible;
        for (double res : traj.constraint_residuals)
            r.min_constraint_residual = std::min(r.min_constraint_residual, res);
        if (sink)
            sink(i, traj);
    }
    r.rate_percent = 100.0 * r.n_safe / r.n_rollouts;
    return r;
}

TaskSampler unicycle_task_sampler(const UnicycleRolloutSpec& spec)
{
    return [spec](int index, Rng& rng) {
        const bool mirrored = spec.bidirectional && (index % 2 == 1);
        const double y0 = rng.uniform(-spec.start_y_spread, spec.start_y_spread);
        const double th0 = rng.uniform(-spec.start_heading_spread, spec.start_heading_spread);
        GoalReachingTask task = spec.base_task;
        Vec x0(3);
        task.goal = Vec(2);
        if (!mirrored) {
            x0 << -spec.start_x, y0, th0;
            task.goal << spec.start_x, 0.0;
            task.goal_heading = M_PI;
        } else {
            x0 << spec.start_x, y0, M_PI + th0;
            task.goal << -spec.start_x, 0.0;
            task.goal_heading = -M_PI;
        }
        return RolloutSpec{x0, task};
    };
}

RadiusSweep radius_sweep(const SystemModel& model, const BarrierNet& net, const std::vector<double>& radii,
                         const RadiusSweepSpec& spec, const RolloutConfig& cfg, std::uint64_t rng_seed,
                         const std::function<void(double, int, const Trajectory&)>& sink)
{
    if (radii.empty())
        throw InvalidInput("radius_sweep: no radii");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] > radii[i - 1]))
            throw InvalidInput("radius_sweep: radii must be increasing");
    if (spec.rollouts_per_radius <= 0)
        throw InvalidInput("radius_sweep: rollouts_per_radius must be positive");

    RadiusSweep out;
    out.radii = radii;
    out.rollouts_per_radius = spec.rollouts_per_radius;
    out.min_constraint_residual = std::numeric_limits<double>::infinity();
    bool prefix_safe = true;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
        int violations = 0;
        for (int k = 0; k < spec.rollouts_per_radius; ++k) {
            Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(ri * 1000 + k)));
            CircleTrackingTask task = spec.base_task;
            task.radius = radii[ri];
            task.phase = spec.base_task.phase + 2.0 * M_PI * k / spec.rollouts_per_radius;
            Vec x0 = task.center;
            x0[0] += rng.uniform(-spec.start_spread, spec.start_spread);
            x0[1] += rng.uniform(-spec.start_spread, spec.start_spread);
            const Trajectory traj = rollout(model, net, task, x0, cfg.horizon_steps, cfg.dt, cfg.kappa_gain);
            if (!traj.safe())
                ++violations;
            for (double res : traj.constraint_residuals)
                out.min_constraint_residual = std::min(out.min_constraint_residual, res);
            if (sink)
                sink(radii[ri], k, traj);
        }
        out.violations.push_back(violations);
        if (prefix_safe && violations == 0)
            out.max_safe_radius = radii[ri];
        else
            prefix_safe = false;
    }
    return out;
}

// ---------------------------------------------------------------------------

std::filesystem::path export_surface(const BarrierNet& net, const SurfaceGrid& grid,
                                     const std::filesystem::path& csv_path)
{
    if (grid.resolution < 2)
        throw InvalidInput("export_surface: resolution must be >= 2");
    const int n = net.input_dim();
    if (n < 2 || n > 3)
        throw ShapeError("export_surface: supports 2-D and 3-D states");
    const std::vector<double> slices = n == 3 ? grid.theta_slices : std::vector<double>{0.0};
    if (slices.empty())
        throw InvalidInput("export_surface: no theta slices");

    std::ostringstream ss;
    ss << (n == 3 ? "x1,x2,theta,h\n" : "x1,x2,h\n");
    const int res = grid.resolution;
    auto axis = [res](double lo, double hi, int i) { return lo + (hi - lo) * i / (res - 1); };
    for (double theta : slices)
        for (int i = 0; i < res; ++i)
            for (int j = 0; j < res; ++j) {
                Vec x(n);
                x[0] = axis(grid.x_lo, grid.x_hi, i);
                x[1] = axis(grid.y_lo, grid.y_hi, j);
                if (n == 3)
                    x[2] = theta;
                ss << io::format_double(x[0]) << ',' << io::format_double(x[1]) << ',';
                if (n == 3)
                    ss << io::format_double(theta) << ',';
                ss << io::format_double(net.forward(x)) << '\n';
            }
    io::write_text(csv_path, ss.str());

    json meta;
    meta["csv"] = csv_path.filename().string();
    meta["x_range"] = {grid.x_lo, grid.x_hi};
    meta["y_range"] = {grid.y_lo, grid.y_hi};
    meta["resolution"] = res;
    meta["state_dim"] = n;
    if (n == 3)
        meta["theta_slices"] = slices;
    meta["rows"] = static_cast<long>(res) * res * static_cast<long>(slices.size());
    std::filesystem::path sidecar = csv_path;
    sidecar.replace_extension(".json");
    io::write_text(sidecar, meta.dump(2) + "\n");
    return csv_path;
}

// ---------------------------------------------------------------------------

namespace {

json safety_json(const SafetyRateResult& s)
{
    return {{"n_rollouts", s.n_rollouts},
            {"n_safe", s.n_safe},
            {"n_infeasible", s.n_infeasible},
            {"rate_percent", s.rate_percent},
            {"min_constraint_residual", s.min_constraint_residual}};
}

json sweep_json(const RadiusSweep& s)
{
    return {{"radii", s.radii},
            {"violations", s.violations},
            {"rollouts_per_radius", s.rollouts_per_radius},
            {"max_safe_radius", s.max_safe_radius ? json(*s.max_safe_radius) : json(nullptr)},
            {"min_constraint_residual", s.min_constraint_residual}};
}

std::string radius_text(const std::optional<double>& r)
{
    if (!r)
        return "Unsafe at all r";
    std::ostringstream ss;
    ss << "Safe up to r = " << *r;
    return ss.str();
}

double radius_value(const std::optional<double>& r)
{
    return r ? *r : 0.0;
}

}  // namespace

namespace detail {

json summary_json(const EvaluationSummary& e)
{
    json j;
    j["label"] = e.label;
    j["seeds"] = e.seeds;
    if (e.safety)
        j["safety_rate"] = safety_json(*e.safety);
    if (e.sweep)
        j["radius_sweep"] = sweep_json(*e.sweep);
    return j;
}

}  // namespace detail

ComparisonReport compare_report(const EvaluationSummary& fm, const EvaluationSummary& cped)
{
    if (fm.config_key != cped.config_key)
        throw InvalidComparison("compare_report: experiment configs differ ('" + fm.config_key + "' vs '" +
                                cped.config_key + "')");
    if (fm.safety.has_value() != cped.safety.has_value() || fm.sweep.has_value() != cped.sweep.has_value())
        throw InvalidComparison("compare_report: the two summaries carry different metrics");

    ComparisonReport out;
    json j;
    j["config_key"] = fm.config_key;
    j["fm"] = detail::summary_json(fm);
    j["cped"] = detail::summary_json(cped);
    std::ostringstream md;
    md << "# FM vs CPED\n\nExperiment: `" << fm.config_key << "`\n\n";

    if (fm.sweep) {
        const double dr = radius_value(cped.sweep->max_safe_radius) - radius_value(fm.sweep->max_safe_radius);
        j["difference"]["max_safe_radius"] = dr;
        md << "## Generalization radius\n\n| Model | Max safe radius |\n|---|---|\n"
           << "| FM | " << radius_text(fm.sweep->max_safe_radius) << " |\n"
           << "| CPED | " << radius_text(cped.sweep->max_safe_radius) << " |\n\n";
        md << "| r | FM violations | CPED violations |\n|---|---|---|\n";
        for (std::size_t i = 0; i < fm.sweep->radii.size() && i < cped.sweep->radii.size(); ++i)
            md << "| " << fm.sweep->radii[i] << " | " << fm.sweep->violations[i] << " | "
               << cped.sweep->violations[i] << " |\n";
        md << "\n";
        out.checks.push_back({"cped_radius_ge_fm", dr >= 0.0,
                              "CPED " + radius_text(cped.sweep->max_safe_radius) + ", FM " +
                                  radius_text(fm.sweep->max_safe_radius)});
    }
    if (fm.safety) {
        const double d = cped.safety->rate_percent - fm.safety->rate_percent;
        j["difference"]["rate_percent"] = d;
        md << "## Safety rate\n\n| Model | Safe / total | Rate (%) |\n|---|---|---|\n"
           << "| FM | " << fm.safety->n_safe << " / " << fm.safety->n_rollouts << " | "
           << fm.safety->rate_percent << " |\n"
           << "| CPED | " << cped.safety->n_safe << " / " << cped.safety->n_rollouts << " | "
           << cped.safety->rate_percent << " |\n\n";
        std::ostringstream rates;
        rates << "CPED " << cped.safety->rate_percent << "%, FM " << fm.safety->rate_percent << "%";
        out.checks.push_back({"cped_rate_ge_fm_plus_3", d >= 3.0, rates.str()});
        out.checks.push_back({"cped_rate_ge_95", cped.safety->rate_percent >= 95.0, rates.str()});
    }
    md << "## Checks\n\n";
    for (const auto& c : out.checks) {
        md << "- " << (c.passed ? "PASS" : "FAIL") << " `" << c.name << "`: " << c.detail << "\n";
        j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    out.markdown = md.str();
    out.json = j.dump(2) + "\n";
    return out;
}

std::filesystem::path write_compare_report(const ComparisonReport& report, const std::filesystem::path& stem)
{
    std::filesystem::path md = stem, js = stem;
    md += ".md";
    js += ".json";
    io::write_text(md, report.markdown);
    io::write_text(js, report.json);
    return js;
}

}  // namespace cped
