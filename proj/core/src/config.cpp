#include "cped/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "cped/errors.hpp"
#include "cped/io.hpp"

namespace cped {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void read_value(const json& j, const std::string& field, double& out)
{
    if (!j.is_number())
        throw ConfigError(field, "expected a number");
    out = j.get<double>();
    if (!std::isfinite(out))
        throw ConfigError(field, "must be finite");
}

void read_value(const json& j, const std::string& field, int& out)
{
    if (!j.is_number_integer())
        throw ConfigError(field, "expected an integer");
    out = j.get<int>();
}

void read_value(const json& j, const std::string& field, std::uint64_t& out)
{
    if (!j.is_number_unsigned())
        throw ConfigError(field, "expected a nonnegative integer");
    out = j.get<std::uint64_t>();
}

void read_value(const json& j, const std::string& field, bool& out)
{
    if (!j.is_boolean())
        throw ConfigError(field, "expected true or false");
    out = j.get<bool>();
}

void read_value(const json& j, const std::string& field, std::string& out)
{
    if (!j.is_string())
        throw ConfigError(field, "expected a string");
    out = j.get<std::string>();
}

template <class T>
void read_value(const json& j, const std::string& field, std::vector<T>& out)
{
    if (!j.is_array())
        throw ConfigError(field, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
        T v{};
        read_value(j[i], field + "[" + std::to_string(i) + "]", v);
        out.push_back(v);
    }
}

void read_value(const json& j, const std::string& field, std::array<double, 2>& out)
{
    std::vector<double> v;
    read_value(j, field, v);
    if (v.size() != 2)
        throw ConfigError(field, "expected [lo, hi]");
    out = {v[0], v[1]};
}

void read_value(const json& j, const std::string& field, Vec& out)
{
    std::vector<double> v;
    read_value(j, field, v);
    out = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        known_.insert(key);
        if (auto it = j_.find(key); it != j_.end())
            read_value(*it, field(key), out);
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out)
    {
        known_.insert(key);
        if (auto it = j_.find(key); it != j_.end() && !it->is_null()) {
            T v = out.value_or(T{});
            read_value(*it, field(key), v);
            out = v;
        }
    }

    std::optional<Section> child(const std::string& key)
    {
        known_.insert(key);
        if (auto it = j_.find(key); it != j_.end())
            return Section(*it, field(key));
        return std::nullopt;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* raw(const std::string& key)
    {
        known_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!known_.count(it.key()))
                throw ConfigError(field(it.key()), "unknown key");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

void read_circle_task(Section s, CircleTrackingTask& t)
{
    s.get("gain", t.gain);
    s.get("angular_rate", t.angular_rate);
    s.get("center", t.center);
    s.finish();
}

void read_goal_task(Section s, GoalReachingTask& t)
{
    s.get("speed_gain", t.speed_gain);
    s.get("heading_gain", t.heading_gain);
    s.get("max_speed", t.max_speed);
    s.get("position_tolerance", t.position_tolerance);
    s.finish();
}

ojson circle_task_json(const CircleTrackingTask& t)
{
    ojson j;
    j["gain"] = t.gain;
    j["angular_rate"] = t.angular_rate;
    j["center"] = std::vector<double>(t.center.data(), t.center.data() + t.center.size());
    return j;
}

ojson goal_task_json(const GoalReachingTask& t)
{
    ojson j;
    j["speed_gain"] = t.speed_gain;
    j["heading_gain"] = t.heading_gain;
    j["max_speed"] = t.max_speed;
    j["position_tolerance"] = t.position_tolerance;
    return j;
}

OptimizerKind optimizer_from_string(const std::string& name)
{
    if (name == "sgd")
        return OptimizerKind::Sgd;
    if (name == "adam")
        return OptimizerKind::Adam;
    throw ConfigError("train.optimizer", "unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

void require(bool ok, const std::string& field, const std::string& what)
{
    if (!ok)
        throw ConfigError(field, what);
}

}  // namespace

SystemModel RunConfig::model() const
{
    return system == SystemKind::PointMass ? make_point_mass(point_mass) : make_unicycle(unicycle);
}

void RunConfig::validate() const
{
    if (system == SystemKind::PointMass)
        require(point_mass.delta > 0.0, "system.delta", "must be > 0");
    else {
        require(unicycle.radius > 0.0, "system.radius", "must be > 0");
        require(unicycle.safe_distance > 0.0, "system.safe_distance", "must be > 0");
    }

    require(experts.n_trajectories > 0, "experts.n_trajectories", "must be > 0");
    require(experts.horizon_steps > 0, "experts.horizon_steps", "must be > 0");
    require(experts.dt > 0.0, "experts.dt", "must be > 0");
    require(experts.record_stride > 0, "experts.record_stride", "must be > 0");
    require(experts.expert.kappa_gain > 0.0, "experts.kappa_gain", "must be > 0");
    require(experts.expert.margin >= 0.0, "experts.margin", "must be >= 0");
    if (system == SystemKind::PointMass) {
        const auto& e = experts.point_mass;
        require(e.radius_min > 0.0 && e.radius_max >= e.radius_min, "experts.radius_range",
                "expected 0 < min <= max");
        require(e.start_spread >= 0.0, "experts.start_spread", "must be >= 0");
    } else {
        const auto& e = experts.unicycle;
        require(e.start_x > 0.0, "experts.start_x", "must be > 0");
        require(e.lead_in >= 0.0, "experts.lead_in", "must be >= 0");
        require(e.start_y_spread >= 0.0, "experts.start_y_spread", "must be >= 0");
        require(e.start_heading_spread >= 0.0, "experts.start_heading_spread", "must be >= 0");
    }

    sampling.regions.validate();
    const auto& q = sampling.quotas;
    require(q.safe >= 2, "sampling.quotas.safe", "must be >= 2");
    require(q.unsafe >= 2, "sampling.quotas.unsafe", "must be >= 2");
    require(q.expert >= 2, "sampling.quotas.expert", "must be >= 2");
    require(q.buffer >= 0, "sampling.quotas.buffer", "must be >= 0");
    require(sampling.radius_max > 0.0, "sampling.radius_max", "must be > 0");
    if (sampling.third_range)
        require((*sampling.third_range)[0] <= (*sampling.third_range)[1], "sampling.third_range",
                "expected lo <= hi");
    require(sampling.global_fraction >= 0.0 && sampling.global_fraction <= 1.0, "sampling.global_fraction",
            "must lie in [0, 1]");
    require(sampling.max_attempts_per_point > 0, "sampling.max_attempts_per_point", "must be > 0");
    require(sampling.buffer_speed > 0.0, "sampling.buffer_speed", "must be > 0");
    require(sampling.calib_fraction > 0.0 && sampling.calib_fraction < 1.0, "sampling.calib_fraction",
            "must lie in (0, 1)");

    train.validate();
    for (int k = 0; k < 3; ++k)
        require(fm_margins[k] >= 0.0, "fm_margins", "must be >= 0");
    conformal.validate();

    const auto& ev = evaluation;
    require(ev.rollout.horizon_steps > 0, "evaluation.horizon_steps", "must be > 0");
    require(ev.rollout.dt > 0.0, "evaluation.dt", "must be > 0");
    require(ev.rollout.kappa_gain > 0.0, "evaluation.kappa_gain", "must be > 0");
    for (std::size_t i = 0; i < ev.radii.size(); ++i) {
        require(ev.radii[i] > 0.0, "evaluation.radii", "must be > 0");
        if (i > 0)
            require(ev.radii[i] > ev.radii[i - 1], "evaluation.radii", "must be increasing");
    }
    require(ev.sweep.rollouts_per_radius > 0, "evaluation.rollouts_per_radius", "must be > 0");
    require(ev.sweep.start_spread >= 0.0, "evaluation.start_spread", "must be >= 0");
    require(ev.n_rollouts > 0, "evaluation.n_rollouts", "must be > 0");
    require(ev.saved_trajectories >= 0, "evaluation.saved_trajectories", "must be >= 0");
    if (ev.surface) {
        require(ev.surface->resolution >= 2, "evaluation.surface.resolution", "must be >= 2");
        require(ev.surface->x_lo < ev.surface->x_hi, "evaluation.surface.x_range", "expected lo < hi");
        require(ev.surface->y_lo < ev.surface->y_hi, "evaluation.surface.y_range", "expected lo < hi");
        require(!ev.surface->theta_slices.empty(), "evaluation.surface.theta_slices", "must not be empty");
    }
    require(!output_dir.empty(), "output_dir", "must not be empty");
}

RunConfig default_run_config(SystemKind system)
{
    RunConfig c;
    c.system = system;
    auto& ev = c.evaluation;
    if (system == SystemKind::PointMass) {
        c.experts.n_trajectories = 30;
        c.experts.horizon_steps = 700;
        c.experts.record_stride = 5;
        c.experts.expert.margin = 0.3;
        c.sampling.quotas = {146, 146, 146, 49};  // 390 training points after a 0.2 calibration split
        c.sampling.radius_max = 4.0;
        c.train.optimizer = OptimizerKind::Sgd;
        c.train.learning_rate = 0.01;
        c.train.max_epochs_per_stage = 300;
        c.train.batch_size = 64;
        ev.rollout.horizon_steps = 800;
        for (int i = 0; i < 16; ++i)
            ev.radii.push_back(0.1 + 0.2 * i);
        SurfaceGrid g;
        g.x_lo = g.y_lo = -4.0;
        g.x_hi = g.y_hi = 2.0;
        g.resolution = 61;
        ev.surface = g;
    } else {
        c.experts.n_trajectories = 80;
        c.experts.horizon_steps = 1500;
        c.experts.record_stride = 5;
        c.experts.expert.margin = 5.0;
        c.experts.unicycle.start_y_spread = 1.5;
        c.experts.unicycle.start_heading_spread = 0.3;
        c.experts.unicycle.lead_in = 1.5;
        c.sampling.regions.sigma_band = 1.0;
        c.sampling.quotas = {375, 375, 375, 125};  // 1000 training points after a 0.2 calibration split
        c.sampling.radius_max = 6.5;
        c.train.optimizer = OptimizerKind::Adam;
        c.train.learning_rate = 0.003;
        c.train.max_epochs_per_stage = 600;
        c.train.batch_size = 64;
        c.train.loss_tolerance = 0.0;
        ev.rollout.horizon_steps = 1500;
        ev.n_rollouts = 100;
        ev.unicycle.start_y_spread = 0.9;
        ev.unicycle.start_heading_spread = 0.15;
        SurfaceGrid g;
        g.x_lo = -6.0;
        g.x_hi = 6.0;
        g.y_lo = -4.0;
        g.y_hi = 4.0;
        g.resolution = 61;
        g.theta_slices = {0.0, M_PI};
        ev.surface = g;
    }
    return c;
}

RunConfig parse_run_config(const std::string& json_text)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("malformed JSON: ") + e.what());
    }
    Section top(root, "");

    SystemKind kind = SystemKind::PointMass;
    std::optional<Section> sys = top.child("system");
    if (!sys)
        throw ConfigError("system", "missing");
    std::string kind_name;
    sys->get("kind", kind_name);
    if (kind_name.empty())
        throw ConfigError("system.kind", "missing");
    kind = system_kind_from_string(kind_name);

    RunConfig c = default_run_config(kind);
    if (kind == SystemKind::PointMass) {
        sys->get("delta", c.point_mass.delta);
    } else {
        sys->get("radius", c.unicycle.radius);
        sys->get("safe_distance", c.unicycle.safe_distance);
    }
    sys->finish();

    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);

    if (auto s = top.child("experts")) {
        auto& e = c.experts;
        s->get("n_trajectories", e.n_trajectories);
        s->get("horizon_steps", e.horizon_steps);
        s->get("dt", e.dt);
        s->get("record_stride", e.record_stride);
        s->get("margin", e.expert.margin);
        s->get("kappa_gain", e.expert.kappa_gain);
        if (kind == SystemKind::PointMass) {
            std::array<double, 2> r{e.point_mass.radius_min, e.point_mass.radius_max};
            s->get("radius_range", r);
            e.point_mass.radius_min = r[0];
            e.point_mass.radius_max = r[1];
            s->get("start_spread", e.point_mass.start_spread);
            if (auto t = s->child("task"))
                read_circle_task(*t, e.point_mass.base_task);
        } else {
            s->get("start_x", e.unicycle.start_x);
            s->get("lead_in", e.unicycle.lead_in);
            s->get("start_y_spread", e.unicycle.start_y_spread);
            s->get("start_heading_spread", e.unicycle.start_heading_spread);
            s->get("bidirectional", e.unicycle.bidirectional);
            if (auto t = s->child("task"))
                read_goal_task(*t, e.unicycle.base_task);
        }
        s->finish();
    }

    if (auto s = top.child("sampling")) {
        auto& sm = c.sampling;
        s->get("epsilon_ball", sm.regions.epsilon_ball);
        s->get("sigma_band", sm.regions.sigma_band);
        s->get("buffer_width", sm.regions.buffer_width);
        s->get("p_norm", sm.regions.p_norm);
        if (auto q = s->child("quotas")) {
            q->get("safe", sm.quotas.safe);
            q->get("unsafe", sm.quotas.unsafe);
            q->get("expert", sm.quotas.expert);
            q->get("buffer", sm.quotas.buffer);
            q->finish();
        }
        s->get("radius_max", sm.radius_max);
        s->get("third_range", sm.third_range);
        s->get("global_fraction", sm.global_fraction);
        s->get("max_attempts_per_point", sm.max_attempts_per_point);
        s->get("buffer_speed", sm.buffer_speed);
        s->get("calib_fraction", sm.calib_fraction);
        s->finish();
    }

    if (auto s = top.child("train")) {
        auto& t = c.train;
        s->get("hidden_layers", t.hidden_layers);
        std::string name;
        s->get("activation", name);
        if (!name.empty())
            t.activation = activation_from_string(name);
        name.clear();
        s->get("optimizer", name);
        if (!name.empty())
            t.optimizer = optimizer_from_string(name);
        s->get("learning_rate", t.learning_rate);
        s->get("momentum", t.momentum);
        s->get("max_epochs_per_stage", t.max_epochs_per_stage);
        s->get("batch_size", t.batch_size);
        if (auto w = s->child("loss_weights")) {
            w->get("safe", t.loss_weights.safe);
            w->get("unsafe", t.loss_weights.unsafe);
            w->get("deriv", t.loss_weights.deriv);
            w->finish();
        }
        s->get("loss_tolerance", t.loss_tolerance);
        s->get("max_calibration_rounds", t.max_calibration_rounds);
        s->get("kappa_gain", t.kappa_gain);
        s->get("lipschitz_probe_radius", t.lipschitz_probe_radius);
        s->get("lipschitz_probes", t.lipschitz_probes);
        s->finish();
    }

    if (top.has("fm_margins")) {
        std::vector<double> m;
        top.get("fm_margins", m);
        if (m.size() != 3)
            throw ConfigError("fm_margins", "expected [gamma_s, gamma_u, gamma_d]");
        c.fm_margins = {m[0], m[1], m[2]};
    }

    if (auto s = top.child("conformal")) {
        s->get("alpha", c.conformal.alpha);
        s->get("m", c.conformal.m);
        s->get("violation_level", c.conformal.violation_level);
        s->get("confidence_beta", c.conformal.confidence_beta);
        s->finish();
    }

    if (auto s = top.child("evaluation")) {
        auto& ev = c.evaluation;
        s->get("horizon_steps", ev.rollout.horizon_steps);
        s->get("dt", ev.rollout.dt);
        s->get("kappa_gain", ev.rollout.kappa_gain);
        s->get("saved_trajectories", ev.saved_trajectories);
        if (kind == SystemKind::PointMass) {
            s->get("radii", ev.radii);
            s->get("rollouts_per_radius", ev.sweep.rollouts_per_radius);
            s->get("start_spread", ev.sweep.start_spread);
            if (auto t = s->child("task"))
                read_circle_task(*t, ev.sweep.base_task);
        } else {
            s->get("n_rollouts", ev.n_rollouts);
            s->get("start_x", ev.unicycle.start_x);
            s->get("start_y_spread", ev.unicycle.start_y_spread);
            s->get("start_heading_spread", ev.unicycle.start_heading_spread);
            s->get("bidirectional", ev.unicycle.bidirectional);
            if (auto t = s->child("task"))
                read_goal_task(*t, ev.unicycle.base_task);
        }
        if (const json* sj = s->raw("surface")) {
            if (sj->is_null()) {
                ev.surface.reset();
            } else {
                Section g(*sj, "evaluation.surface");
                SurfaceGrid grid = ev.surface.value_or(SurfaceGrid{});
                std::array<double, 2> xr{grid.x_lo, grid.x_hi}, yr{grid.y_lo, grid.y_hi};
                g.get("x_range", xr);
                g.get("y_range", yr);
                g.get("resolution", grid.resolution);
                g.get("theta_slices", grid.theta_slices);
                g.finish();
                grid.x_lo = xr[0];
                grid.x_hi = xr[1];
                grid.y_lo = yr[0];
                grid.y_hi = yr[1];
                ev.surface = grid;
            }
        }
        s->finish();
    }

    top.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    return parse_run_config(io::read_text(path));
}

namespace {

ojson config_to_json(const RunConfig& c, bool with_output_dir)
{
    ojson j;
    ojson sys;
    sys["kind"] = to_string(c.system);
    if (c.system == SystemKind::PointMass) {
        sys["delta"] = c.point_mass.delta;
    } else {
        sys["radius"] = c.unicycle.radius;
        sys["safe_distance"] = c.unicycle.safe_distance;
    }
    j["system"] = sys;
    j["seed"] = c.seed;

    const auto& e = c.experts;
    ojson ej;
    ej["n_trajectories"] = e.n_trajectories;
    ej["horizon_steps"] = e.horizon_steps;
    ej["dt"] = e.dt;
    ej["record_stride"] = e.record_stride;
    ej["margin"] = e.expert.margin;
    ej["kappa_gain"] = e.expert.kappa_gain;
    if (c.system == SystemKind::PointMass) {
        ej["radius_range"] = {e.point_mass.radius_min, e.point_mass.radius_max};
        ej["start_spread"] = e.point_mass.start_spread;
        ej["task"] = circle_task_json(e.point_mass.base_task);
    } else {
        ej["start_x"] = e.unicycle.start_x;
        ej["lead_in"] = e.unicycle.lead_in;
        ej["start_y_spread"] = e.unicycle.start_y_spread;
        ej["start_heading_spread"] = e.unicycle.start_heading_spread;
        ej["bidirectional"] = e.unicycle.bidirectional;
        ej["task"] = goal_task_json(e.unicycle.base_task);
    }
    j["experts"] = ej;

    const auto& s = c.sampling;
    ojson sj;
    sj["epsilon_ball"] = s.regions.epsilon_ball;
    sj["sigma_band"] = s.regions.sigma_band;
    sj["buffer_width"] = s.regions.buffer_width;
    sj["p_norm"] = s.regions.p_norm;
    sj["quotas"] = {{"safe", s.quotas.safe}, {"unsafe", s.quotas.unsafe}, {"expert", s.quotas.expert},
                    {"buffer", s.quotas.buffer}};
    sj["radius_max"] = s.radius_max;
    if (s.third_range)
        sj["third_range"] = {(*s.third_range)[0], (*s.third_range)[1]};
    else
        sj["third_range"] = nullptr;
    sj["global_fraction"] = s.global_fraction;
    sj["max_attempts_per_point"] = s.max_attempts_per_point;
    sj["buffer_speed"] = s.buffer_speed;
    sj["calib_fraction"] = s.calib_fraction;
    j["sampling"] = sj;

    const auto& t = c.train;
    ojson tj;
    tj["hidden_layers"] = t.hidden_layers;
    tj["activation"] = to_string(t.activation);
    tj["optimizer"] = to_string(t.optimizer);
    tj["learning_rate"] = t.learning_rate;
    tj["momentum"] = t.momentum;
    tj["max_epochs_per_stage"] = t.max_epochs_per_stage;
    tj["batch_size"] = t.batch_size;
    tj["loss_weights"] = {{"safe", t.loss_weights.safe}, {"unsafe", t.loss_weights.unsafe},
                          {"deriv", t.loss_weights.deriv}};
    tj["loss_tolerance"] = t.loss_tolerance;
    tj["max_calibration_rounds"] = t.max_calibration_rounds;
    tj["kappa_gain"] = t.kappa_gain;
    tj["lipschitz_probe_radius"] = t.lipschitz_probe_radius;
    tj["lipschitz_probes"] = t.lipschitz_probes;
    j["train"] = tj;

    j["fm_margins"] = {c.fm_margins.gamma_s, c.fm_margins.gamma_u, c.fm_margins.gamma_d};
    j["conformal"] = {{"alpha", c.conformal.alpha},
                      {"m", c.conformal.m},
                      {"violation_level", c.conformal.violation_level},
                      {"confidence_beta", c.conformal.confidence_beta}};

    const auto& ev = c.evaluation;
    ojson vj;
    vj["horizon_steps"] = ev.rollout.horizon_steps;
    vj["dt"] = ev.rollout.dt;
    vj["kappa_gain"] = ev.rollout.kappa_gain;
    vj["saved_trajectories"] = ev.saved_trajectories;
    if (c.system == SystemKind::PointMass) {
        vj["radii"] = ev.radii;
        vj["rollouts_per_radius"] = ev.sweep.rollouts_per_radius;
        vj["start_spread"] = ev.sweep.start_spread;
        vj["task"] = circle_task_json(ev.sweep.base_task);
    } else {
        vj["n_rollouts"] = ev.n_rollouts;
        vj["start_x"] = ev.unicycle.start_x;
        vj["start_y_spread"] = ev.unicycle.start_y_spread;
        vj["start_heading_spread"] = ev.unicycle.start_heading_spread;
        vj["bidirectional"] = ev.unicycle.bidirectional;
        vj["task"] = goal_task_json(ev.unicycle.base_task);
    }
    if (ev.surface) {
        const auto& g = *ev.surface;
        vj["surface"] = {{"x_range", {g.x_lo, g.x_hi}},
                         {"y_range", {g.y_lo, g.y_hi}},
                         {"resolution", g.resolution},
                         {"theta_slices", g.theta_slices}};
    } else {
        vj["surface"] = nullptr;
    }
    j["evaluation"] = vj;
    if (with_output_dir)
        j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace

std::string run_config_json(const RunConfig& config)
{
    return config_to_json(config, true).dump(2) + "\n";
}

std::string run_id(const RunConfig& config)
{
    const std::string text = config_to_json(config, false).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cped
