#include "cped/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cped/errors.hpp"

namespace cped {

void RegionSpec::validate() const
{
    if (!(epsilon_ball > 0.0))
        throw ConfigError("sampling.epsilon_ball", "must be > 0");
    if (!(sigma_band > 0.0))
        throw ConfigError("sampling.sigma_band", "must be > 0");
    if (!(buffer_width > 0.0))
        throw ConfigError("sampling.buffer_width", "must be > 0");
    if (!(p_norm >= 1.0))
        throw ConfigError("sampling.p_norm", "must be >= 1");
}

std::string to_string(Region r)
{
    switch (r) {
    case Region::Safe: return "safe";
    case Region::Unsafe: return "unsafe";
    case Region::Expert: return "expert";
    case Region::Buffer: return "buffer";
    }
    return "?";
}

Region region_from_string(const std::string& name)
{
    if (name == "safe")
        return Region::Safe;
    if (name == "unsafe")
        return Region::Unsafe;
    if (name == "expert")
        return Region::Expert;
    if (name == "buffer")
        return Region::Buffer;
    throw InvalidInput("unknown region '" + name + "'");
}

std::size_t LabeledDataset::region_size(Region r) const
{
    switch (r) {
    case Region::Safe: return safe_points.size();
    case Region::Unsafe: return unsafe_points.size();
    case Region::Expert: return expert_points.size();
    case Region::Buffer: return buffer_points.size();
    }
    return 0;
}

int LabeledDataset::state_dim() const
{
    if (!safe_points.empty())
        return static_cast<int>(safe_points.front().size());
    if (!unsafe_points.empty())
        return static_cast<int>(unsafe_points.front().size());
    if (!expert_points.empty())
        return static_cast<int>(expert_points.front().state.size());
    if (!buffer_points.empty())
        return static_cast<int>(buffer_points.front().state.size());
    return 0;
}

bool LabeledDataset::operator==(const LabeledDataset& o) const
{
    auto same_records = [](const std::vector<ExpertRecord>& a, const std::vector<ExpertRecord>& b) {
        if (a.size() != b.size())
            return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].state != b[i].state || a[i].control != b[i].control)
                return false;
        return true;
    };
    return safe_points == o.safe_points && unsafe_points == o.unsafe_points &&
           same_records(expert_points, o.expert_points) && same_records(buffer_points, o.buffer_points);
}

// ---------------------------------------------------------------------------

ExpertData generate_expert_trajectories(const SystemModel& model, const EpisodeSampler& sampler, int n_traj,
                                        int horizon, double dt, std::uint64_t rng_seed, int record_stride)
{
    if (n_traj <= 0 || horizon <= 0)
        throw InvalidInput("generate_expert_trajectories: n_traj and horizon must be positive");
    if (record_stride <= 0)
        throw InvalidInput("generate_expert_trajectories: record_stride must be positive");
    ExpertData out;
    Rng rng(rng_seed);
    for (int k = 0; k < n_traj; ++k) {
        ExpertEpisode episode = sampler(k, rng);
        Vec x = episode.initial_state;
        for (int step = 0; step < horizon; ++step) {
            const double t = step * dt;
            std::optional<Vec> u = episode.policy(x, t);
            if (!u) {
                ++out.skipped_infeasible;
                break;
            }
            if (step % record_stride == 0) {
                if (model.safety_value(x) > 0.0)
                    out.records.push_back({x, *u});
                else
                    ++out.dropped_outside;
            }
            x = rk4_step(model, x, *u, dt);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

double p_distance(const Vec& a, const Vec& b, double p)
{
    if (p == 2.0)
        return (a - b).norm();
    if (std::isinf(p))
        return (a - b).cwiseAbs().maxCoeff();
    if (p == 1.0)
        return (a - b).cwiseAbs().sum();
    return std::pow((a - b).cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

double nearest_expert_distance(const Vec& x, const StateList& expert_states, double p)
{
    if (expert_states.empty())
        throw InvalidInput("nearest_expert_distance: no expert states");
    double best = std::numeric_limits<double>::infinity();
    if (p == 2.0) {
        for (const Vec& e : expert_states)
            best = std::min(best, (x - e).squaredNorm());
        return std::sqrt(best);
    }
    for (const Vec& e : expert_states)
        best = std::min(best, p_distance(x, e, p));
    return best;
}

bool membership_D(const Vec& x, const StateList& expert_states, const RegionSpec& spec)
{
    return nearest_expert_distance(x, expert_states, spec.p_norm) < spec.epsilon_ball;
}

bool membership_N(const Vec& x, const StateList& expert_states, const RegionSpec& spec)
{
    const double d = nearest_expert_distance(x, expert_states, spec.p_norm);
    return d >= spec.epsilon_ball && d <= spec.epsilon_ball + spec.sigma_band;
}

// ---------------------------------------------------------------------------

namespace {

// Uniform direction on the unit p-sphere (normalised Gaussian, rescaled).
Vec random_direction(Rng& rng, int n, double p)
{
    Vec d(n);
    do {
        for (int i = 0; i < n; ++i)
            d[i] = rng.normal();
    } while (d.norm() == 0.0);
    return d / p_distance(d, Vec::Zero(n), p);
}

Vec global_candidate(Rng& rng, const SamplingDomain& domain, int n)
{
    Vec x = domain.center;
    const double rho = domain.radius_max * rng.uniform();
    const double phi = rng.uniform(-M_PI, M_PI);
    x[0] += rho * std::cos(phi);
    x[1] += rho * std::sin(phi);
    if (n >= 3)
        x[2] = rng.uniform(domain.third_lo, domain.third_hi);
    return x;
}

std::size_t nearest_index(const Vec& x, const StateList& states)
{
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double d = (x - states[i]).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

Vec buffer_control(const SystemModel& model, const Vec& x, const Vec& target, double speed)
{
    Vec dir = target - x;
    const double len = dir.norm();
    Vec desired = len > 0.0 ? Vec(speed * dir / len) : Vec(Vec::Zero(x.size()));
    const Mat g = model.actuation(x);
    return g.completeOrthogonalDecomposition().solve(desired - model.drift(x));
}

}  // namespace

LabeledDataset radial_sample(const SystemModel& model, const RegionQuotas& quotas, const RegionSpec& spec,
                             const std::vector<ExpertRecord>& expert_records, const SamplingDomain& domain,
                             std::uint64_t rng_seed)
{
    spec.validate();
    if (quotas.safe <= 0 || quotas.unsafe <= 0 || quotas.expert <= 0 || quotas.buffer < 0)
        throw InvalidInput("radial_sample: region quotas must be positive");
    if (expert_records.empty())
        throw SamplingExhausted("expert", "radial_sample: no expert records available");
    const int n = model.state_dim;
    if (domain.center.size() != n)
        throw ShapeError("radial_sample: sampling center dimension mismatch");

    StateList expert_states;
    expert_states.reserve(expert_records.size());
    for (const auto& r : expert_records)
        expert_states.push_back(r.state);

    LabeledDataset out;
    out.split_seed = rng_seed;

    // X_d: a subsample of the demonstrations without replacement.
    {
        if (static_cast<std::size_t>(quotas.expert) > expert_records.size())
            throw SamplingExhausted("expert", "radial_sample: expert quota " + std::to_string(quotas.expert) +
                                                  " exceeds the " + std::to_string(expert_records.size()) +
                                                  " available demonstration records");
        Rng rng(derive_seed(rng_seed, 2));
        std::vector<std::size_t> idx(expert_records.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(quotas.expert); ++i)
            std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
        idx.resize(quotas.expert);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx)
            out.expert_points.push_back(expert_records[i]);
    }

    const double eps = spec.epsilon_ball;
    const double sigma = spec.sigma_band;
    const double w = spec.buffer_width;

    auto fill = [&](Region region, int quota, auto radius_draw, auto accept, auto emit) {
        Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(region)));
        const long max_attempts = static_cast<long>(domain.max_attempts_per_point) * quota;
        long attempts = 0;
        int accepted = 0;
        while (accepted < quota) {
            if (++attempts > max_attempts)
                throw SamplingExhausted(to_string(region),
                                        "radial_sample: region '" + to_string(region) + "' starved after " +
                                            std::to_string(max_attempts) + " candidates (" +
                                            std::to_string(accepted) + "/" + std::to_string(quota) +
                                            " accepted)");
            Vec cand;
            if (rng.uniform() < domain.global_fraction) {
                cand = global_candidate(rng, domain, n);
            } else {
                const Vec& anchor = expert_states[rng.index(expert_states.size())];
                cand = anchor + radius_draw(rng) * random_direction(rng, n, spec.p_norm);
            }
            const double d = nearest_expert_distance(cand, expert_states, spec.p_norm);
            if (!accept(d))
                continue;
            emit(cand);
            ++accepted;
        }
    };

    fill(
        Region::Safe, quotas.safe,
        [&](Rng& rng) { return eps * std::pow(rng.uniform(), 1.0 / n); },
        [&](double d) { return d < eps; },
        [&](const Vec& x) { out.safe_points.push_back(x); });

    fill(
        Region::Unsafe, quotas.unsafe, [&](Rng& rng) { return eps + sigma * rng.uniform(); },
        [&](double d) { return d >= eps && d <= eps + sigma; },
        [&](const Vec& x) { out.unsafe_points.push_back(x); });

    if (quotas.buffer > 0) {
        const double lo = std::max(0.0, eps - 0.5 * w);
        const double hi = eps + 0.5 * w;
        fill(
            Region::Buffer, quotas.buffer, [&](Rng& rng) { return rng.uniform(lo, hi); },
            [&](double d) { return d >= lo && d <= hi; },
            [&](const Vec& x) {
                const Vec& target = expert_states[nearest_index(x, expert_states)];
                out.buffer_points.push_back({x, buffer_control(model, x, target, domain.buffer_speed)});
            });
    }
    return out;
}

StateList refine_safe_points(const StateList& safe_points, const StateList& unsafe_points, double lipschitz,
                             double gamma_s, double gamma_u, double p)
{
    if (!(lipschitz > 0.0) || unsafe_points.empty())
        return safe_points;
    const double min_gap = (gamma_s + gamma_u) / lipschitz;
    StateList kept;
    for (const Vec& x : safe_points)
        if (nearest_expert_distance(x, unsafe_points, p) >= min_gap)
            kept.push_back(x);
    return kept;
}

// ---------------------------------------------------------------------------

double estimate_lipschitz(const BarrierNet& net, const StateList& region_points, double probe_radius,
                          int probes_per_point, std::uint64_t rng_seed, double p)
{
    if (region_points.empty())
        throw InvalidInput("estimate_lipschitz: no region points");
    if (!(probe_radius > 0.0))
        throw InvalidInput("estimate_lipschitz: probe_radius must be positive");
    double best = 0.0;
    for (std::size_t i = 0; i < region_points.size(); ++i) {
        const Vec& x = region_points[i];
        const int n = static_cast<int>(x.size());
        const double hx = net.forward(x);
        Rng rng(derive_seed(rng_seed, i));
        for (int k = 0; k < probes_per_point; ++k) {
            const Vec dir = random_direction(rng, n, p);
            const double r = probe_radius * rng.uniform();
            if (r <= 0.0)
                continue;
            const Vec xp = x + r * dir;
            const double dist = p_distance(x, xp, p);
            if (dist <= 0.0)
                continue;
            best = std::max(best, std::abs(net.forward(xp) - hx) / dist);
        }
    }
    return 1.5 * best;
}

NetConditionReport check_net_condition(const StateList& safe_points, double lipschitz, double gamma_s, double p)
{
    NetConditionReport r;
    r.lipschitz_estimate = lipschitz;
    r.required_gap = lipschitz > 0.0 ? gamma_s / lipschitz : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < safe_points.size(); ++i) {
        double nn = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < safe_points.size(); ++j)
            if (j != i)
                nn = std::min(nn, p_distance(safe_points[i], safe_points[j], p));
        if (std::isfinite(nn))
            r.max_nn_gap = std::max(r.max_nn_gap, nn);
    }
    r.satisfied = r.max_nn_gap <= r.required_gap;
    return r;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void partition(const std::vector<T>& items, const std::vector<std::size_t>& calib_idx, std::vector<T>& train,
               std::vector<T>& calib, std::vector<std::size_t>& train_idx)
{
    std::vector<bool> is_calib(items.size(), false);
    for (std::size_t i : calib_idx) {
        if (i >= items.size())
            throw InvalidSplit("calibration index out of range");
        if (is_calib[i])
            throw InvalidSplit("duplicate calibration index");
        is_calib[i] = true;
    }
    train_idx.clear();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (is_calib[i]) {
            calib.push_back(items[i]);
        } else {
            train.push_back(items[i]);
            train_idx.push_back(i);
        }
    }
}

}  // namespace

DatasetSplit split_from_indices(const LabeledDataset& dataset,
                                const std::array<std::vector<std::size_t>, 4>& calib_indices)
{
    DatasetSplit out;
    out.train.split_seed = dataset.split_seed;
    out.calib.split_seed = dataset.split_seed;
    out.calib_indices = calib_indices;
    for (auto& v : out.calib_indices)
        std::sort(v.begin(), v.end());
    partition(dataset.safe_points, out.calib_indices[0], out.train.safe_points, out.calib.safe_points,
              out.train_indices[0]);
    partition(dataset.unsafe_points, out.calib_indices[1], out.train.unsafe_points, out.calib.unsafe_points,
              out.train_indices[1]);
    partition(dataset.expert_points, out.calib_indices[2], out.train.expert_points, out.calib.expert_points,
              out.train_indices[2]);
    partition(dataset.buffer_points, out.calib_indices[3], out.train.buffer_points, out.calib.buffer_points,
              out.train_indices[3]);
    return out;
}

DatasetSplit split(const LabeledDataset& dataset, double calib_fraction, std::uint64_t rng_seed)
{
    if (!(calib_fraction > 0.0 && calib_fraction < 1.0))
        throw InvalidSplit("calibration fraction must lie in (0, 1)");
    std::array<std::vector<std::size_t>, 4> calib;
    const Region regions[4] = {Region::Safe, Region::Unsafe, Region::Expert, Region::Buffer};
    for (int r = 0; r < 4; ++r) {
        const std::size_t n = dataset.region_size(regions[r]);
        if (regions[r] == Region::Buffer && n == 0)
            continue;
        if (n < 2)
            throw InvalidSplit("region '" + to_string(regions[r]) + "' has " + std::to_string(n) +
                               " points; at least 2 are needed to split");
        std::size_t n_cal = static_cast<std::size_t>(std::lround(calib_fraction * static_cast<double>(n)));
        n_cal = std::clamp<std::size_t>(n_cal, 1, n - 1);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(derive_seed(rng_seed, 100 + r));
        for (std::size_t i = 0; i < n_cal; ++i)
            std::swap(idx[i], idx[i + rng.index(n - i)]);
        idx.resize(n_cal);
        calib[r] = std::move(idx);
    }
    return split_from_indices(dataset, calib);
}

}  // namespace cped
