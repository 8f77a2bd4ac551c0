#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cped/dynamics.hpp"
#include "cped/mlp.hpp"
#include "cped/random.hpp"
#include "cped/types.hpp"

namespace cped {

struct ExpertRecord {
    Vec state;
    Vec control;
};

/// Geometry of the labelled regions: D is the open union of epsilon_ball
/// balls around expert states, N is the sigma_band layer outside D, and the
/// buffer is a band of width buffer_width straddling the D/N transition.
struct RegionSpec {
    double epsilon_ball = 0.3;
    double sigma_band = 0.2;
    double buffer_width = 0.1;
    double p_norm = 2.0;

    void validate() const;
};

enum class Region { Safe, Unsafe, Expert, Buffer };

std::string to_string(Region r);
Region region_from_string(const std::string& name);

struct LabeledDataset {
    StateList safe_points;                  // X_s
    StateList unsafe_points;                // X_u
    std::vector<ExpertRecord> expert_points;  // X_d
    std::vector<ExpertRecord> buffer_points;
    std::uint64_t split_seed = 0;

    std::size_t total_size() const
    {
        return safe_points.size() + unsafe_points.size() + expert_points.size() + buffer_points.size();
    }
    std::size_t region_size(Region r) const;
    int state_dim() const;
    bool operator==(const LabeledDataset& other) const;
};

// ---------------------------------------------------------------------------
// Expert demonstrations

/// Returns the expert control at (x, t), or nullopt where the expert is
/// infeasible.
using ExpertPolicy = std::function<std::optional<Vec>(const Vec& x, double t)>;

struct ExpertEpisode {
    Vec initial_state;
    ExpertPolicy policy;
};

/// Builds episode `index`; draws any randomness from `rng`.
using EpisodeSampler = std::function<ExpertEpisode(int index, Rng& rng)>;

struct ExpertData {
    std::vector<ExpertRecord> records;
    int skipped_infeasible = 0;
    int dropped_outside = 0;
};

/// Rolls each episode forward for `horizon` steps of RK4 under its expert,
/// keeping every `record_stride`-th (x, u) pair whose state lies in int(S).
ExpertData generate_expert_trajectories(const SystemModel& model, const EpisodeSampler& sampler, int n_traj,
                                        int horizon, double dt, std::uint64_t rng_seed, int record_stride = 1);

// ---------------------------------------------------------------------------
// Region membership

double p_distance(const Vec& a, const Vec& b, double p);

/// min_i ||x - x_i||_p by brute force.
double nearest_expert_distance(const Vec& x, const StateList& expert_states, double p);

bool membership_D(const Vec& x, const StateList& expert_states, const RegionSpec& spec);
bool membership_N(const Vec& x, const StateList& expert_states, const RegionSpec& spec);

// ---------------------------------------------------------------------------
// Radial sampling

struct RegionQuotas {
    int safe = 0;
    int unsafe = 0;
    int expert = 0;
    int buffer = 0;
};

/// Global candidates are drawn in polar (2-D) or cylindrical (3-D: polar in
/// the first two coordinates, uniform third coordinate) coordinates around
/// `center`.
struct SamplingDomain {
    Vec center;
    double radius_max = 3.0;
    double third_lo = 0.0;
    double third_hi = 0.0;
    double global_fraction = 0.25;      // share of candidates from the global polar draw
    int max_attempts_per_point = 2000;
    double buffer_speed = 1.0;          // magnitude of the inward push for buffer controls
};

/// Boundary-focused radial sampling. Expert-region points are drawn from the
/// demonstration records; safe, unsafe and buffer candidates are mixed from
/// the global polar draw and from radial perturbations of expert states at
/// region-specific radii, then rejection-classified by membership_D /
/// membership_N. Buffer controls push the state back toward the nearest
/// expert state. Throws SamplingExhausted naming the starved region.
LabeledDataset radial_sample(const SystemModel& model, const RegionQuotas& quotas, const RegionSpec& spec,
                             const std::vector<ExpertRecord>& expert_records, const SamplingDomain& domain,
                             std::uint64_t rng_seed);

/// Keeps safe points at p-distance >= (gamma_s + gamma_u) / lipschitz from
/// every unsafe point.
StateList refine_safe_points(const StateList& safe_points, const StateList& unsafe_points, double lipschitz,
                             double gamma_s, double gamma_u, double p);

// ---------------------------------------------------------------------------
// Lipschitz estimation

/// 1.5 x max |h(x) - h(x')| / ||x - x'||_p over `probes_per_point` random
/// x' within `probe_radius` of each region point. Each point draws its probes
/// from its own stream, so more probes only extend the sampled set.
double estimate_lipschitz(const BarrierNet& net, const StateList& region_points, double probe_radius,
                          int probes_per_point, std::uint64_t rng_seed, double p = 2.0);

struct NetConditionReport {
    double lipschitz_estimate = 0.0;
    double max_nn_gap = 0.0;      // largest nearest-neighbour distance within X_s
    double required_gap = 0.0;    // gamma_s / L
    bool satisfied = false;
};

NetConditionReport check_net_condition(const StateList& safe_points, double lipschitz, double gamma_s, double p);

// ---------------------------------------------------------------------------
// Train / calibration split

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset calib;
    // Original indices per region, ordered as Safe, Unsafe, Expert, Buffer.
    std::array<std::vector<std::size_t>, 4> train_indices;
    std::array<std::vector<std::size_t>, 4> calib_indices;
};

/// Per-region disjoint partition with round(fraction * n) calibration
/// points; regions keep their original relative order. An empty buffer
/// region is allowed; every other region needs at least 2 points.
DatasetSplit split(const LabeledDataset& dataset, double calib_fraction, std::uint64_t rng_seed);

/// Rebuilds a split from stored calibration indices.
DatasetSplit split_from_indices(const LabeledDataset& dataset,
                                const std::array<std::vector<std::size_t>, 4>& calib_indices);

}  // namespace cped
