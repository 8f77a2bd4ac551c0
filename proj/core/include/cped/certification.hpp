#pragma once

#include <array>
#include <string>
#include <vector>

#include "cped/dynamics.hpp"
#include "cped/mlp.hpp"
#include "cped/sampling.hpp"

namespace cped {

/// Robustness margins [gamma_s, gamma_u, gamma_d].
struct MarginVector {
    double gamma_s = 0.0;
    double gamma_u = 0.0;
    double gamma_d = 0.0;

    double& operator[](int k) { return k == 0 ? gamma_s : (k == 1 ? gamma_u : gamma_d); }
    double operator[](int k) const { return k == 0 ? gamma_s : (k == 1 ? gamma_u : gamma_d); }
    double sum() const { return gamma_s + gamma_u + gamma_d; }
    bool operator==(const MarginVector&) const = default;
};

struct LossWeights {
    double safe = 1.0;
    double unsafe = 1.0;
    double deriv = 1.0;
};

struct ConformalConfig {
    double alpha = 0.1;            // miscoverage budget shared by the m constraint sets
    int m = 3;
    double violation_level = 0.1;  // epsilon in P(q <= q_hat) >= 1 - epsilon
    double confidence_beta = 0.05;

    void validate() const;
};

// Linear class-K function kappa(h) = gain * h.
inline double kappa(double h, double gain) { return gain * h; }

// Constraint scores; negative means the constraint holds with slack.
double score_q1(const BarrierNet& net, const Vec& x);  // -h(x), safe set
double score_q2(const BarrierNet& net, const Vec& x);  // +h(x), unsafe set
// -<grad h(x), f(x) + g(x) u> - kappa(h(x)), derivative set
double score_q3(const BarrierNet& net, const SystemModel& model, const Vec& x, const Vec& u, double kappa_gain);

/// Derivative-constraint sample with its closed-loop velocity f(x) + g(x) u
/// precomputed (it does not depend on the network).
struct DerivativeSample {
    Vec state;
    Vec velocity;
};

/// Dataset laid out for loss evaluation; expert and buffer records both feed
/// the derivative constraint.
struct PreparedData {
    StateList safe;
    StateList unsafe;
    std::vector<DerivativeSample> deriv;
};

PreparedData prepare(const SystemModel& model, const LabeledDataset& data);

struct LossResult {
    double total = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
    ParamGrads grads;
};

/// Weighted hinge losses on the index subsets of each region (means over
/// the subset; an empty subset contributes 0), with exact parameter
/// gradients when `with_grads` is set. The hinge subgradient at the kink is 0.
LossResult batch_loss(const BarrierNet& net, const PreparedData& data, const std::vector<std::size_t>& safe_idx,
                      const std::vector<std::size_t>& unsafe_idx, const std::vector<std::size_t>& deriv_idx,
                      const MarginVector& margins, const LossWeights& weights, double kappa_gain, bool with_grads);

/// L = ls * mean_s max(0, q1 + gs) + lu * mean_u max(0, q2 + gu)
///   + ld * mean_d max(0, q3 + gd), over the whole dataset. Throws
/// InvalidInput if a region is empty.
LossResult total_loss(const BarrierNet& net, const LabeledDataset& data, const MarginVector& margins,
                      const LossWeights& weights, const SystemModel& model, double kappa_gain);

struct QuantileResult {
    double q_hat = 0.0;
    int l = 0;
};

/// l = floor((N + 1) alpha / m); returns the l-th largest score.
/// Throws InsufficientCalibration when l == 0 or l > N.
QuantileResult conformal_quantile(const std::vector<double>& scores, double alpha, int m);

int quantile_index(std::size_t n, double alpha, int m);

/// Regularized incomplete beta function I_x(a, b) via Lentz's continued
/// fraction, to ~1e-14 absolute.
double reg_incomplete_beta(double x, double a, double b);

struct ValidityResult {
    bool valid = false;
    double beta_value = 0.0;
    int l = 0;
};

/// beta_value = I_{1 - violation}(N - l + 1, l); valid iff beta_value <= confidence_beta.
ValidityResult validity_check(std::size_t n_calib, double alpha, int m, double violation_level,
                              double confidence_beta);

/// Smallest violation level epsilon for which validity_check passes.
double min_violation_level(std::size_t n_calib, double alpha, int m, double confidence_beta);

struct RegionCalibration {
    std::string region;
    std::size_t n = 0;
    int l = 0;
    double q_hat = 0.0;
    double beta_value = 0.0;
    bool valid = false;
};

struct CalibrationReport {
    std::array<RegionCalibration, 3> regions;  // safe, unsafe, deriv
    ConformalConfig config;
    MarginVector q_hat;
    MarginVector proposed_margins;  // max(0, q_hat)
    double beta_value = 0.0;        // worst region
    bool valid = false;             // all regions valid

    bool all_nonpositive() const { return q_hat.gamma_s <= 0.0 && q_hat.gamma_u <= 0.0 && q_hat.gamma_d <= 0.0; }
};

struct RegionScores {
    std::vector<double> safe;
    std::vector<double> unsafe;
    std::vector<double> deriv;
};

RegionScores region_scores(const BarrierNet& net, const LabeledDataset& data, const SystemModel& model,
                           double kappa_gain);

CalibrationReport calibrate_scores(const RegionScores& scores, const ConformalConfig& config);

CalibrationReport calibrate(const BarrierNet& net, const LabeledDataset& calib_data, const SystemModel& model,
                            double kappa_gain, const ConformalConfig& config);

}  // namespace cped
