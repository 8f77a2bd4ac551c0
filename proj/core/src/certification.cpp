#include "cped/certification.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cped/errors.hpp"

namespace cped {

void ConformalConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("conformal.alpha", "must lie in (0, 1)");
    if (m <= 0)
        throw ConfigError("conformal.m", "must be positive");
    if (!(violation_level > 0.0 && violation_level < 1.0))
        throw ConfigError("conformal.violation_level", "must lie in (0, 1)");
    if (!(confidence_beta > 0.0 && confidence_beta < 1.0))
        throw ConfigError("conformal.confidence_beta", "must lie in (0, 1)");
}

double score_q1(const BarrierNet& net, const Vec& x)
{
    return -net.forward(x);
}

double score_q2(const BarrierNet& net, const Vec& x)
{
    return net.forward(x);
}

double score_q3(const BarrierNet& net, const SystemModel& model, const Vec& x, const Vec& u, double kappa_gain)
{
    if (x.size() != model.state_dim || u.size() != model.control_dim)
        throw ShapeError("score_q3: state/control dimension mismatch");
    const BarrierEval e = net.evaluate(x, model.dynamics(x, u));
    return -e.directional - kappa(e.value, kappa_gain);
}

PreparedData prepare(const SystemModel& model, const LabeledDataset& data)
{
    PreparedData out;
    out.safe = data.safe_points;
    out.unsafe = data.unsafe_points;
    out.deriv.reserve(data.expert_points.size() + data.buffer_points.size());
    for (const auto* records : {&data.expert_points, &data.buffer_points})
        for (const ExpertRecord& r : *records) {
            if (r.state.size() != model.state_dim || r.control.size() != model.control_dim)
                throw ShapeError("prepare: record dimension mismatch");
            out.deriv.push_back({r.state, model.dynamics(r.state, r.control)});
        }
    return out;
}

LossResult batch_loss(const BarrierNet& net, const PreparedData& data, const std::vector<std::size_t>& safe_idx,
                      const std::vector<std::size_t>& unsafe_idx, const std::vector<std::size_t>& deriv_idx,
                      const MarginVector& margins, const LossWeights& weights, double kappa_gain, bool with_grads)
{
    LossResult out;
    if (with_grads)
        out.grads = ParamGrads::zeros_like(net);
    const int n = net.input_dim();
    const Vec zero_dir = Vec::Zero(n);

    const double ws = weights.safe / static_cast<double>(safe_idx.size());
    for (std::size_t i : safe_idx) {
        const Vec& x = data.safe[i];
        const double slack = -net.forward(x) + margins.gamma_s;
        if (slack > 0.0) {
            out.l1 += slack;
            if (with_grads)
                net.accumulate_param_grad(x, zero_dir, -ws, 0.0, out.grads);
        }
    }
    if (!safe_idx.empty())
        out.l1 /= static_cast<double>(safe_idx.size());

    const double wu = weights.unsafe / static_cast<double>(unsafe_idx.size());
    for (std::size_t i : unsafe_idx) {
        const Vec& x = data.unsafe[i];
        const double slack = net.forward(x) + margins.gamma_u;
        if (slack > 0.0) {
            out.l2 += slack;
            if (with_grads)
                net.accumulate_param_grad(x, zero_dir, wu, 0.0, out.grads);
        }
    }
    if (!unsafe_idx.empty())
        out.l2 /= static_cast<double>(unsafe_idx.size());

    const double wd = weights.deriv / static_cast<double>(deriv_idx.size());
    for (std::size_t i : deriv_idx) {
        const DerivativeSample& s = data.deriv[i];
        const BarrierEval e = net.evaluate(s.state, s.velocity);
        const double slack = -e.directional - kappa(e.value, kappa_gain) + margins.gamma_d;
        if (slack > 0.0) {
            out.l3 += slack;
            if (with_grads)
                net.accumulate_param_grad(s.state, s.velocity, -wd * kappa_gain, -wd, out.grads);
        }
    }
    if (!deriv_idx.empty())
        out.l3 /= static_cast<double>(deriv_idx.size());

    out.total = weights.safe * out.l1 + weights.unsafe * out.l2 + weights.deriv * out.l3;
    return out;
}

LossResult total_loss(const BarrierNet& net, const LabeledDataset& data, const MarginVector& margins,
                      const LossWeights& weights, const SystemModel& model, double kappa_gain)
{
    const PreparedData prepared = prepare(model, data);
    if (prepared.safe.empty() || prepared.unsafe.empty() || prepared.deriv.empty())
        throw InvalidInput("total_loss: every region needs at least one point");
    auto all = [](std::size_t n) {
        std::vector<std::size_t> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = i;
        return v;
    };
    return batch_loss(net, prepared, all(prepared.safe.size()), all(prepared.unsafe.size()),
                      all(prepared.deriv.size()), margins, weights, kappa_gain, true);
}

// ---------------------------------------------------------------------------

int quantile_index(std::size_t n, double alpha, int m)
{
    // The 1e-9 guard absorbs representation error in products such as
    // 1000 * 0.03 / 3, which must floor to 10.
    return static_cast<int>(std::floor((static_cast<double>(n) + 1.0) * alpha / m + 1e-9));
}

QuantileResult conformal_quantile(const std::vector<double>& scores, double alpha, int m)
{
    if (scores.empty())
        throw InsufficientCalibration("conformal_quantile: no calibration scores");
    if (m <= 0 || !(alpha > 0.0 && alpha < 1.0))
        throw InvalidInput("conformal_quantile: need alpha in (0,1) and m > 0");
    const int l = quantile_index(scores.size(), alpha, m);
    if (l < 1 || static_cast<std::size_t>(l) > scores.size())
        throw InsufficientCalibration("conformal_quantile: l = floor((N+1) alpha / m) = " + std::to_string(l) +
                                      " is outside [1, N] for N = " + std::to_string(scores.size()));
    std::vector<double> sorted = scores;
    std::nth_element(sorted.begin(), sorted.begin() + (l - 1), sorted.end(), std::greater<>());
    return {sorted[l - 1], l};
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double x, double a, double b)
{
    constexpr double tiny = 1e-300;
    constexpr double tol = 1e-16;
    constexpr int max_iter = 100000;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < tol)
            return h;
    }
    throw Error("reg_incomplete_beta: continued fraction failed to converge");
}

}  // namespace

double reg_incomplete_beta(double x, double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0) || !std::isfinite(a) || !std::isfinite(b))
        throw InvalidInput("reg_incomplete_beta: need x in [0,1], a > 0, b > 0");
    if (x == 0.0)
        return 0.0;
    if (x == 1.0)
        return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(x, a, b) / a;
    return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

ValidityResult validity_check(std::size_t n_calib, double alpha, int m, double violation_level,
                              double confidence_beta)
{
    if (!(violation_level > 0.0 && violation_level <= 1.0))
        throw InvalidInput("validity_check: violation level must lie in (0, 1]");
    const int l = quantile_index(n_calib, alpha, m);
    if (l < 1 || static_cast<std::size_t>(l) > n_calib)
        throw InsufficientCalibration("validity_check: l = " + std::to_string(l) + " is outside [1, N] for N = " +
                                      std::to_string(n_calib));
    const double n = static_cast<double>(n_calib);
    ValidityResult r;
    r.l = l;
    r.beta_value = reg_incomplete_beta(1.0 - violation_level, n - l + 1.0, static_cast<double>(l));
    r.valid = r.beta_value <= confidence_beta;
    return r;
}

double min_violation_level(std::size_t n_calib, double alpha, int m, double confidence_beta)
{
    double lo = 0.0;  // invalid side
    double hi = 1.0;  // I_0 = 0, always valid
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (validity_check(n_calib, alpha, m, mid, confidence_beta).valid)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

// ---------------------------------------------------------------------------

RegionScores region_scores(const BarrierNet& net, const LabeledDataset& data, const SystemModel& model,
                           double kappa_gain)
{
    RegionScores s;
    for (const Vec& x : data.safe_points)
        s.safe.push_back(score_q1(net, x));
    for (const Vec& x : data.unsafe_points)
        s.unsafe.push_back(score_q2(net, x));
    for (const auto* records : {&data.expert_points, &data.buffer_points})
        for (const ExpertRecord& r : *records)
            s.deriv.push_back(score_q3(net, model, r.state, r.control, kappa_gain));
    return s;
}

CalibrationReport calibrate_scores(const RegionScores& scores, const ConformalConfig& config)
{
    config.validate();
    CalibrationReport report;
    report.config = config;
    report.valid = true;
    const std::vector<double>* per_region[3] = {&scores.safe, &scores.unsafe, &scores.deriv};
    const char* names[3] = {"safe", "unsafe", "deriv"};
    for (int k = 0; k < 3; ++k) {
        const QuantileResult q = conformal_quantile(*per_region[k], config.alpha, config.m);
        const ValidityResult v = validity_check(per_region[k]->size(), config.alpha, config.m,
                                                config.violation_level, config.confidence_beta);
        RegionCalibration& rc = report.regions[k];
        rc.region = names[k];
        rc.n = per_region[k]->size();
        rc.l = q.l;
        rc.q_hat = q.q_hat;
        rc.beta_value = v.beta_value;
        rc.valid = v.valid;
        report.q_hat[k] = q.q_hat;
        report.proposed_margins[k] = std::max(0.0, q.q_hat);
        report.beta_value = std::max(report.beta_value, v.beta_value);
        report.valid = report.valid && v.valid;
    }
    return report;
}

CalibrationReport calibrate(const BarrierNet& net, const LabeledDataset& calib_data, const SystemModel& model,
                            double kappa_gain, const ConformalConfig& config)
{
    return calibrate_scores(region_scores(net, calib_data, model, kappa_gain), config);
}

}  // namespace cped
