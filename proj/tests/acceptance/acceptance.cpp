// Acceptance suite: one PASS/FAIL line per criterion.
//
//   cped_acceptance            all criteria
//   cped_acceptance 1 3 6      a subset (7 needs 5 and 6)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "cped/certification.hpp"
#include "cped/config.hpp"
#include "cped/dynamics.hpp"
#include "cped/io.hpp"
#include "cped/mlp.hpp"
#include "cped/pipeline.hpp"
#include "cped/random.hpp"
#include "cped/safe_control.hpp"
#include "cped/training.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace cped;
using namespace cped::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kFormulaTol = 1e-9;
constexpr double kBetaTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kSecondOrderTol = 1e-3;
constexpr double kFdStep = 1e-5;
constexpr int kFormulaCases = 200;
constexpr int kGradNets = 50;
constexpr int kGradPoints = 20;
constexpr int kCoverageTrials = 200;
constexpr double kCoverageFraction = 0.90;
constexpr int kToySeeds = 10;
constexpr int kToyRequired = 8;
constexpr int kToyMaxRounds = 2;
constexpr double kRateGap = 3.0;
constexpr double kRateFloor = 95.0;
constexpr double kRadiusFloor = 1.5;
constexpr double kResidualTol = 1e-9;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Outcome {
    bool pass = false;
    std::string detail;
};

Vec random_vec(Rng& rng, int n, double r)
{
    Vec x(n);
    for (int i = 0; i < n; ++i)
        x(i) = rng.uniform(-r, r);
    return x;
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Rollout constraint residuals seen by 5 and 6, checked by 7.
struct ResidualLog {
    double min = std::numeric_limits<double>::infinity();
    long applied = 0;
    int rollouts = 0;

    void add(const Trajectory& t)
    {
        ++rollouts;
        for (double r : t.constraint_residuals) {
            min = std::min(min, r);
            ++applied;
        }
    }
};

// ---------------------------------------------------------------------------

Outcome formula_exactness()
{
    Rng rng(101);
    double worst = 0.0, worst_beta = 0.0;
    int cases = 0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    // conformal_quantile against sort-and-index
    for (int t = 0; t < kFormulaCases; ++t) {
        const int n = 30 + static_cast<int>(rng.index(500));
        const double alpha = rng.uniform(0.05, 0.5);
        const int m = 1 + static_cast<int>(rng.index(3));
        std::vector<double> s(n);
        for (double& v : s)
            v = rng.normal() * 3.0;
        const int l = static_cast<int>(std::floor((n + 1) * alpha / m));
        if (l < 1)
            continue;
        std::vector<double> sorted = s;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const QuantileResult q = conformal_quantile(s, alpha, m);
        track(std::abs(q.q_hat - sorted[l - 1]) + (q.l == l ? 0.0 : 1.0));
        ++cases;
    }

    // reg_incomplete_beta against Boost and the binomial tail
    for (int t = 0; t < kFormulaCases; ++t) {
        const double x = rng.uniform();
        const double a = rng.uniform(0.05, 400), b = rng.uniform(0.05, 400);
        worst_beta = std::max(worst_beta, std::abs(reg_incomplete_beta(x, a, b) - boost::math::ibeta(a, b, x)));
        const int ia = 1 + static_cast<int>(rng.index(300)), ib = 1 + static_cast<int>(rng.index(300));
        worst_beta = std::max(worst_beta, std::abs(reg_incomplete_beta(x, ia, ib) - binomial_tail(x, ia, ib)));
        cases += 2;
    }

    // validity_check against I_{1-eps}(N - l + 1, l) <= beta
    for (int t = 0; t < kFormulaCases; ++t) {
        const int n = 30 + static_cast<int>(rng.index(2000));
        const double alpha = rng.uniform(0.05, 0.4);
        const int l = static_cast<int>(std::floor((n + 1) * alpha / 3));
        if (l < 1)
            continue;
        const double eps = rng.uniform(0.01, 0.3), beta = rng.uniform(0.001, 0.2);
        const double ref = boost::math::ibeta(n - l + 1.0, static_cast<double>(l), 1.0 - eps);
        const ValidityResult v = validity_check(n, alpha, 3, eps, beta);
        worst_beta = std::max(worst_beta, std::abs(v.beta_value - ref));
        track((v.valid == (ref <= beta) || std::abs(ref - beta) < kBetaTol) && v.l == l ? 0.0 : 1.0);
        ++cases;
    }

    // scores and hinge losses against a dual-number evaluation
    const SystemModel pm = make_point_mass({});
    const SystemModel uni = make_unicycle({});
    for (int t = 0; t < kFormulaCases; ++t) {
        const SystemModel& model = t % 2 ? uni : pm;
        const int n = model.state_dim;
        const BarrierNet net = BarrierNet::initialized({n, 16, 16, 1}, Activation::Tanh, 7000 + t);
        const double kg = rng.uniform(0.2, 3.0);
        LabeledDataset d;
        for (int i = 0; i < 5; ++i) {
            d.safe_points.push_back(random_vec(rng, n, 3));
            d.unsafe_points.push_back(random_vec(rng, n, 3));
            d.expert_points.push_back({random_vec(rng, n, 3), random_vec(rng, model.control_dim, 2)});
        }
        d.buffer_points.push_back({random_vec(rng, n, 3), random_vec(rng, model.control_dim, 2)});
        const MarginVector g{rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0, 0.5)};
        const LossWeights w{rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3)};

        double l1 = 0, l2 = 0, l3 = 0;
        for (const Vec& x : d.safe_points) {
            const double q1 = -straight_line(net, x, Vec::Zero(n)).v;
            track(std::abs(score_q1(net, x) - q1));
            l1 += std::max(0.0, q1 + g.gamma_s);
        }
        for (const Vec& x : d.unsafe_points) {
            const double q2 = straight_line(net, x, Vec::Zero(n)).v;
            track(std::abs(score_q2(net, x) - q2));
            l2 += std::max(0.0, q2 + g.gamma_u);
        }
        std::vector<ExpertRecord> der = d.expert_points;
        der.push_back(d.buffer_points[0]);
        for (const ExpertRecord& r : der) {
            const Vec vel = model.drift(r.state) + model.actuation(r.state) * r.control;
            const Dual hv = straight_line(net, r.state, vel);
            const double q3 = -hv.d - kg * hv.v;
            track(std::abs(score_q3(net, model, r.state, r.control, kg) - q3));
            l3 += std::max(0.0, q3 + g.gamma_d);
        }
        l1 /= 5;
        l2 /= 5;
        l3 /= 6;
        const LossResult res = total_loss(net, d, g, w, model, kg);
        track(std::abs(res.l1 - l1));
        track(std::abs(res.l2 - l2));
        track(std::abs(res.l3 - l3));
        track(std::abs(res.total - (w.safe * l1 + w.unsafe * l2 + w.deriv * l3)));
        cases += 2;
    }

    // qp_filter against the KKT solution
    for (int t = 0; t < kFormulaCases; ++t) {
        const SystemModel& model = t % 2 ? uni : pm;
        const Vec x = random_vec(rng, model.state_dim, 3);
        const Vec u_ref = random_vec(rng, model.control_dim, 4);
        const double h = rng.uniform(-2, 2);
        const Vec grad = random_vec(rng, model.state_dim, 2);
        const double kg = rng.uniform(0.2, 3.0);
        const FilterResult f = qp_filter(h, grad, model, x, u_ref, kg);
        const Vec a = model.actuation(x).transpose() * grad;
        const double b = -grad.dot(model.drift(x)) - kg * h;
        const Vec ref = kkt_projection(a, b, u_ref);
        track((f.u - ref).lpNorm<Eigen::Infinity>());
        track(f.active == (a.dot(u_ref) < b) ? 0.0 : 1.0);
        ++cases;
    }

    std::ostringstream s;
    s << cases << " cases, max abs error " << fmt("%.2e", worst) << " (tol 1e-9), beta " << fmt("%.2e", worst_beta)
      << " (tol 1e-10)";
    return {worst <= kFormulaTol && worst_beta <= kBetaTol, s.str()};
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness()
{
    Rng rng(202);
    double worst_in = 0, worst_param = 0, worst_second = 0;
    long checks = 0;
    for (int k = 0; k < kGradNets; ++k) {
        const int n = k % 2 ? 3 : 2;
        BarrierNet net = BarrierNet::initialized({n, 32, 32, 1}, Activation::Tanh, 8000 + k);
        const Vec theta = net.parameters();
        for (int p = 0; p < kGradPoints; ++p) {
            const Vec x = random_vec(rng, n, 3);
            const Vec c = random_vec(rng, n, 1);

            const Vec g = net.grad_input(x);
            for (int i = 0; i < n; ++i) {
                Vec a = x, b = x;
                a(i) += kFdStep;
                b(i) -= kFdStep;
                worst_in = std::max(worst_in, rel_err(g(i), (net.forward(a) - net.forward(b)) / (2 * kFdStep)));
                ++checks;
            }

            // one weight per layer plus one bias per layer, chosen at random
            const Vec gp = grad_params(net, {x}, {1.0}).flatten();
            ParamGrads second = ParamGrads::zeros_like(net);
            net.accumulate_param_grad(x, c, 0.0, 1.0, second);
            const Vec gs = second.flatten();
            std::vector<Eigen::Index> idx;
            Eigen::Index offset = 0;
            for (int l = 0; l < net.num_layers(); ++l) {
                const Eigen::Index nw = net.weights()[l].size(), nb = net.biases()[l].size();
                idx.push_back(offset + static_cast<Eigen::Index>(rng.index(nw)));
                idx.push_back(offset + nw + static_cast<Eigen::Index>(rng.index(nb)));
                offset += nw + nb;
            }
            for (Eigen::Index j : idx) {
                Vec a = theta, b = theta;
                a(j) += kFdStep;
                b(j) -= kFdStep;
                net.set_parameters(a);
                const double fa = net.forward(x), da = net.grad_input(x).dot(c);
                net.set_parameters(b);
                const double fb = net.forward(x), db = net.grad_input(x).dot(c);
                net.set_parameters(theta);
                worst_param = std::max(worst_param, rel_err(gp(j), (fa - fb) / (2 * kFdStep)));
                worst_second = std::max(worst_second, rel_err(gs(j), (da - db) / (2 * kFdStep)));
                checks += 2;
            }
        }
    }
    std::ostringstream s;
    s << kGradNets << " nets x " << kGradPoints << " points, " << checks << " checks; max rel error input "
      << fmt("%.1e", worst_in) << ", params " << fmt("%.1e", worst_param) << " (tol 1e-4), second-order "
      << fmt("%.1e", worst_second) << " (tol 1e-3)";
    return {worst_in < kGradTol && worst_param < kGradTol && worst_second < kSecondOrderTol, s.str()};
}

// ---------------------------------------------------------------------------

Outcome conformal_coverage()
{
    const int n = 200;
    const double alpha = 0.15, beta = 0.05;
    const int m = 3;
    const double eps = min_violation_level(n, alpha, m, beta);
    Rng rng(303);
    int good = 0;
    for (int t = 0; t < kCoverageTrials; ++t) {
        std::vector<double> cal(n);
        for (double& v : cal)
            v = rng.normal();
        const double q = conformal_quantile(cal, alpha, m).q_hat;
        // exact test coverage of a fresh standard normal score
        const double coverage = 0.5 * std::erfc(-q / std::sqrt(2.0));
        good += coverage >= 1.0 - eps;
    }
    const double frac = static_cast<double>(good) / kCoverageTrials;
    std::ostringstream s;
    s << good << "/" << kCoverageTrials << " trials reach coverage >= 1 - eps (eps " << fmt("%.4f", eps)
      << "), fraction " << fmt("%.3f", frac) << " (need >= 0.90)";
    return {frac >= kCoverageFraction, s.str()};
}

// ---------------------------------------------------------------------------

Outcome algorithm_behavior()
{
    const SystemModel m = toy_model();
    ConformalConfig cc;
    int converged = 0;
    bool monotone = true;
    std::ostringstream rounds;
    for (int s = 0; s < kToySeeds; ++s) {
        const LabeledDataset train = toy_dataset(100, 40 + s);
        const LabeledDataset calib = toy_dataset(60, 400 + s);
        const TrainOutcome out = run_cped(train, calib, m, toy_train_config(s), cc);
        if (out.report.converged && out.report.rounds_used <= kToyMaxRounds)
            ++converged;
        for (std::size_t i = 1; i < out.report.stages.size(); ++i)
            for (int k = 0; k < 3; ++k)
                monotone = monotone && out.report.stages[i].margins[k] >= out.report.stages[i - 1].margins[k];
        rounds << (s ? "," : "") << out.report.rounds_used << (out.report.converged ? "" : "x");
    }
    std::ostringstream s;
    s << converged << "/" << kToySeeds << " seeds converge within " << kToyMaxRounds << " rounds (rounds "
      << rounds.str() << "), margins " << (monotone ? "nondecreasing" : "DECREASED");
    return {converged >= kToyRequired && monotone, s.str()};
}

// ---------------------------------------------------------------------------

struct PairResult {
    EvaluationSummary fm;
    EvaluationSummary cped;
    std::size_t train_size = 0;
};

PairResult run_pair(RunConfig c, ResidualLog& log)
{
    const GeneratedData data = generate_data(c);
    PairResult r;
    r.train_size = data.split.train.total_size();
    const auto sink = [&log](int, const Trajectory& t) { log.add(t); };
    const TrainOutcome fm = train_model(c, data.split, TrainMode::Fm);
    r.fm = evaluate_net(c, fm.net, "fm", sink);
    const TrainOutcome cp = train_model(c, data.split, TrainMode::Cped);
    r.cped = evaluate_net(c, cp.net, "cped", sink);
    return r;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Outcome unicycle_rates(ResidualLog& log)
{
    std::vector<double> fm, cp;
    std::size_t train = 0;
    for (std::uint64_t seed : kSeeds) {
        RunConfig c = default_run_config(SystemKind::Unicycle);
        c.seed = seed;
        const PairResult r = run_pair(c, log);
        train = r.train_size;
        fm.push_back(r.fm.safety->rate_percent);
        cp.push_back(r.cped.safety->rate_percent);
    }
    const double mf = median(fm), mc = median(cp);
    std::ostringstream s;
    s << train << " training samples, 100 rollouts, seeds 1-3: FM";
    for (double v : fm)
        s << " " << v;
    s << " / CPED";
    for (double v : cp)
        s << " " << v;
    s << "; median FM " << mf << "%, CPED " << mc << "% (need CPED >= FM + 3 and >= 95)";
    return {train == 1000 && mc >= mf + kRateGap && mc >= kRateFloor, s.str()};
}

// ---------------------------------------------------------------------------

RegionQuotas quotas_for(int train_size, double calib_fraction)
{
    const int full = static_cast<int>(train_size / (1.0 - calib_fraction));
    const int q = full * 3 / 10;
    return {q, q, q, full - 3 * q};
}

std::string radius_str(const std::optional<double>& r)
{
    return r ? fmt("%.1f", *r) : "none";
}

Outcome point_mass_radii(ResidualLog& log)
{
    bool ok = true;
    std::ostringstream s;
    for (int size : {390, 1430}) {
        s << (size == 390 ? "" : "; ") << size << ":";
        for (std::uint64_t seed : kSeeds) {
            RunConfig c = default_run_config(SystemKind::PointMass);
            c.seed = seed;
            c.sampling.quotas = quotas_for(size, c.sampling.calib_fraction);
            const PairResult r = run_pair(c, log);
            const double rf = r.fm.sweep->max_safe_radius.value_or(0.0);
            const double rc = r.cped.sweep->max_safe_radius.value_or(0.0);
            ok = ok && static_cast<int>(r.train_size) == size && rc >= rf;
            if (size == 1430)
                ok = ok && rc >= kRadiusFloor;
            s << " s" << seed << " FM " << radius_str(r.fm.sweep->max_safe_radius) << " CPED "
              << radius_str(r.cped.sweep->max_safe_radius);
        }
    }
    s << " (need CPED >= FM everywhere, CPED >= 1.5 at 1430)";
    return {ok, s.str()};
}

// ---------------------------------------------------------------------------

Outcome filter_guarantee(const ResidualLog& log)
{
    if (log.rollouts == 0)
        return {false, "no rollouts recorded (run together with criteria 5 and 6)"};
    std::ostringstream s;
    s << log.rollouts << " rollouts, " << log.applied << " filtered controls, min <a,u> - b = "
      << fmt("%.2e", log.min) << " (need >= -1e-9)";
    return {log.min >= -kResidualTol, s.str()};
}

// ---------------------------------------------------------------------------

Outcome reproducibility()
{
    const fs::path base = fs::temp_directory_path() / "cped_acceptance_repro";
    fs::remove_all(base);
    RunConfig c = default_run_config(SystemKind::PointMass);
    c.seed = 7;
    c.output_dir = (base / "a").string();
    const RunPaths a = run_paths(c);
    run_pipeline(c);
    c.output_dir = (base / "b").string();
    const RunPaths b = run_paths(c);
    run_pipeline(c);

    std::vector<std::string> differ;
    for (const fs::path& rel : {fs::path("dataset.csv"), fs::path("checkpoint_fm.json"),
                                fs::path("checkpoint_cped.json"), fs::path("report.json")}) {
        if (!fs::exists(a.root / rel) || io::read_text(a.root / rel) != io::read_text(b.root / rel))
            differ.push_back(rel.string());
    }
    std::ostringstream s;
    s << "two full point-mass runs into separate directories: ";
    if (differ.empty()) {
        s << "dataset.csv, checkpoint_fm.json, checkpoint_cped.json, report.json byte-identical";
    } else {
        s << "differ in";
        for (const auto& d : differ)
            s << " " << d;
    }
    fs::remove_all(base);
    return {differ.empty(), s.str()};
}

}  // namespace

int main(int argc, char** argv)
{
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::atoi(argv[i]));
    auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

    ResidualLog log;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"formula exactness", formula_exactness},
        {"gradient correctness", gradient_correctness},
        {"conformal coverage", conformal_coverage},
        {"calibration loop on the 1-D toy", algorithm_behavior},
        {"unicycle safety rate, CPED vs FM", [&] { return unicycle_rates(log); }},
        {"point-mass safe radius, CPED vs FM", [&] { return point_mass_radii(log); }},
        {"safety filter constraint holds", [&] { return filter_guarantee(log); }},
        {"pipeline reproducibility", reproducibility},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int k = static_cast<int>(i) + 1;
        if (!wanted(k))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
