#include "cped/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "detail_json.hpp"
#include "json.hpp"

#include "cped/errors.hpp"
#include "cped/experts.hpp"
#include "cped/io.hpp"

namespace cped {
namespace {

using json = nlohmann::json;

std::uint64_t stream_seed(const RunConfig& c, std::uint64_t stream)
{
    return derive_seed(c.seed, stream);
}

void require_file(const fs::path& path, const std::string& what, const std::string& hint)
{
    if (!fs::exists(path))
        throw InvalidInput(what + " not found at '" + path.string() + "'; " + hint);
}

DatasetSplit load_split(const RunPaths& paths)
{
    const std::string hint = "run `cped generate` with the same config first";
    require_file(paths.dataset(), "dataset", hint);
    require_file(paths.split(), "split manifest", hint);
    const LabeledDataset data = io::read_dataset_csv(paths.dataset());
    const io::SplitManifest manifest = io::read_split_manifest(paths.split());
    return split_from_indices(data, manifest.calib_indices);
}

BarrierNet load_net(const RunPaths& paths, TrainMode mode)
{
    require_file(paths.checkpoint(mode), to_string(mode) + " checkpoint",
                 "run `cped train --mode " + to_string(mode) + "` with the same config first");
    return io::load_checkpoint(paths.checkpoint(mode));
}

int total_rollouts(const RunConfig& c)
{
    if (c.system == SystemKind::PointMass)
        return static_cast<int>(c.evaluation.radii.size()) * c.evaluation.sweep.rollouts_per_radius;
    return c.evaluation.n_rollouts;
}

/// Indices of the rollouts kept on disk: evenly spread over the run.
std::vector<int> saved_rollouts(const RunConfig& c)
{
    const int total = total_rollouts(c);
    const int keep = std::min(c.evaluation.saved_trajectories, total);
    std::vector<int> ids;
    for (int j = 0; j < keep; ++j)
        ids.push_back(static_cast<int>(static_cast<long long>(j) * total / keep));
    return ids;
}

struct StoredEvaluation {
    EvaluationSummary summary;
    fs::path trajectories;
};

StoredEvaluation evaluate_and_store(const RunConfig& c, const RunPaths& paths, TrainMode mode,
                                    const BarrierNet& net)
{
    const SystemModel model = c.model();
    const std::vector<int> keep = saved_rollouts(c);
    std::ostringstream rows;
    rows << io::trajectory_csv_header(model.state_dim, model.control_dim, true);
    StoredEvaluation out;
    out.summary = evaluate_net(c, net, to_string(mode), [&](int id, const Trajectory& t) {
        if (std::binary_search(keep.begin(), keep.end(), id))
            io::append_trajectory_rows(rows, t, model.control_dim, id);
    });
    if (!keep.empty()) {
        out.trajectories = paths.trajectories() / (to_string(mode) + ".csv");
        io::write_text(out.trajectories, rows.str());
    }
    return out;
}

json read_report(const RunPaths& paths)
{
    fs::path p = paths.report_stem();
    p += ".json";
    if (!fs::exists(p))
        return json::object();
    try {
        return json::parse(io::read_text(p));
    } catch (const json::parse_error&) {
        return json::object();
    }
}

void write_report_json(const RunPaths& paths, json report)
{
    fs::path p = paths.report_stem();
    p += ".json";
    std::vector<std::string> files;
    if (fs::exists(paths.root)) {
        for (const auto& entry : fs::recursive_directory_iterator(paths.root)) {
            if (!entry.is_regular_file())
                continue;
            const fs::path rel = fs::relative(entry.path(), paths.root);
            if (rel == fs::path("report.json"))
                continue;
            files.push_back(rel.generic_string());
        }
    }
    std::sort(files.begin(), files.end());
    files.push_back("report.json");
    report["artifacts"] = files;
    io::write_text(p, report.dump(2) + "\n");
}

json report_header(const RunConfig& c)
{
    json j;
    j["run_id"] = run_id(c);
    j["system"] = to_string(c.system);
    j["seed"] = c.seed;
    j["config"] = "config.json";
    return j;
}

void ensure_config(const RunConfig& c, const RunPaths& paths)
{
    io::write_text(paths.config(), run_config_json(c));
}

}  // namespace

std::string to_string(TrainMode mode)
{
    return mode == TrainMode::Fm ? "fm" : "cped";
}

TrainMode train_mode_from_string(const std::string& name)
{
    if (name == "fm")
        return TrainMode::Fm;
    if (name == "cped")
        return TrainMode::Cped;
    throw ConfigError("mode", "unknown mode '" + name + "' (expected fm or cped)");
}

RunPaths run_paths(const RunConfig& config)
{
    return RunPaths{fs::path(config.output_dir) / run_id(config)};
}

SamplingDomain sampling_domain(const RunConfig& c, const std::vector<ExpertRecord>& records)
{
    const SystemModel model = c.model();
    SamplingDomain d;
    d.center = Vec::Zero(model.state_dim);
    d.radius_max = c.sampling.radius_max;
    d.global_fraction = c.sampling.global_fraction;
    d.max_attempts_per_point = c.sampling.max_attempts_per_point;
    d.buffer_speed = c.sampling.buffer_speed;
    if (model.state_dim >= 3) {
        if (c.sampling.third_range) {
            d.third_lo = (*c.sampling.third_range)[0];
            d.third_hi = (*c.sampling.third_range)[1];
        } else if (!records.empty()) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const auto& r : records) {
                lo = std::min(lo, r.state[2]);
                hi = std::max(hi, r.state[2]);
            }
            d.third_lo = lo - 0.5;
            d.third_hi = hi + 0.5;
        }
    }
    return d;
}

GeneratedData generate_data(const RunConfig& c)
{
    c.validate();
    const SystemModel model = c.model();
    const auto& e = c.experts;
    const EpisodeSampler sampler = c.system == SystemKind::PointMass
                                       ? point_mass_episode_sampler(c.point_mass, e.point_mass, e.expert)
                                       : unicycle_episode_sampler(c.unicycle, e.unicycle, e.expert);
    GeneratedData out;
    out.experts = generate_expert_trajectories(model, sampler, e.n_trajectories, e.horizon_steps, e.dt,
                                               stream_seed(c, seed_stream::experts), e.record_stride);
    out.dataset = radial_sample(model, c.sampling.quotas, c.sampling.regions, out.experts.records,
                                sampling_domain(c, out.experts.records), stream_seed(c, seed_stream::sampling));
    out.split = split(out.dataset, c.sampling.calib_fraction, stream_seed(c, seed_stream::split));
    return out;
}

TrainOutcome train_model(const RunConfig& c, const DatasetSplit& data, TrainMode mode, const TrainHooks& hooks)
{
    const SystemModel model = c.model();
    TrainConfig tc = c.train;
    tc.rng_seed = stream_seed(c, seed_stream::training);
    if (mode == TrainMode::Fm)
        return run_fm_baseline(data.train, model, c.fm_margins, tc, hooks);
    return run_cped(data.train, data.calib, model, tc, c.conformal, hooks);
}

EvaluationSummary evaluate_net(const RunConfig& c, const BarrierNet& net, const std::string& label,
                               const TrajectorySink& sink)
{
    const SystemModel model = c.model();
    const auto& ev = c.evaluation;
    EvaluationSummary s;
    s.label = label;
    s.config_key = run_id(c);
    s.seeds = {c.seed};
    const std::uint64_t seed = stream_seed(c, seed_stream::evaluation);
    if (c.system == SystemKind::PointMass) {
        if (ev.radii.empty())
            throw ConfigError("evaluation.radii", "must not be empty for the point mass");
        const int per = ev.sweep.rollouts_per_radius;
        std::size_t ri = 0;
        s.sweep = radius_sweep(model, net, ev.radii, ev.sweep, ev.rollout, seed,
                               [&](double r, int k, const Trajectory& t) {
                                   while (ri + 1 < ev.radii.size() && ev.radii[ri] != r)
                                       ++ri;
                                   if (sink)
                                       sink(static_cast<int>(ri) * per + k, t);
                               });
    } else {
        s.safety = safety_rate(model, net, unicycle_task_sampler(ev.unicycle), ev.n_rollouts, ev.rollout, seed, sink);
    }
    return s;
}

// ---------------------------------------------------------------------------

void refresh_report_index(const RunPaths& paths)
{
    json report = read_report(paths);
    write_report_json(paths, std::move(report));
}

fs::path cmd_generate(const RunConfig& c)
{
    const RunPaths paths = run_paths(c);
    const GeneratedData data = generate_data(c);
    const SystemModel model = c.model();
    ensure_config(c, paths);
    io::write_dataset_csv(paths.dataset(), data.dataset, model.state_dim, model.control_dim);
    io::SplitManifest manifest;
    manifest.calib_fraction = c.sampling.calib_fraction;
    manifest.seed = stream_seed(c, seed_stream::split);
    manifest.calib_indices = data.split.calib_indices;
    io::write_split_manifest(paths.split(), manifest);

    json report = read_report(paths);
    const json header = report_header(c);
    report.update(header);
    report["dataset"] = {{"expert_records", data.experts.records.size()},
                         {"skipped_infeasible", data.experts.skipped_infeasible},
                         {"dropped_outside", data.experts.dropped_outside},
                         {"safe", data.dataset.safe_points.size()},
                         {"unsafe", data.dataset.unsafe_points.size()},
                         {"expert", data.dataset.expert_points.size()},
                         {"buffer", data.dataset.buffer_points.size()},
                         {"train", data.split.train.total_size()},
                         {"calib", data.split.calib.total_size()}};
    write_report_json(paths, std::move(report));
    return paths.root;
}

TrainCommandResult cmd_train(const RunConfig& c, TrainMode mode)
{
    const RunPaths paths = run_paths(c);
    const DatasetSplit data = load_split(paths);
    ensure_config(c, paths);
    const TrainOutcome out = train_model(c, data, mode);
    io::save_checkpoint(paths.checkpoint(mode), out.net);
    io::write_training_report(paths.training_report(mode), out.report);
    if (mode == TrainMode::Cped && !out.report.calibrations.empty())
        io::write_calibration_report(paths.calibration(), out.report.calibrations.back());

    json report = read_report(paths);
    report.update(report_header(c));
    report["training"][to_string(mode)] = {{"converged", out.report.converged},
                                           {"rounds_used", out.report.rounds_used},
                                           {"final_margins",
                                            {out.report.final_margins.gamma_s, out.report.final_margins.gamma_u,
                                             out.report.final_margins.gamma_d}},
                                           {"final_loss", out.report.stages.back().final_loss}};
    write_report_json(paths, std::move(report));
    return {paths.checkpoint(mode), out.report.converged};
}

fs::path cmd_calibrate(const RunConfig& c, TrainMode mode)
{
    const RunPaths paths = run_paths(c);
    const DatasetSplit data = load_split(paths);
    const BarrierNet net = load_net(paths, mode);
    const CalibrationReport cal = calibrate(net, data.calib, c.model(), c.train.kappa_gain, c.conformal);
    io::write_calibration_report(paths.recalibration(mode), cal);
    refresh_report_index(paths);
    return paths.recalibration(mode);
}

fs::path cmd_rollout(const RunConfig& c, TrainMode mode)
{
    const RunPaths paths = run_paths(c);
    const BarrierNet net = load_net(paths, mode);
    const StoredEvaluation ev = evaluate_and_store(c, paths, mode, net);
    io::write_text(paths.rollout_summary(mode), detail::summary_json(ev.summary).dump(2) + "\n");
    refresh_report_index(paths);
    return paths.rollout_summary(mode);
}

fs::path cmd_export_surface(const RunConfig& c, TrainMode mode)
{
    if (!c.evaluation.surface)
        throw ConfigError("evaluation.surface", "no surface grid configured");
    const RunPaths paths = run_paths(c);
    const BarrierNet net = load_net(paths, mode);
    const fs::path out = export_surface(net, *c.evaluation.surface, paths.surface(mode));
    refresh_report_index(paths);
    return out;
}

fs::path cmd_evaluate(const RunConfig& c)
{
    const RunPaths paths = run_paths(c);
    std::vector<TrainMode> present;
    for (TrainMode m : {TrainMode::Fm, TrainMode::Cped})
        if (fs::exists(paths.checkpoint(m)))
            present.push_back(m);
    if (present.empty())
        throw InvalidInput("no checkpoint found in '" + paths.root.string() +
                           "'; run `cped train` with the same config first");

    json report = read_report(paths);
    report.update(report_header(c));
    report["results"] = json::object();
    std::ostringstream md;
    md << "# Run " << run_id(c) << "\n\nSystem: " << to_string(c.system) << ", seed " << c.seed << "\n\n";

    std::vector<EvaluationSummary> summaries;
    for (TrainMode m : present) {
        const BarrierNet net = io::load_checkpoint(paths.checkpoint(m));
        StoredEvaluation ev = evaluate_and_store(c, paths, m, net);
        report["results"][to_string(m)] = detail::summary_json(ev.summary);
        if (c.evaluation.surface)
            export_surface(net, *c.evaluation.surface, paths.surface(m));
        if (ev.summary.sweep) {
            const auto& s = *ev.summary.sweep;
            md << "## " << to_string(m) << "\n\nMax safe radius: "
               << (s.max_safe_radius ? io::format_double(*s.max_safe_radius) : std::string("none")) << "\n\n";
        } else {
            const auto& s = *ev.summary.safety;
            md << "## " << to_string(m) << "\n\nSafety rate: " << io::format_double(s.rate_percent) << " % ("
               << s.n_safe << " / " << s.n_rollouts << ")\n\n";
        }
        summaries.push_back(std::move(ev.summary));
    }

    if (summaries.size() == 2) {
        const ComparisonReport cmp = compare_report(summaries[0], summaries[1]);
        md << cmp.markdown;
        json checks = json::array();
        for (const auto& ch : cmp.checks)
            checks.push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
        report["comparison"] = {{"checks", checks}};
    } else {
        report.erase("comparison");
    }

    fs::path md_path = paths.report_stem();
    md_path += ".md";
    io::write_text(md_path, md.str());
    write_report_json(paths, std::move(report));
    fs::path js = paths.report_stem();
    js += ".json";
    return js;
}

fs::path run_pipeline(const RunConfig& c)
{
    cmd_generate(c);
    cmd_train(c, TrainMode::Fm);
    cmd_train(c, TrainMode::Cped);
    return cmd_evaluate(c);
}

}  // namespace cped
