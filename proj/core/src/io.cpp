#include "cped/io.hpp"

#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "cped/errors.hpp"
#include "json.hpp"

namespace cped::io {

using nlohmann::json;

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw Error("format_double: conversion failed");
    return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidInput("file not found: '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

double parse_double(const std::string& s, const std::string& context)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw InvalidInput(context + ": cannot parse number '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

void append_vec(std::string& row, const Vec& v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        row += ',';
        row += format_double(v[i]);
    }
}

void append_empty(std::string& row, int n)
{
    for (int i = 0; i < n; ++i)
        row += ',';
}

}  // namespace

void write_dataset_csv(const fs::path& path, const LabeledDataset& data, int state_dim, int control_dim)
{
    std::string text = "region";
    for (int i = 0; i < state_dim; ++i)
        text += ",x" + std::to_string(i);
    for (int i = 0; i < control_dim; ++i)
        text += ",u" + std::to_string(i);
    text += '\n';
    auto state_row = [&](const char* region, const Vec& x) {
        std::string row = region;
        append_vec(row, x);
        append_empty(row, control_dim);
        text += row + '\n';
    };
    auto record_row = [&](const char* region, const ExpertRecord& r) {
        std::string row = region;
        append_vec(row, r.state);
        append_vec(row, r.control);
        text += row + '\n';
    };
    for (const Vec& x : data.safe_points)
        state_row("safe", x);
    for (const Vec& x : data.unsafe_points)
        state_row("unsafe", x);
    for (const auto& r : data.expert_points)
        record_row("expert", r);
    for (const auto& r : data.buffer_points)
        record_row("buffer", r);
    write_text(path, text);
}

LabeledDataset read_dataset_csv(const fs::path& path)
{
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line))
        throw InvalidInput("dataset '" + path.string() + "' is empty");
    const auto header = split_csv_line(line);
    int n = 0, m = 0;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (!header[i].empty() && header[i][0] == 'x')
            ++n;
        else if (!header[i].empty() && header[i][0] == 'u')
            ++m;
        else
            throw InvalidInput("dataset '" + path.string() + "': unexpected column '" + header[i] + "'");
    }
    if (header.empty() || header[0] != "region" || n == 0)
        throw InvalidInput("dataset '" + path.string() + "': bad header");
    LabeledDataset data;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != static_cast<std::size_t>(1 + n + m))
            throw InvalidInput(ctx + ": expected " + std::to_string(1 + n + m) + " cells");
        Vec x(n);
        for (int i = 0; i < n; ++i)
            x[i] = parse_double(cells[1 + i], ctx);
        const Region region = region_from_string(cells[0]);
        if (region == Region::Safe || region == Region::Unsafe) {
            (region == Region::Safe ? data.safe_points : data.unsafe_points).push_back(x);
            continue;
        }
        Vec u(m);
        for (int i = 0; i < m; ++i)
            u[i] = parse_double(cells[1 + n + i], ctx);
        (region == Region::Expert ? data.expert_points : data.buffer_points).push_back({x, u});
    }
    return data;
}

void write_split_manifest(const fs::path& path, const SplitManifest& manifest)
{
    json j;
    j["calib_fraction"] = manifest.calib_fraction;
    j["seed"] = manifest.seed;
    const char* names[4] = {"safe", "unsafe", "expert", "buffer"};
    for (int r = 0; r < 4; ++r)
        j["calib_indices"][names[r]] = manifest.calib_indices[r];
    write_text(path, j.dump(2) + "\n");
}

SplitManifest read_split_manifest(const fs::path& path)
{
    try {
        const json j = json::parse(read_text(path));
        SplitManifest m;
        m.calib_fraction = j.at("calib_fraction").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        const char* names[4] = {"safe", "unsafe", "expert", "buffer"};
        for (int r = 0; r < 4; ++r)
            m.calib_indices[r] = j.at("calib_indices").at(names[r]).get<std::vector<std::size_t>>();
        return m;
    } catch (const json::exception& e) {
        throw InvalidInput("split manifest '" + path.string() + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::string checkpoint_json(const BarrierNet& net)
{
    json j;
    j["format"] = "cped-barrier-net";
    j["version"] = 1;
    j["layer_sizes"] = net.layer_sizes();
    j["activation"] = to_string(net.activation());
    const Vec p = net.parameters();
    j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
    return j.dump() + "\n";
}

void save_checkpoint(const fs::path& path, const BarrierNet& net)
{
    write_text(path, checkpoint_json(net));
}

BarrierNet parse_checkpoint(const std::string& text)
{
    try {
        const json j = json::parse(text);
        if (j.at("format") != "cped-barrier-net")
            throw InvalidInput("checkpoint: unknown format");
        if (j.at("version").get<int>() != 1)
            throw InvalidInput("checkpoint: unsupported version");
        BarrierNet net(j.at("layer_sizes").get<std::vector<int>>(),
                       activation_from_string(j.at("activation").get<std::string>()));
        const auto params = j.at("parameters").get<std::vector<double>>();
        net.set_parameters(Eigen::Map<const Vec>(params.data(), static_cast<Eigen::Index>(params.size())));
        return net;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("checkpoint: ") + e.what());
    }
}

BarrierNet load_checkpoint(const fs::path& path)
{
    return parse_checkpoint(read_text(path));
}

// ---------------------------------------------------------------------------

namespace {

json margins_json(const MarginVector& m)
{
    return {{"gamma_s", m.gamma_s}, {"gamma_u", m.gamma_u}, {"gamma_d", m.gamma_d}};
}

json calibration_to_json(const CalibrationReport& r)
{
    json j;
    j["alpha"] = r.config.alpha;
    j["m"] = r.config.m;
    j["violation_level"] = r.config.violation_level;
    j["confidence_beta"] = r.config.confidence_beta;
    j["q_hat"] = margins_json(r.q_hat);
    j["proposed_margins"] = margins_json(r.proposed_margins);
    j["beta_value"] = r.beta_value;
    j["valid"] = r.valid;
    for (const auto& rc : r.regions)
        j["regions"].push_back({{"region", rc.region},
                                {"n", rc.n},
                                {"l", rc.l},
                                {"q_hat", rc.q_hat},
                                {"beta_value", rc.beta_value},
                                {"valid", rc.valid}});
    return j;
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string calibration_json(const CalibrationReport& report, bool with_timestamp)
{
    json j = calibration_to_json(report);
    if (with_timestamp)
        j["timestamp"] = utc_timestamp();
    return j.dump(2) + "\n";
}

void write_calibration_report(const fs::path& path, const CalibrationReport& report, bool with_timestamp)
{
    write_text(path, calibration_json(report, with_timestamp));
}

std::string training_report_json(const TrainingReport& report)
{
    json j;
    j["mode"] = report.mode;
    j["converged"] = report.converged;
    j["rounds_used"] = report.rounds_used;
    j["final_margins"] = margins_json(report.final_margins);
    for (const auto& s : report.stages)
        j["stages"].push_back({{"margins", margins_json(s.margins)},
                               {"epochs", s.epochs},
                               {"final_loss", s.final_loss},
                               {"reached_tolerance", s.reached_tolerance},
                               {"loss_curve", s.loss_curve}});
    j["calibrations"] = json::array();
    for (const auto& c : report.calibrations)
        j["calibrations"].push_back(calibration_to_json(c));
    const auto& nc = report.net_condition;
    j["net_condition"] = {{"lipschitz_estimate", nc.lipschitz_estimate},
                          {"max_nn_gap", nc.max_nn_gap},
                          {"required_gap", std::isfinite(nc.required_gap) ? json(nc.required_gap) : json(nullptr)},
                          {"satisfied", nc.satisfied}};
    return j.dump(2) + "\n";
}

void write_training_report(const fs::path& path, const TrainingReport& report)
{
    write_text(path, training_report_json(report));
}

// ---------------------------------------------------------------------------

std::string trajectory_csv_header(int state_dim, int control_dim, bool with_rollout_id)
{
    std::string h = with_rollout_id ? "rollout,t" : "t";
    for (int i = 0; i < state_dim; ++i)
        h += ",x" + std::to_string(i);
    for (int i = 0; i < control_dim; ++i)
        h += ",u" + std::to_string(i);
    h += ",filter_active,h_value\n";
    return h;
}

void append_trajectory_rows(std::ostream& out, const Trajectory& traj, int control_dim, int rollout_id)
{
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        std::string row = rollout_id >= 0 ? std::to_string(rollout_id) + "," : std::string();
        row += format_double(traj.times[k]);
        append_vec(row, traj.states[k]);
        if (k < traj.controls.size()) {
            append_vec(row, traj.controls[k]);
            row += traj.filter_active[k] ? ",1," : ",0,";
            row += format_double(traj.h_values[k]);
        } else {
            append_empty(row, control_dim);
            row += ",,";
        }
        out << row << '\n';
    }
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj, int control_dim, int rollout_id)
{
    std::ostringstream ss;
    const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
    ss << trajectory_csv_header(n, control_dim, rollout_id >= 0);
    append_trajectory_rows(ss, traj, control_dim, rollout_id);
    write_text(path, ss.str());
}

}  // namespace cped::io
