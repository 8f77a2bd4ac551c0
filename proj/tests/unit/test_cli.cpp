#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <sys/wait.h>

#include <doctest.h>
#include <json.hpp>

#include "cped/config.hpp"
#include "cped/errors.hpp"
#include "cped/io.hpp"
#include "cped/pipeline.hpp"

using namespace cped;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("cped_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// A point-mass run small enough for a unit test.
RunConfig small_config(const fs::path& out)
{
    RunConfig c = default_run_config(SystemKind::PointMass);
    c.experts.n_trajectories = 6;
    c.experts.horizon_steps = 300;
    c.sampling.quotas = {40, 40, 40, 5};
    c.train.max_epochs_per_stage = 15;
    c.train.max_calibration_rounds = 2;
    c.conformal.alpha = 0.5;
    c.evaluation.radii = {0.1, 0.3};
    c.evaluation.sweep.rollouts_per_radius = 2;
    c.evaluation.rollout.horizon_steps = 100;
    c.evaluation.saved_trajectories = 2;
    SurfaceGrid g;
    g.resolution = 5;
    c.evaluation.surface = g;
    c.output_dir = out.string();
    return c;
}

int count_lines(const fs::path& p)
{
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        ++n;
    return n;
}

std::string config_error_field(const std::string& text)
{
    try {
        parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

#ifdef CPED_CLI_PATH
int run_cli(const std::string& args)
{
    const int status = std::system((std::string(CPED_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST_SUITE("cli")
{
    TEST_CASE("config round trip and defaults")
    {
        for (SystemKind k : {SystemKind::PointMass, SystemKind::Unicycle}) {
            const RunConfig c = default_run_config(k);
            CHECK_NOTHROW(c.validate());
            const std::string text = run_config_json(c);
            CHECK(run_config_json(parse_run_config(text)) == text);
            CHECK(run_id(parse_run_config(text)) == run_id(c));
            CHECK(run_id(c).size() == 16);
        }
        RunConfig a = default_run_config(SystemKind::PointMass);
        RunConfig b = a;
        b.output_dir = "elsewhere";
        CHECK(run_id(a) == run_id(b));
        b.seed = 2;
        CHECK(run_id(a) != run_id(b));
    }

    TEST_CASE("shipped configs load")
    {
        const char* dir = std::getenv("CPED_CONFIG_DIR");
        if (!dir)
            return;
        CHECK(load_run_config(fs::path(dir) / "point_mass.json").system == SystemKind::PointMass);
        CHECK(load_run_config(fs::path(dir) / "unicycle.json").system == SystemKind::Unicycle);
    }

    TEST_CASE("config errors name the field")
    {
        CHECK(config_error_field(R"({"system": {"kind": "point_mass"}, "sampling": {"sigma_band": 0}})") ==
              "sampling.sigma_band");
        CHECK(config_error_field(R"({"system": {"kind": "point_mass"}, "sampling": {"sigma_band": -1.5}})") ==
              "sampling.sigma_band");
        CHECK(config_error_field(R"({"system": {"kind": "point_mass"}, "bogus": 1})") == "bogus");
        CHECK(config_error_field(R"({"system": {"kind": "point_mass"}, "train": {"learnign_rate": 0.1}})") ==
              "train.learnign_rate");
        CHECK(config_error_field(R"({"system": {"kind": "point_mass"}, "seed": "one"})") == "seed");
        CHECK(config_error_field(R"({"system": {"kind": "boat"}})") == "system.kind");
        CHECK(config_error_field("{not json") != "");
        CHECK_THROWS_AS(load_run_config("/nonexistent/cfg.json"), Error);
    }

    TEST_CASE("mode names")
    {
        CHECK(train_mode_from_string("fm") == TrainMode::Fm);
        CHECK(train_mode_from_string("cped") == TrainMode::Cped);
        CHECK_THROWS_AS(train_mode_from_string("both"), ConfigError);
    }

    TEST_CASE("training without a dataset is an actionable error")
    {
        const RunConfig c = small_config(scratch("missing"));
        try {
            cmd_train(c, TrainMode::Fm);
            FAIL("expected InvalidInput");
        } catch (const InvalidInput& e) {
            const std::string msg = e.what();
            CHECK(msg.find("dataset") != std::string::npos);
            CHECK(msg.find("generate") != std::string::npos);
        }
    }

    TEST_CASE("generate, train and evaluate")
    {
        const fs::path out = scratch("pipeline");
        const RunConfig c = small_config(out);
        const RunPaths paths = run_paths(c);
        CHECK(paths.root == out / run_id(c));

        cmd_generate(c);
        REQUIRE(fs::exists(paths.dataset()));
        CHECK(fs::exists(paths.split()));
        CHECK(fs::exists(paths.config()));
        CHECK(count_lines(paths.dataset()) == 1 + 40 + 40 + 40 + 5);
        const std::string first = io::read_text(paths.dataset());
        cmd_generate(c);
        CHECK(io::read_text(paths.dataset()) == first);

        cmd_train(c, TrainMode::Fm);
        cmd_evaluate(c);
        json rep = json::parse(io::read_text(paths.root / "report.json"));
        CHECK(rep["results"].contains("fm"));
        CHECK_FALSE(rep.contains("comparison"));

        cmd_train(c, TrainMode::Cped);
        const json tr = json::parse(io::read_text(paths.training_report(TrainMode::Cped)));
        CHECK(tr["calibrations"].size() >= 1);
        CHECK(fs::exists(paths.calibration()));

        cmd_evaluate(c);
        rep = json::parse(io::read_text(paths.root / "report.json"));
        CHECK(rep.contains("comparison"));
        CHECK(count_lines(paths.surface(TrainMode::Cped)) == 1 + 25);
        CHECK(fs::exists(paths.root / "report.md"));

        cmd_calibrate(c, TrainMode::Fm);
        CHECK(fs::exists(paths.recalibration(TrainMode::Fm)));
        cmd_rollout(c, TrainMode::Fm);
        CHECK(fs::exists(paths.rollout_summary(TrainMode::Fm)));

        // every file in the run directory is listed in report.json
        rep = json::parse(io::read_text(paths.root / "report.json"));
        std::set<std::string> listed;
        for (const auto& a : rep["artifacts"])
            listed.insert(a.get<std::string>());
        for (const auto& e : fs::recursive_directory_iterator(paths.root))
            if (e.is_regular_file())
                CHECK(listed.count(fs::relative(e.path(), paths.root).generic_string()) == 1);
    }

#ifdef CPED_CLI_PATH
    TEST_CASE("command line exit codes")
    {
        const fs::path dir = scratch("cli");
        RunConfig c = small_config(dir / "runs");
        io::write_text(dir / "cfg.json", run_config_json(c));
        const std::string cfg = " --config " + (dir / "cfg.json").string();
        CHECK(run_cli("--help") == 0);
        CHECK(run_cli("") == 1);
        CHECK(run_cli("train --mode both" + cfg) == 1);
        CHECK(run_cli("train --config /nonexistent.json") == 1);
        CHECK(run_cli("train --mode fm" + cfg) == 1);  // no dataset yet
        CHECK(run_cli("generate" + cfg) == 0);

        // zero loss in two epochs is out of reach: non-convergence exits 2
        c.train.loss_tolerance = 0.0;
        c.train.max_epochs_per_stage = 2;
        io::write_text(dir / "hard.json", run_config_json(c));
        const std::string hard = " --config " + (dir / "hard.json").string();
        CHECK(run_cli("generate" + hard) == 0);
        CHECK(run_cli("train --mode fm" + hard) == 2);
        CHECK(run_cli("train --mode fm --seed 9" + hard) == 1);  // seed 9 has no dataset yet

        c.train.loss_tolerance = 1e9;  // any loss is accepted
        io::write_text(dir / "easy.json", run_config_json(c));
        const std::string easy = " --config " + (dir / "easy.json").string();
        CHECK(run_cli("generate" + easy) == 0);
        CHECK(run_cli("train --mode fm" + easy) == 0);
        CHECK(run_cli("evaluate" + easy) == 0);
    }
#endif
}
