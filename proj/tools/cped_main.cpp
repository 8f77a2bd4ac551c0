// cped: command line front end for the barrier-function pipeline.
//
// Exit codes: 0 success, 1 error, 2 training finished without convergence.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cped/config.hpp"
#include "cped/errors.hpp"
#include "cped/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::string mode = "cped";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Options& opt, bool with_mode)
{
    cmd->add_option("--config", opt.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", opt.seed, "Override the master seed");
    cmd->add_option("--out", opt.out, "Override the output directory");
    if (with_mode)
        cmd->add_option("--mode", opt.mode, "Network to use")->check(CLI::IsMember({"fm", "cped"}));
}

cped::RunConfig load(const Options& opt)
{
    cped::RunConfig c = cped::load_run_config(opt.config);
    if (opt.seed)
        c.seed = *opt.seed;
    if (opt.out)
        c.output_dir = *opt.out;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Learn, calibrate and evaluate neural control barrier functions"};
    app.require_subcommand(1);
    Options opt;

    auto* gen = app.add_subcommand("generate", "Expert demonstrations, radial sampling and the calibration split");
    auto* train = app.add_subcommand("train", "Train the fm baseline or the calibrated cped network");
    auto* calib = app.add_subcommand("calibrate", "Recompute conformal margins for a stored checkpoint");
    auto* roll = app.add_subcommand("rollout", "Run the evaluation rollouts of one checkpoint");
    auto* eval = app.add_subcommand("evaluate", "Evaluate all checkpoints and write report.md / report.json");
    auto* surf = app.add_subcommand("export-surface", "Write the barrier values on the configured grid");
    add_common(gen, opt, false);
    add_common(train, opt, true);
    add_common(calib, opt, true);
    add_common(roll, opt, true);
    add_common(eval, opt, false);
    add_common(surf, opt, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const cped::RunConfig c = load(opt);
        const cped::TrainMode mode = cped::train_mode_from_string(opt.mode);
        if (gen->parsed()) {
            std::cout << cped::cmd_generate(c).string() << "\n";
        } else if (train->parsed()) {
            const auto r = cped::cmd_train(c, mode);
            std::cout << r.checkpoint.string() << "\n";
            if (!r.converged) {
                std::cerr << "training finished without convergence (see the training report)\n";
                return 2;
            }
        } else if (calib->parsed()) {
            std::cout << cped::cmd_calibrate(c, mode).string() << "\n";
        } else if (roll->parsed()) {
            std::cout << cped::cmd_rollout(c, mode).string() << "\n";
        } else if (eval->parsed()) {
            std::cout << cped::cmd_evaluate(c).string() << "\n";
        } else if (surf->parsed()) {
            std::cout << cped::cmd_export_surface(c, mode).string() << "\n";
        }
    } catch (const cped::SamplingExhausted& e) {
        std::cerr << "error: sampling exhausted in region '" << e.region() << "': " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
