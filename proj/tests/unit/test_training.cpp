#include <set>
#include <vector>

#include <doctest.h>

#include "cped/errors.hpp"
#include "cped/sampling.hpp"
#include "cped/training.hpp"
#include "toy.hpp"

using namespace cped;
using namespace cped::testing;

TEST_SUITE("training")
{
    TEST_CASE("pre-solved data stops after one epoch")
    {
        const SystemModel m = toy_model();
        const LabeledDataset d = toy_dataset(20, 1);
        // h = 0.75 - x separates the toy with slack
        BarrierNet net({1, 1});
        net.weight(0) << -1.0;
        net.bias(0) << 0.75;
        TrainConfig c = toy_train_config(1);
        const StageResult r = train_stage(net, d, m, {}, c);
        CHECK(r.epochs == 1);
        CHECK(r.reached_tolerance);
        CHECK(r.final_loss <= c.loss_tolerance);
    }

    TEST_CASE("toy problem converges with margins")
    {
        const SystemModel m = toy_model();
        const LabeledDataset d = toy_dataset(60, 2);
        TrainConfig c = toy_train_config(3);
        c.loss_tolerance = 1e-3;
        BarrierNet net = make_barrier_net(1, c);
        const StageResult r = train_stage(net, d, m, {0.1, 0.1, 0.1}, c);
        CHECK(r.final_loss <= 1e-3);
        CHECK(r.epochs <= 500);
        CHECK(r.loss_curve.size() == static_cast<std::size_t>(r.epochs));
        for (double l : r.loss_curve)
            CHECK(l >= 0.0);
    }

    TEST_CASE("training is deterministic")
    {
        const SystemModel m = toy_model();
        const LabeledDataset d = toy_dataset(40, 4);
        TrainConfig c = toy_train_config(5);
        c.max_epochs_per_stage = 30;
        c.loss_tolerance = 0.0;
        const TrainOutcome a = run_fm_baseline(d, m, {0.2, 0.2, 0.2}, c);
        const TrainOutcome b = run_fm_baseline(d, m, {0.2, 0.2, 0.2}, c);
        CHECK(a.report.stages[0].loss_curve == b.report.stages[0].loss_curve);
        CHECK(a.net == b.net);
    }

    TEST_CASE("fm with zero margins is stage one of cped")
    {
        const SystemModel m = toy_model();
        const LabeledDataset train = toy_dataset(60, 6);
        const LabeledDataset calib = toy_dataset(60, 7);
        TrainConfig c = toy_train_config(8);
        c.max_epochs_per_stage = 40;
        const TrainOutcome fm = run_fm_baseline(train, m, {}, c);
        const TrainOutcome cp = run_cped(train, calib, m, c, ConformalConfig{});
        CHECK(fm.report.stages[0].loss_curve == cp.report.stages[0].loss_curve);

        c.max_calibration_rounds = 0;
        const TrainOutcome none = run_cped(train, calib, m, c, ConformalConfig{});
        CHECK(none.net == fm.net);
        CHECK(none.report.rounds_used == 0);
        CHECK(none.report.calibrations.empty());
    }

    TEST_CASE("large fixed margins cost more")
    {
        const SystemModel m = toy_model();
        // safe and unsafe points 0.05 apart
        LabeledDataset d;
        for (int i = 0; i < 40; ++i) {
            d.safe_points.push_back(scalar(-1.0 + 1.95 * i / 39));
            d.unsafe_points.push_back(scalar(1.0 + i / 39.0));
            d.expert_points.push_back({scalar(-1.0 + 1.95 * i / 39), scalar(0.0)});
        }
        TrainConfig c = toy_train_config(10);
        c.max_epochs_per_stage = 100;
        const double zero = run_fm_baseline(d, m, {}, c).report.stages[0].final_loss;
        const double big = run_fm_baseline(d, m, {1, 1, 1}, c).report.stages[0].final_loss;
        CHECK(big > zero);
    }

    TEST_CASE("calibration never sees a training batch")
    {
        const SystemModel m = toy_model();
        const LabeledDataset all = toy_dataset(80, 11);
        const DatasetSplit s = split(all, 0.25, 12);
        std::array<std::set<std::size_t>, 3> seen;
        TrainHooks hooks;
        hooks.on_batch = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                             const std::vector<std::size_t>& c) {
            // batch indices refer to the training subset; map back to the full dataset
            for (std::size_t i : a)
                seen[0].insert(s.train_indices[0].at(i));
            for (std::size_t i : b)
                seen[1].insert(s.train_indices[1].at(i));
            for (std::size_t i : c)
                seen[2].insert(s.train_indices[2].at(i));
        };
        TrainConfig c = toy_train_config(13);
        c.max_epochs_per_stage = 20;
        ConformalConfig cc;
        cc.alpha = 0.3;
        run_cped(s.train, s.calib, m, c, cc, hooks);
        for (int r = 0; r < 3; ++r) {
            CHECK(seen[r].size() == s.train_indices[r].size());
            for (std::size_t i : s.calib_indices[r])
                CHECK(seen[r].count(i) == 0);
        }
    }

    TEST_CASE("shifted calibration data raises the margins")
    {
        const SystemModel m = toy_model();
        const LabeledDataset train = toy_dataset(60, 14);
        // calibration drawn 0.6 to the right: unsafe side creeps into the training safe range
        const LabeledDataset calib = toy_dataset(60, 15, 0.6);
        TrainConfig c = toy_train_config(16);
        c.max_calibration_rounds = 3;
        const TrainOutcome out = run_cped(train, calib, m, c, ConformalConfig{});
        REQUIRE(!out.report.calibrations.empty());
        CHECK_FALSE(out.report.calibrations[0].all_nonpositive());
        REQUIRE(out.report.stages.size() >= 2);
        CHECK(out.report.stages[1].margins.sum() > 0.0);
        for (std::size_t i = 1; i < out.report.stages.size(); ++i)
            for (int k = 0; k < 3; ++k)
                CHECK(out.report.stages[i].margins[k] >= out.report.stages[i - 1].margins[k]);
        CHECK(out.report.rounds_used <= c.max_calibration_rounds);
    }

    TEST_CASE("config validation")
    {
        TrainConfig c;
        c.learning_rate = 0.0;
        CHECK_THROWS(c.validate());
        c = TrainConfig{};
        c.batch_size = 0;
        CHECK_THROWS(c.validate());
        c = TrainConfig{};
        c.max_calibration_rounds = -1;
        CHECK_THROWS(c.validate());
    }
}
