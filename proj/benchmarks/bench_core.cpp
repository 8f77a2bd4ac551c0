#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "cped/certification.hpp"
#include "cped/dynamics.hpp"
#include "cped/mlp.hpp"
#include "cped/random.hpp"
#include "cped/safe_control.hpp"
#include "cped/sampling.hpp"

using namespace cped;

namespace {

Vec random_vec(Rng& rng, int n)
{
    Vec x(n);
    for (int i = 0; i < n; ++i)
        x(i) = rng.uniform(-2, 2);
    return x;
}

BarrierNet bench_net(int n) { return BarrierNet::initialized({n, 32, 32, 1}, Activation::Tanh, 1); }

}  // namespace

static void BM_Forward(benchmark::State& state)
{
    const BarrierNet net = bench_net(3);
    Rng rng(2);
    const Vec x = random_vec(rng, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_Forward);

static void BM_GradInput(benchmark::State& state)
{
    const BarrierNet net = bench_net(3);
    Rng rng(2);
    const Vec x = random_vec(rng, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(net.grad_input(x));
}
BENCHMARK(BM_GradInput);

// One minibatch of the three-region loss with parameter gradients.
static void BM_BatchLoss(benchmark::State& state)
{
    const int per_region = static_cast<int>(state.range(0));
    const SystemModel model = make_unicycle({});
    const BarrierNet net = bench_net(3);
    Rng rng(3);
    LabeledDataset d;
    for (int i = 0; i < per_region; ++i) {
        d.safe_points.push_back(random_vec(rng, 3));
        d.unsafe_points.push_back(random_vec(rng, 3));
        d.expert_points.push_back({random_vec(rng, 3), random_vec(rng, 2)});
    }
    const PreparedData prep = prepare(model, d);
    std::vector<std::size_t> idx(per_region);
    std::iota(idx.begin(), idx.end(), 0);
    const MarginVector g{0.1, 0.1, 0.1};
    for (auto _ : state)
        benchmark::DoNotOptimize(batch_loss(net, prep, idx, idx, idx, g, {}, 1.0, true));
    state.SetItemsProcessed(state.iterations() * 3 * per_region);
}
BENCHMARK(BM_BatchLoss)->Arg(32)->Arg(256);

static void BM_QpFilter(benchmark::State& state)
{
    const SystemModel model = make_unicycle({});
    const BarrierNet net = bench_net(3);
    Rng rng(4);
    const Vec x = random_vec(rng, 3);
    const Vec u = random_vec(rng, 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(qp_filter(net, model, x, u, 1.0));
}
BENCHMARK(BM_QpFilter);

BENCHMARK_MAIN();
