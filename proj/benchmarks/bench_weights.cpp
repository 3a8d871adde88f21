#include <benchmark/benchmark.h>

#include "trajrisk/risk.hpp"
#include "trajrisk/weights.hpp"

namespace {

using namespace trajrisk;

struct Instance {
    DataSet data;
    Trajectory traj;
};

Instance make_instance(Eigen::Index n, Eigen::Index p, Eigen::Index T,
                       double batch_fraction) {
    ProblemConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.signal_strength = 10.0;
    cfg.sparsity_fraction = 0.05;
    cfg.seed = 1;
    Instance inst{generate_dataset(cfg), {}};
    const Schedule sched = Schedule::auto_step(T, n, p, batch_fraction);
    const BatchPlan plan = sample_batches(n, sched, 2);
    inst.traj = run_trajectory(inst.data, LossSpec{LossKind::Huber, 1.0},
                               PenaltySpec{}, sched, plan);
    return inst;
}

void BM_trajectory(benchmark::State& state) {
    const Eigen::Index n = state.range(0);
    const Eigen::Index p = n / 2;
    ProblemConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.signal_strength = 10.0;
    cfg.sparsity_fraction = 0.05;
    cfg.seed = 1;
    const DataSet data = generate_dataset(cfg);
    const Schedule sched = Schedule::auto_step(20, n, p, 0.2);
    const BatchPlan plan = sample_batches(n, sched, 2);
    for (auto _ : state) {
        auto traj = run_trajectory(data, LossSpec{LossKind::Huber, 1.0},
                                   PenaltySpec{}, sched, plan);
        benchmark::DoNotOptimize(traj.B.data());
    }
}
BENCHMARK(BM_trajectory)->Arg(500)->Arg(1000);

void BM_dense_weights(benchmark::State& state) {
    const auto inst = make_instance(120, state.range(0), 8, 0.5);
    for (auto _ : state) {
        auto ws = dense_weights(inst.traj, inst.data);
        benchmark::DoNotOptimize(ws.W.data());
    }
}
BENCHMARK(BM_dense_weights)->Arg(20)->Arg(60);

void BM_hutchinson(benchmark::State& state) {
    const auto inst = make_instance(1000, 500, 15, 0.2);
    HutchinsonOptions opt;
    opt.probes = static_cast<int>(state.range(0));
    opt.seed = 9;
    for (auto _ : state) {
        auto ws = hutchinson_weights(inst.traj, inst.data, opt);
        benchmark::DoNotOptimize(ws.Khat.data());
    }
}
BENCHMARK(BM_hutchinson)->Arg(10)->Arg(50);

}  // namespace

BENCHMARK_MAIN();
