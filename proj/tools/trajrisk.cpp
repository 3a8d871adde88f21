#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "trajrisk/errors.hpp"
#include "trajrisk/harness.hpp"
#include "trajrisk/oracle.hpp"
#include "trajrisk/risk.hpp"

namespace {

int run_cmd(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::string>& overrides, bool seed_set,
            std::uint64_t seed) {
    trajrisk::ExperimentConfig cfg = trajrisk::parse_config_file(config_path);
    for (const auto& kv : overrides)
        trajrisk::apply_override(cfg, kv);
    if (!out_dir.empty())
        cfg.output_dir = out_dir;
    if (seed_set)
        cfg.master_seed = seed;
    if (cfg.output_dir.empty())
        throw trajrisk::ConfigError("no output directory (set output_dir or pass --out)");
    trajrisk::validate(cfg);

    const auto reps = trajrisk::run_experiment(cfg);
    const auto agg = trajrisk::aggregate(reps, cfg);
    trajrisk::emit_csv(reps, agg, cfg);
    std::printf("wrote %s (%d replicates, %d failed)\n",
                cfg.output_dir.string().c_str(), agg.survivors + agg.failures,
                agg.failures);
    return 0;
}

bool report(const char* name, bool ok) {
    std::printf("%-44s %s\n", name, ok ? "pass" : "FAIL");
    return ok;
}

// built-in sanity suite over tiny instances
int verify_cmd() {
    using namespace trajrisk;
    bool all = true;

    ProblemConfig prob;
    prob.n = 12;
    prob.p = 6;
    prob.noise.kind = NoiseKind::Gaussian;
    prob.noise.param = 1.0;
    prob.signal_strength = 4.0;
    prob.sparsity_fraction = 0.5;
    prob.seed = 7;

    const DataSet data = generate_dataset(prob);
    const DataSet data2 = generate_dataset(prob);
    all &= report("dataset determinism", data.X == data2.X && data.y == data2.y);
    const Eigen::VectorXd xb = data.X * data.b_star;
    all &= report("dataset linear model", (data.y - (xb + data.eps)).norm() == 0.0);
    all &= report("signal strength",
                  std::abs(data.b_star.squaredNorm() - prob.signal_strength) <
                      1e-10 * prob.signal_strength);

    const LossSpec loss{LossKind::PseudoHuber, 1.0};
    const PenaltySpec pen;
    const Schedule sched = Schedule::fixed(5, 0.3, 0.5);
    const BatchPlan plan = sample_batches(prob.n, sched, 11);
    const Trajectory traj = run_trajectory(data, loss, pen, sched, plan);

    const Schedule full = Schedule::fixed(5, 0.3, 1.0);
    const BatchPlan fplan = sample_batches(prob.n, full, 11);
    const Trajectory tgd = run_trajectory(data, loss, pen, full, fplan);
    const WeightSet wgd = dense_weights(tgd, data);
    all &= report("two-step weight value",
                  std::abs(wgd.W(1, 0) - 0.3 * static_cast<double>(prob.p) /
                                             static_cast<double>(prob.n)) < 1e-12);

    PerturbationSpec pert;
    pert.i = 3;
    pert.j = 2;
    const Eigen::MatrixXd fd =
        fd_iterate_derivative(data, loss, pen, sched, plan, pert);
    const Eigen::MatrixXd an = analytic_iterate_derivative(traj, data, pert);
    const double scale = std::max(1.0, an.cwiseAbs().maxCoeff());
    all &= report("derivative oracle agreement",
                  (fd - an).cwiseAbs().maxCoeff() / scale < 1e-4);

    const Eigen::VectorXd r = oracle_risk(tgd, data);
    const WeightSet ws = wgd;
    const Eigen::VectorXd rh = estimate_rhat(tgd, ws.W);
    all &= report("estimate finite and nonnegative",
                  rh.allFinite() && (rh.array() >= 0.0).all() && r.allFinite());

    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory-wise risk estimation for iterative robust regression"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "run a configured experiment");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out", out_dir, "output directory (overrides output_dir)");
    run->add_option("--set", overrides, "key=value override, repeatable");
    auto* seed_opt = run->add_option("--seed", seed, "master seed override");

    auto* verify = app.add_subcommand("verify", "run built-in sanity checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(verify))
            return verify_cmd();
        return run_cmd(config_path, out_dir, overrides, seed_opt->count() > 0, seed);
    } catch (const trajrisk::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const trajrisk::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
