#include <doctest.h>

#include <cmath>

#include "brute_force.hpp"
#include "trajrisk/risk.hpp"

using namespace trajrisk;

namespace {

struct Instance {
    DataSet data;
    Trajectory traj;
};

Instance make_instance(Eigen::Index n, Eigen::Index p, Eigen::Index T,
                       double batch_fraction = 1.0, double eta = 0.3,
                       std::uint64_t seed = 31) {
    ProblemConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 1.0;
    cfg.signal_strength = 4.0;
    cfg.sparsity_fraction = 0.5;
    cfg.seed = seed;
    Instance inst{generate_dataset(cfg), {}};
    const Schedule sched = Schedule::fixed(T, eta, batch_fraction);
    const BatchPlan plan = sample_batches(n, sched, seed + 1);
    inst.traj = run_trajectory(inst.data, LossSpec{LossKind::Huber, 1.0},
                               PenaltySpec{}, sched, plan);
    return inst;
}

}  // namespace

TEST_CASE("oracle risk at the zero initializer") {
    const Instance inst = make_instance(20, 6, 4);
    const Eigen::VectorXd r = oracle_risk(inst.traj, inst.data);
    const double noise = inst.data.eps.squaredNorm() / 20.0;
    CHECK(r(0) == doctest::Approx(inst.data.b_star.squaredNorm() + noise).epsilon(1e-13));
    CHECK((r.array() >= 0.0).all());
}

TEST_CASE("oracle risk vanishes at the truth with no noise") {
    ProblemConfig cfg;
    cfg.n = 10;
    cfg.p = 4;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 0.0;
    cfg.signal_strength = 0.0;
    cfg.sparsity_fraction = 0.5;
    cfg.seed = 3;
    const DataSet data = generate_dataset(cfg);
    const Schedule sched = Schedule::fixed(3, 0.2, 1.0);
    const Trajectory traj = run_trajectory(data, LossSpec{LossKind::Huber, 1.0},
                                           PenaltySpec{}, sched, sample_batches(10, sched, 1));
    CHECK(oracle_risk(traj, data).isZero(0.0));
}

TEST_CASE("oracle risk equals the dense quadratic-form identity") {
    const Instance inst = make_instance(15, 5, 5);
    const Eigen::VectorXd r = oracle_risk(inst.traj, inst.data);
    // columnwise H = B - b*; the curve is diag(H'H) + ||eps||^2/n under
    // identity covariance
    Eigen::MatrixXd H = inst.traj.B.colwise() - inst.data.b_star;
    const Eigen::VectorXd diag = (H.transpose() * H).diagonal();
    const double noise = inst.data.eps.squaredNorm() / 15.0;
    CHECK((r - (diag.array() + noise).matrix()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("residual-correction estimate basics") {
    const Instance inst = make_instance(18, 6, 4, 0.5);
    const Eigen::Index T = inst.traj.T();
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(T, T);
    const Eigen::VectorXd rh0 = estimate_rhat(inst.traj, zero);
    for (Eigen::Index t = 0; t < T; ++t)
        CHECK(rh0(t) == doctest::Approx(inst.traj.R.col(t).squaredNorm() / 18.0)
                            .epsilon(1e-13));
    CHECK(rh0(0) == doctest::Approx(inst.data.y.squaredNorm() / 18.0).epsilon(1e-13));

    const WeightSet ws = dense_weights(inst.traj, inst.data);
    const Eigen::VectorXd rh = estimate_rhat(inst.traj, ws.W);
    CHECK((rh.array() >= 0.0).all());
    // structural identity against the explicit matrix form
    const Eigen::MatrixXd M = inst.traj.R + inst.traj.F * ws.W.transpose();
    const Eigen::VectorXd diag = (M.transpose() * M).diagonal() / 18.0;
    CHECK((rh - diag).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("estimate at step t ignores later scores") {
    const Instance inst = make_instance(18, 6, 5, 0.5);
    const WeightSet ws = dense_weights(inst.traj, inst.data);
    const Eigen::VectorXd base = estimate_rhat(inst.traj, ws.W);
    Trajectory tweaked = inst.traj;
    tweaked.F.col(4).array() += 100.0;
    const Eigen::VectorXd bumped = estimate_rhat(tweaked, ws.W);
    for (Eigen::Index t = 0; t < 4; ++t)
        CHECK(bumped(t) == base(t));
}

TEST_CASE("data-driven weights feed the same functional") {
    // square loss keeps psi' constant so the batch-restricted weights
    // collapse exactly onto the main ones at full batch
    ProblemConfig cfg;
    cfg.n = 18;
    cfg.p = 6;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 1.0;
    cfg.signal_strength = 4.0;
    cfg.sparsity_fraction = 0.5;
    cfg.seed = 31;
    Instance inst{generate_dataset(cfg), {}};
    const Schedule sched = Schedule::fixed(4, 0.2, 1.0);
    inst.traj = run_trajectory(inst.data, LossSpec{LossKind::Square, 1.0}, PenaltySpec{},
                               sched, sample_batches(18, sched, 32));
    WeightSet ws = dense_weights(inst.traj, inst.data);
    solve_wtilde(ws, 18);
    const Eigen::VectorXd rt = estimate_rtilde(inst.traj, ws);
    CHECK(rt(0) == doctest::Approx(inst.data.y.squaredNorm() / 18.0).epsilon(1e-13));
    CHECK((rt.array() >= 0.0).all());

    WeightSet nosolve = dense_weights(inst.traj, inst.data);
    CHECK_THROWS(estimate_rtilde(inst.traj, nosolve));

    const SubSolveResult sub = solve_wtilde_sub(ws, inst.traj);
    const auto rs = estimate_rsub(inst.traj, sub);
    REQUIRE(rs.has_value());
    // full batch collapses the batch-restricted weights onto the main ones
    CHECK((*rs - rt).cwiseAbs().maxCoeff() <= 1e-10);

    SubSolveResult none;
    CHECK(!estimate_rsub(inst.traj, none).has_value());
}

TEST_CASE("single-step series needs no weights") {
    const Instance inst = make_instance(12, 4, 1);
    WeightSet ws = dense_weights(inst.traj, inst.data);
    solve_wtilde(ws, 12);
    const Eigen::VectorXd rt = estimate_rtilde(inst.traj, ws);
    REQUIRE(rt.size() == 1);
    CHECK(rt(0) == doctest::Approx(inst.data.y.squaredNorm() / 12.0).epsilon(1e-13));
}
