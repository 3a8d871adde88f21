#include <doctest.h>

#include <cmath>
#include <random>

#include "brute_force.hpp"
#include "trajrisk/errors.hpp"
#include "trajrisk/oracle.hpp"

using namespace trajrisk;

namespace {

struct Setup {
    DataSet data;
    LossSpec loss;
    PenaltySpec pen;
    Schedule sched;
    BatchPlan plan;
    Trajectory traj;
};

Setup make_setup(Eigen::Index n, Eigen::Index p, Eigen::Index T, double batch_fraction,
                 LossKind kind, double eta = 0.3, std::uint64_t seed = 8) {
    ProblemConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 1.0;
    cfg.signal_strength = 4.0;
    cfg.sparsity_fraction = 0.5;
    cfg.seed = seed;
    Setup s{generate_dataset(cfg), LossSpec{kind, 1.0}, PenaltySpec{},
            Schedule::fixed(T, eta, batch_fraction), {}, {}};
    s.plan = sample_batches(n, s.sched, seed + 1);
    s.traj = run_trajectory(s.data, s.loss, s.pen, s.sched, s.plan);
    return s;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("the initial iterate has zero derivative") {
    const Setup s = make_setup(10, 6, 4, 0.5, LossKind::PseudoHuber);
    PerturbationSpec pert;
    pert.i = 2;
    pert.j = 1;
    const Eigen::MatrixXd fd =
        fd_iterate_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert);
    CHECK(fd.col(0).isZero(1e-9));
    const Eigen::MatrixXd an = analytic_iterate_derivative(s.traj, s.data, pert);
    CHECK(an.col(0).isZero(0.0));
}

TEST_CASE("square-loss two-step derivative cross-check") {
    const Setup s = make_setup(10, 5, 2, 1.0, LossKind::Square, 0.4);
    PerturbationSpec pert;
    pert.i = 4;
    pert.j = 3;
    const Eigen::MatrixXd fd =
        fd_iterate_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert);
    const Eigen::MatrixXd an = analytic_iterate_derivative(s.traj, s.data, pert);
    CHECK(rel_err(fd, an) <= 1e-6);
}

TEST_CASE("finite differences shrink at second order") {
    const Setup s = make_setup(10, 5, 4, 1.0, LossKind::PseudoHuber);
    PerturbationSpec pert;
    pert.i = 1;
    pert.j = 2;
    const Eigen::MatrixXd an = analytic_iterate_derivative(s.traj, s.data, pert);
    pert.h = 1e-2;
    const double e1 = (fd_iterate_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert) - an)
                          .cwiseAbs()
                          .maxCoeff();
    pert.h = 5e-3;
    const double e2 = (fd_iterate_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert) - an)
                          .cwiseAbs()
                          .maxCoeff();
    CHECK(e1 / e2 > 2.5);
    CHECK(e1 / e2 < 6.0);
}

TEST_CASE("iterate derivatives agree across oracles on the reference instance") {
    const Setup s = make_setup(10, 6, 5, 0.5, LossKind::PseudoHuber, 0.3);
    std::mt19937_64 eng(17);
    std::uniform_int_distribution<Eigen::Index> pick_i(0, 9), pick_j(0, 5);
    for (int k = 0; k < 20; ++k) {
        PerturbationSpec pert;
        pert.i = pick_i(eng);
        pert.j = pick_j(eng);
        const Eigen::MatrixXd fd =
            fd_iterate_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert);
        const Eigen::MatrixXd an = analytic_iterate_derivative(s.traj, s.data, pert);
        CHECK(rel_err(fd, an) <= 1e-4);
    }
}

TEST_CASE("zero steps freeze the whole path") {
    const Setup base = make_setup(10, 5, 4, 1.0, LossKind::PseudoHuber);
    Eigen::VectorXd etas = Eigen::VectorXd::Zero(4);
    const Schedule sched = Schedule::from_etas(etas, 1.0);
    const BatchPlan plan = sample_batches(10, sched, 9);
    const Trajectory traj = run_trajectory(base.data, base.loss, base.pen, sched, plan);
    PerturbationSpec pert;
    pert.i = 3;
    pert.j = 1;
    CHECK(analytic_iterate_derivative(traj, base.data, pert).isZero(0.0));
}

TEST_CASE("score derivatives agree across oracles and respect the mask") {
    const Setup s = make_setup(10, 6, 5, 0.5, LossKind::PseudoHuber, 0.3);
    std::mt19937_64 eng(23);
    std::uniform_int_distribution<Eigen::Index> pick_i(0, 9), pick_j(0, 5);
    for (int k = 0; k < 10; ++k) {
        PerturbationSpec pert;
        pert.i = pick_i(eng);
        pert.j = pick_j(eng);
        const Eigen::MatrixXd fd =
            fd_F_derivative(s.data, s.loss, s.pen, s.sched, s.plan, pert);
        const Eigen::MatrixXd an = analytic_F_derivative(s.traj, s.data, pert);
        CHECK(rel_err(fd, an) <= 1e-4);
        for (Eigen::Index t = 0; t < s.traj.T(); ++t) {
            const auto& batch = s.plan.batches[static_cast<std::size_t>(t)];
            for (Eigen::Index l = 0; l < 10; ++l)
                if (!std::binary_search(batch.begin(), batch.end(), l))
                    CHECK(an(l, t) == 0.0);
        }
    }
}

TEST_CASE("trace identity between the summed derivative and the weight row") {
    // summing the derivative over matched perturbation/component index j
    // reduces the first term to trace(Gamma_{t,s}) F(i,s); both sides come
    // from the same dense blocks so the identity is exact
    const Setup s = make_setup(12, 5, 5, 0.5, LossKind::PseudoHuber, 0.3);
    const Eigen::MatrixXd gamma = brute::kronecker_gamma(s.traj, s.data);
    const WeightSet ws = dense_weights(s.traj, s.data);
    const Eigen::MatrixXd H = s.traj.B.colwise() - s.data.b_star;
    const Eigen::MatrixXd dm = [&] {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(12, s.traj.T());
        for (Eigen::Index t = 0; t < s.traj.T(); ++t)
            for (Eigen::Index i : s.plan.batches[static_cast<std::size_t>(t)])
                m(i, t) = s.traj.Ddiag(i, t);
        return m;
    }();

    const Eigen::Index i = 4;
    for (Eigen::Index t = 1; t < s.traj.T(); ++t) {
        double lhs = 0.0;
        for (Eigen::Index j = 0; j < 5; ++j) {
            PerturbationSpec pert;
            pert.i = i;
            pert.j = j;
            lhs += analytic_iterate_derivative(s.traj, s.data, pert)(j, t);
        }
        double rhs = 0.0;
        for (Eigen::Index u = 0; u < t; ++u) {
            const Eigen::MatrixXd g = brute::block(gamma, t, u, 5);
            const Eigen::VectorXd xi = dm(i, u) * s.data.X.row(i).transpose();
            rhs += ws.W(t, u) * s.traj.F(i, u) - H.col(u).dot(g * xi);
        }
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("huber kink gate") {
    ProblemConfig cfg;
    cfg.n = 8;
    cfg.p = 3;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 1.0;
    cfg.signal_strength = 2.0;
    cfg.sparsity_fraction = 0.5;
    cfg.seed = 4;
    DataSet data = generate_dataset(cfg);
    const LossSpec loss{LossKind::Huber, 1.0};
    const Schedule sched = Schedule::fixed(3, 0.2, 1.0);
    const BatchPlan plan = sample_batches(8, sched, 1);
    // park one initial residual exactly on the corner; keep y fixed so the
    // edit survives the perturbed re-runs
    data.y(0) = loss.delta;
    PerturbationSpec pert;
    pert.i = 5;
    pert.j = 1;
    pert.regenerate_y = false;
    CHECK_THROWS_AS(fd_iterate_derivative(data, loss, PenaltySpec{}, sched, plan, pert),
                    KinkError);
}

TEST_CASE("l1 support-change gate") {
    const Setup s = make_setup(10, 4, 3, 1.0, LossKind::Square, 0.3, 12);
    const PenaltySpec pen{PenaltyKind::L1, 0.05};
    const Trajectory traj = run_trajectory(s.data, s.loss, pen, s.sched, s.plan);
    // a large enough design perturbation must flip some coordinate across
    // the soft threshold between the plus and minus runs
    bool found = false;
    for (double h : {0.5, 1.0, 2.0}) {
        for (Eigen::Index j = 0; j < 4 && !found; ++j) {
            PerturbationSpec pert;
            pert.i = 0;
            pert.j = j;
            pert.h = h;
            try {
                fd_iterate_derivative(s.data, s.loss, pen, s.sched, s.plan, pert);
            } catch (const KinkError&) {
                found = true;
            } catch (const NumericalError&) {
            }
        }
        if (found)
            break;
    }
    CHECK(found);
    (void)traj;
}
