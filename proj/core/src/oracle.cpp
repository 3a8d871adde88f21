#include "trajrisk/oracle.hpp"

#include <cmath>

#include "trajrisk/errors.hpp"

namespace trajrisk {

namespace {

double default_step(const DataSet& data, const PerturbationSpec& pert) {
    if (pert.h > 0.0)
        return pert.h;
    return 1e-5 * (1.0 + std::abs(data.X(pert.i, pert.j)));
}

DataSet perturbed(const DataSet& data, const PerturbationSpec& pert, double h) {
    DataSet d = data;
    d.X(pert.i, pert.j) += h;
    if (pert.regenerate_y)
        d.y = d.X * d.b_star + d.eps;
    return d;
}

void check_smooth(const Trajectory& traj, const LossSpec& loss,
                  const PenaltySpec& pen, const Trajectory& other,
                  double kink_tol) {
    if (loss.kind == LossKind::Huber) {
        const double gap =
            (traj.R.array().abs() - loss.delta).abs().minCoeff();
        if (gap < kink_tol)
            throw KinkError("residual within kink tolerance of the Huber corner");
    }
    if (pen.kind == PenaltyKind::L1) {
        const auto sup_a = (traj.B.array() != 0.0).eval();
        const auto sup_b = (other.B.array() != 0.0).eval();
        if (!(sup_a == sup_b).all())
            throw KinkError("support change under perturbation; pick a smaller h");
    }
}

}  // namespace

Eigen::MatrixXd fd_iterate_derivative(const DataSet& data, const LossSpec& loss,
                                      const PenaltySpec& pen, const Schedule& schedule,
                                      const BatchPlan& plan, const PerturbationSpec& pert,
                                      double kink_tol) {
    const double h = default_step(data, pert);
    const DataSet dp = perturbed(data, pert, h);
    const DataSet dn = perturbed(data, pert, -h);
    const Trajectory tp = run_trajectory(dp, loss, pen, schedule, plan);
    const Trajectory tn = run_trajectory(dn, loss, pen, schedule, plan);
    check_smooth(tp, loss, pen, tn, kink_tol);
    check_smooth(tn, loss, pen, tp, kink_tol);
    return (tp.B - tn.B) / (2.0 * h);
}

Eigen::MatrixXd fd_F_derivative(const DataSet& data, const LossSpec& loss,
                                const PenaltySpec& pen, const Schedule& schedule,
                                const BatchPlan& plan, const PerturbationSpec& pert,
                                double kink_tol) {
    const double h = default_step(data, pert);
    const DataSet dp = perturbed(data, pert, h);
    const DataSet dn = perturbed(data, pert, -h);
    const Trajectory tp = run_trajectory(dp, loss, pen, schedule, plan);
    const Trajectory tn = run_trajectory(dn, loss, pen, schedule, plan);
    check_smooth(tp, loss, pen, tn, kink_tol);
    check_smooth(tn, loss, pen, tp, kink_tol);
    return (tp.F - tn.F) / (2.0 * h);
}

Eigen::MatrixXd analytic_iterate_derivative(const Trajectory& traj, const DataSet& data,
                                            const PerturbationSpec& pert,
                                            Eigen::Index cap) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = traj.p();
    if (p * T > cap)
        throw CapacityError("p*T exceeds the derivative propagation cap");
    if (pert.i < 0 || pert.i >= traj.n() || pert.j < 0 || pert.j >= p)
        throw ConfigError("perturbation index out of range");

    GammaOperator gamma(traj, data);
    Eigen::MatrixXd db = Eigen::MatrixXd::Zero(p, T);
    for (Eigen::Index s = 0; s + 1 < T; ++s) {
        const double hjs = pert.regenerate_y
                               ? traj.B(pert.j, s) - data.b_star(pert.j)
                               : traj.B(pert.j, s);
        // X' S_s D_s e_i collapses to a scaled row of X
        const double di = gamma.batch_mask(s)[static_cast<std::size_t>(pert.i)]
                              ? traj.Ddiag(pert.i, s)
                              : 0.0;
        Eigen::VectorXd v = (-hjs * di) * data.X.row(pert.i).transpose();
        v(pert.j) += traj.F(pert.i, s);
        if (v.isZero(0.0))
            continue;
        const auto g = gamma.gamma_apply(s, v);
        for (Eigen::Index t = s + 1; t < T; ++t)
            db.col(t) += g[static_cast<std::size_t>(t - s - 1)];
    }
    return db;
}

Eigen::MatrixXd analytic_F_derivative(const Trajectory& traj, const DataSet& data,
                                      const PerturbationSpec& pert,
                                      Eigen::Index cap) {
    const Eigen::MatrixXd db = analytic_iterate_derivative(traj, data, pert, cap);
    const Eigen::Index T = traj.T();
    GammaOperator gamma(traj, data);
    Eigen::MatrixXd dF = Eigen::MatrixXd::Zero(traj.n(), T);
    for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::VectorXd dr = -(data.X * db.col(t));
        dr(pert.i) -= pert.regenerate_y
                          ? traj.B(pert.j, t) - data.b_star(pert.j)
                          : traj.B(pert.j, t);
        const auto& mask = gamma.batch_mask(t);
        for (Eigen::Index l = 0; l < traj.n(); ++l)
            if (mask[static_cast<std::size_t>(l)])
                dF(l, t) = traj.Ddiag(l, t) * dr(l);
    }
    return dF;
}

}  // namespace trajrisk
