#include "trajrisk/risk.hpp"

#include "trajrisk/errors.hpp"

namespace trajrisk {

Eigen::VectorXd oracle_risk(const Trajectory& traj, const DataSet& data) {
    const Eigen::Index T = traj.T();
    const double noise = data.eps.squaredNorm() / static_cast<double>(traj.n());
    Eigen::VectorXd r(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::VectorXd d = traj.B.col(t) - data.b_star;
        // d' Sigma d = ||L' d||^2 with Sigma = L L'
        if (!data.identity_sigma)
            d = data.sigma_half.transpose() * d;
        r(t) = d.squaredNorm() + noise;
    }
    return r;
}

Eigen::VectorXd estimate_rhat(const Trajectory& traj, const Eigen::MatrixXd& W) {
    // column t of F W' is sum_{s<t} W(t,s) F.col(s)
    Eigen::MatrixXd M = traj.R + traj.F * W.transpose();
    return M.colwise().squaredNorm().transpose() / static_cast<double>(traj.n());
}

Eigen::VectorXd estimate_rtilde(const Trajectory& traj, const WeightSet& ws) {
    if (!ws.Wtilde)
        throw ConfigError("Wtilde not populated; call solve_wtilde first");
    return estimate_rhat(traj, *ws.Wtilde);
}

std::optional<Eigen::VectorXd> estimate_rsub(const Trajectory& traj,
                                             const SubSolveResult& sub) {
    if (!sub.Wsub)
        return std::nullopt;
    return estimate_rhat(traj, *sub.Wsub);
}

}  // namespace trajrisk
