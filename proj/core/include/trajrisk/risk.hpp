#pragma once

#include <Eigen/Dense>
#include <optional>

#include "trajrisk/trajectory.hpp"
#include "trajrisk/weights.hpp"

namespace trajrisk {

// Per-iterate error curves along one trajectory. All estimated curves
// include the irreducible ||eps||^2/n term; risk_only subtracts it from
// the oracle curve.
struct RiskSeries {
    Eigen::VectorXd r_true;     // ||Sigma^{1/2}(b^t - b*)||^2 + ||eps||^2/n
    Eigen::VectorXd risk_only;  // r_true minus noise_term
    Eigen::VectorXd r_hat;
    std::optional<Eigen::VectorXd> r_tilde;
    std::optional<Eigen::VectorXd> r_sub;
    double noise_term = 0.0;    // ||eps||^2/n
};

// Oracle curve; requires knowledge of b*, eps and Sigma^{1/2}.
Eigen::VectorXd oracle_risk(const Trajectory& traj, const DataSet& data);

// (1/n)||R e_t + F W_{t,.}^T||^2 using the strictly lower rows of W.
Eigen::VectorXd estimate_rhat(const Trajectory& traj, const Eigen::MatrixXd& W);

// Same functional with Wtilde = Khat^{-1} Ahat; requires solve_wtilde first.
Eigen::VectorXd estimate_rtilde(const Trajectory& traj, const WeightSet& ws);

// Batch-restricted variant built from Ktil^{-1} Atil; empty when the
// sub-solve was singular.
std::optional<Eigen::VectorXd> estimate_rsub(const Trajectory& traj,
                                             const SubSolveResult& sub);

}  // namespace trajrisk
