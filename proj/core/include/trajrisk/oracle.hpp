#pragma once

#include <Eigen/Dense>

#include "trajrisk/trajectory.hpp"
#include "trajrisk/weights.hpp"

namespace trajrisk {

// One entry perturbation X_ij -> X_ij +- h. With regenerate_y the response
// is rebuilt as y = X b* + eps so dy/dx_ij = b*_j; otherwise y is held
// fixed.
struct PerturbationSpec {
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double h = 0.0;            // <= 0 picks 1e-5 * (1 + |x_ij|)
    bool regenerate_y = true;
};

// Central finite difference of all iterates with respect to x_ij; returns
// a p x T matrix whose column t is d b^t / d x_ij. The batch plan is held
// fixed. Throws KinkError if either perturbed run sits within kink_tol of
// a Huber kink or changes the L1 support.
Eigen::MatrixXd fd_iterate_derivative(const DataSet& data, const LossSpec& loss,
                                      const PenaltySpec& pen, const Schedule& schedule,
                                      const BatchPlan& plan, const PerturbationSpec& pert,
                                      double kink_tol = 1e-3);

// Central finite difference of the masked score matrix F (n x T).
Eigen::MatrixXd fd_F_derivative(const DataSet& data, const LossSpec& loss,
                                const PenaltySpec& pen, const Schedule& schedule,
                                const BatchPlan& plan, const PerturbationSpec& pert,
                                double kink_tol = 1e-3);

// Closed-form d b^t / d x_ij propagated through Gamma:
//   sum_{s<t} Gamma_{t,s} [F(i,s) e_j - H(j,s) X^T S_s D_s e_i],
// with H = B - b* columnwise when the response tracks the perturbation
// (regenerate_y) and H = B otherwise. Ignores pert.h.
Eigen::MatrixXd analytic_iterate_derivative(const Trajectory& traj, const DataSet& data,
                                            const PerturbationSpec& pert,
                                            Eigen::Index cap = kDenseCap);

// Chain rule on top of the iterate derivative:
//   dF(l,t) = (S_t D_t)_ll * (-delta_li H(j,t) - (X db^t)_l) for t < T.
Eigen::MatrixXd analytic_F_derivative(const Trajectory& traj, const DataSet& data,
                                      const PerturbationSpec& pert,
                                      Eigen::Index cap = kDenseCap);

}  // namespace trajrisk
