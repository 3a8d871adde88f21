#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "trajrisk/model.hpp"

namespace trajrisk {

struct Schedule {
    Eigen::Index T = 1;            // stored iterates; etas[0..T-2] are consumed
    Eigen::VectorXd etas;          // length T; last entry carried but unused
    double batch_fraction = 1.0;   // in (0, 1]

    static Schedule fixed(Eigen::Index T, double eta, double batch_fraction = 1.0);
    static Schedule from_etas(Eigen::VectorXd etas, double batch_fraction = 1.0);
    // eta_t = (1 + sqrt(p/n_*))^-2 with n_* = batch_fraction * n.
    static Schedule auto_step(Eigen::Index T, Eigen::Index n, Eigen::Index p,
                              double batch_fraction = 1.0);
};

double auto_step_size(Eigen::Index n, Eigen::Index p, double batch_fraction);

struct BatchPlan {
    std::vector<std::vector<Eigen::Index>> batches;  // T sorted index sets
    Eigen::Index batch_size = 0;                     // common |I_t|
    bool full_batch = true;
};

// T independent uniform subsets of size round(batch_fraction*n), sampled
// without replacement within each batch.
BatchPlan sample_batches(Eigen::Index n, const Schedule& schedule, std::uint64_t seed);

// Everything captured along one run of the unified iteration
//   b^{t+1} = prox(b^t + (eta_t/|I_t|) X^T S_t psi(y - X b^t)).
struct Trajectory {
    Eigen::MatrixXd B;         // p x T iterates, column 0 is the zero initializer
    Eigen::MatrixXd R;         // n x T residuals y - X b^t
    Eigen::MatrixXd F;         // n x T batch-masked psi(residuals), S_t psi(.)
    Eigen::MatrixXd Ftil;      // n x T unmasked psi(residuals)
    Eigen::MatrixXd Ddiag;     // n x T diag D_t = psi'(residuals)
    Eigen::MatrixXd Dtil_diag; // p x T diag Dtil_t (support of b^{t+1}; last col unused)
    BatchPlan plan;
    Schedule schedule;

    Eigen::Index T() const { return B.cols(); }
    Eigen::Index n() const { return R.rows(); }
    Eigen::Index p() const { return B.rows(); }
    double batch_count(Eigen::Index t) const {
        return static_cast<double>(plan.batches[static_cast<std::size_t>(t)].size());
    }
};

Trajectory run_trajectory(const DataSet& data, const LossSpec& loss,
                          const PenaltySpec& pen, const Schedule& schedule,
                          const BatchPlan& plan);

// Matrix-free action of P_t = Dtil_t (I - (eta_t/|I_t|) X^T S_t D_t X)
// on a vector; t is the 0-based step index in [0, T-1).
Eigen::VectorXd apply_P(Eigen::Index t, const Eigen::VectorXd& v,
                        const Trajectory& traj, const DataSet& data);

}  // namespace trajrisk
