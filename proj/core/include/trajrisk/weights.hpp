#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "trajrisk/trajectory.hpp"

namespace trajrisk {

// Matrix-free view of the block strictly-lower-triangular operator Gamma,
// whose (t,s) block obeys
//   Gamma_{s+1,s} = (eta_s/|I_s|) Dtil_s,
//   Gamma_{t+1,s} = P_t Gamma_{t,s}.
// Batch rows of X are gathered once per step so repeated block pushes are
// plain GEMMs.
class GammaOperator {
  public:
    GammaOperator(const Trajectory& traj, const DataSet& data);

    const Trajectory& traj() const { return traj_; }
    const DataSet& data() const { return data_; }
    Eigen::Index T() const { return traj_.T(); }

    // Seed block action: (eta_s/|I_s|) Dtil_s .* v.
    Eigen::VectorXd seed(Eigen::Index s, const Eigen::VectorXd& v) const;

    // In-place G <- P_t G on a p x k block.
    void push(Eigen::Index t, Eigen::Ref<Eigen::MatrixXd> G) const;

    // Gamma_{t,s} v for t = s+1..T-1 (returns T-1-s vectors).
    std::vector<Eigen::VectorXd> gamma_apply(Eigen::Index s,
                                             const Eigen::VectorXd& v) const;

    // X restricted to batch rows of step t (reference to X itself when the
    // plan is full-batch).
    const Eigen::MatrixXd& batch_rows(Eigen::Index t) const;
    const std::vector<char>& batch_mask(Eigen::Index t) const;

  private:
    const Trajectory& traj_;
    const DataSet& data_;
    std::vector<Eigen::MatrixXd> xb_;          // gathered rows, empty if full batch
    std::vector<std::vector<char>> masks_;     // n-length membership masks
};

enum class WeightMethod { Dense, Hutchinson };

struct WeightSet {
    Eigen::MatrixXd W;      // trace(Sigma Gamma_{t,s}); strictly lower
    Eigen::MatrixXd Ahat;   // trace(D_t X Gamma_{t,s} X^T); strictly lower
    Eigen::MatrixXd Khat;   // diag trace(D_t) minus trace(D_t X Gamma X^T S_s D_s)
    std::optional<Eigen::MatrixXd> Wtilde;  // Khat^{-1} Ahat once solved
    std::optional<Eigen::MatrixXd> Atil;    // trace(X Gamma X^T S_s D_s)
    std::optional<Eigen::MatrixXd> Ktil;    // batch-restricted variant of Khat

    // Per-entry standard errors of the probe estimates (Hutchinson only).
    Eigen::MatrixXd se_W, se_Ahat, se_Khat, se_Atil, se_Ktil;

    WeightMethod method = WeightMethod::Dense;
    int probes = 0;
    std::uint64_t probe_seed = 0;
    bool has_w = true;
    bool has_ahat = true;
};

inline constexpr Eigen::Index kDenseCap = 4000;  // max p*T for dense assembly

// Exact assembly of all five matrices by pushing basis vectors through the
// Gamma recursion. Guarded by p*T <= cap; throws CapacityError beyond it.
WeightSet dense_weights(const Trajectory& traj, const DataSet& data,
                        bool compute_sub = true, Eigen::Index cap = kDenseCap);

struct HutchinsonOptions {
    int probes = 100;
    std::uint64_t seed = 0;
    bool compute_w = true;          // W (needs Sigma)
    bool compute_ahat_khat = true;  // Ahat and Khat
    bool compute_sub = false;       // Atil and Ktil
    int block = 8;                  // probes propagated together
};

// Rademacher-probe estimates of the trace matrices. Probes are shared
// across all (t,s) pairs and across matrices; the diagonals of Khat/Ktil
// are plain sums and computed exactly.
WeightSet hutchinson_weights(const Trajectory& traj, const DataSet& data,
                             const HutchinsonOptions& opt);

// Solve Khat Wtilde = Ahat by forward substitution (Khat lower triangular);
// throws SingularityError if |Khat[t,t]| < tol_scale * n.
void solve_wtilde(WeightSet& ws, Eigen::Index n, double tol_scale = 1e-10);

struct SubSolveResult {
    std::optional<Eigen::MatrixXd> Wsub;  // Ktil^{-1} Atil, absent when singular
    std::vector<Eigen::Index> singular;   // diagonals below the hard tolerance
    std::vector<Eigen::Index> flagged;    // small-diagonal warnings
};

// The Remark's direct generalization: Ktil^{-1} Atil. Hard-singular
// diagonals suppress the solve; diagonals whose in-batch mean psi' falls
// below warn_ratio times the full-sample mean are flagged but solved.
SubSolveResult solve_wtilde_sub(const WeightSet& ws, const Trajectory& traj,
                                double tol_scale = 1e-10, double warn_ratio = 0.7);

}  // namespace trajrisk
