#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

namespace trajrisk {

enum class CovarianceKind { Identity, Diagonal, Dense };

// Feature covariance Sigma; must be SPD (checked via Cholesky for the
// dense case at data-generation time).
struct Covariance {
    CovarianceKind kind = CovarianceKind::Identity;
    Eigen::VectorXd diagonal;  // Diagonal only
    Eigen::MatrixXd dense;     // Dense only

    static Covariance identity() { return {}; }
    static Covariance diag(Eigen::VectorXd d) {
        Covariance c;
        c.kind = CovarianceKind::Diagonal;
        c.diagonal = std::move(d);
        return c;
    }
    static Covariance spd(Eigen::MatrixXd m) {
        Covariance c;
        c.kind = CovarianceKind::Dense;
        c.dense = std::move(m);
        return c;
    }
};

enum class NoiseKind { StudentT, Gaussian };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::StudentT;
    double param = 2.0;  // degrees of freedom (StudentT) or sd (Gaussian)
};

struct ProblemConfig {
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    Covariance covariance;
    NoiseSpec noise;
    double signal_strength = 10.0;   // target ||b*||^2
    double sparsity_fraction = 0.05; // fraction of nonzero b* entries
    std::uint64_t seed = 0;

    // Read-only diagnostic; never enforced.
    double aspect_ratio() const {
        return static_cast<double>(p) / static_cast<double>(n);
    }
};

struct DataSet {
    Eigen::MatrixXd X;          // n x p
    Eigen::VectorXd y;          // n
    Eigen::VectorXd b_star;     // p
    Eigen::VectorXd eps;        // n
    Eigen::MatrixXd sigma_half; // p x p lower-triangular Cholesky factor
    bool identity_sigma = true; // fast path when Sigma == I
};

DataSet generate_dataset(const ProblemConfig& cfg);

enum class LossKind { Huber, PseudoHuber, Square };

struct LossSpec {
    LossKind kind = LossKind::Huber;
    double delta = 1.0;
};

// psi = rho', applied componentwise by callers.
double psi(double r, const LossSpec& loss);
// psi' (rho''); Huber boundary |r| == delta maps to 1.
double psi_prime(double r, const LossSpec& loss);

enum class PenaltyKind { None, L1 };

struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::None;
    double lambda = 0.0;
};

// Proximal map of eta*g: identity for no penalty, soft-thresholding at
// lambda*eta for L1.
Eigen::VectorXd prox(const Eigen::VectorXd& v, double eta, const PenaltySpec& pen);

// Diagonal of the prox Jacobian evaluated at the already-thresholded
// iterate: support indicator for L1, all ones otherwise.
Eigen::VectorXd prox_jacobian_diag(const Eigen::VectorXd& v_next, const PenaltySpec& pen);

}  // namespace trajrisk
