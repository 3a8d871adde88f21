#include "trajrisk/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <random>

#include "trajrisk/errors.hpp"
#include "trajrisk/rng.hpp"

namespace trajrisk {

namespace {

// Lower Cholesky factor of Sigma; hard error on non-SPD input.
Eigen::MatrixXd cholesky_factor(const Covariance& cov, Eigen::Index p) {
    switch (cov.kind) {
        case CovarianceKind::Identity:
            return Eigen::MatrixXd::Identity(p, p);
        case CovarianceKind::Diagonal: {
            if (cov.diagonal.size() != p)
                throw ConfigError("covariance diagonal length does not match p");
            if ((cov.diagonal.array() <= 0.0).any())
                throw ConfigError("covariance diagonal must be positive");
            Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
            l.diagonal() = cov.diagonal.array().sqrt();
            return l;
        }
        case CovarianceKind::Dense: {
            if (cov.dense.rows() != p || cov.dense.cols() != p)
                throw ConfigError("covariance matrix dimensions do not match p");
            Eigen::LLT<Eigen::MatrixXd> llt(cov.dense);
            if (llt.info() != Eigen::Success)
                throw ConfigError("covariance matrix is not positive definite");
            return llt.matrixL();
        }
    }
    throw ConfigError("unknown covariance kind");
}

}  // namespace

DataSet generate_dataset(const ProblemConfig& cfg) {
    if (cfg.n < 1 || cfg.p < 1)
        throw ConfigError("n and p must be at least 1");
    if (cfg.sparsity_fraction <= 0.0 || cfg.sparsity_fraction > 1.0)
        throw ConfigError("sparsity_fraction must lie in (0, 1]");
    const auto k = static_cast<Eigen::Index>(
        std::llround(cfg.sparsity_fraction * static_cast<double>(cfg.p)));
    if (k < 1)
        throw ConfigError("sparsity_fraction * p rounds to zero nonzeros");
    if (cfg.signal_strength < 0.0)
        throw ConfigError("signal_strength must be nonnegative");

    DataSet ds;
    ds.sigma_half = cholesky_factor(cfg.covariance, cfg.p);
    ds.identity_sigma = cfg.covariance.kind == CovarianceKind::Identity;

    auto eng = make_engine(derive_seed(cfg.seed, seed_tag::data));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    Eigen::MatrixXd z(cfg.n, cfg.p);
    for (Eigen::Index i = 0; i < cfg.n; ++i)
        for (Eigen::Index j = 0; j < cfg.p; ++j)
            z(i, j) = normal(eng);
    ds.X = ds.identity_sigma ? std::move(z) : Eigen::MatrixXd(z * ds.sigma_half.transpose());

    ds.b_star = Eigen::VectorXd::Zero(cfg.p);
    ds.b_star.head(k).setConstant(std::sqrt(cfg.signal_strength / static_cast<double>(k)));

    ds.eps.resize(cfg.n);
    if (cfg.noise.kind == NoiseKind::StudentT) {
        if (cfg.noise.param <= 0.0)
            throw ConfigError("student-t degrees of freedom must be positive");
        const double dof = cfg.noise.param;
        for (Eigen::Index i = 0; i < cfg.n; ++i) {
            const double g = normal(eng);
            // chi^2_2 = -2 log U; general dof via the gamma law.
            double chi2;
            if (dof == 2.0) {
                chi2 = -2.0 * std::log1p(-uniform(eng));
            } else {
                std::gamma_distribution<double> gamma(dof / 2.0, 2.0);
                chi2 = gamma(eng);
            }
            ds.eps(i) = g / std::sqrt(chi2 / dof);
        }
    } else {
        if (cfg.noise.param < 0.0)
            throw ConfigError("gaussian noise sd must be nonnegative");
        for (Eigen::Index i = 0; i < cfg.n; ++i)
            ds.eps(i) = cfg.noise.param * normal(eng);
    }

    ds.y = ds.X * ds.b_star;
    ds.y += ds.eps;
    return ds;
}

double psi(double r, const LossSpec& loss) {
    switch (loss.kind) {
        case LossKind::Huber:
            return std::clamp(r, -loss.delta, loss.delta);
        case LossKind::PseudoHuber: {
            const double u = r / loss.delta;
            return r / std::sqrt(1.0 + u * u);
        }
        case LossKind::Square:
            return r;
    }
    return r;
}

double psi_prime(double r, const LossSpec& loss) {
    switch (loss.kind) {
        case LossKind::Huber:
            return std::abs(r) <= loss.delta ? 1.0 : 0.0;
        case LossKind::PseudoHuber: {
            const double u = r / loss.delta;
            const double s = 1.0 + u * u;
            return 1.0 / (s * std::sqrt(s));
        }
        case LossKind::Square:
            return 1.0;
    }
    return 1.0;
}

Eigen::VectorXd prox(const Eigen::VectorXd& v, double eta, const PenaltySpec& pen) {
    if (pen.kind == PenaltyKind::None)
        return v;
    const double theta = pen.lambda * eta;
    Eigen::VectorXd out(v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        const double a = std::abs(v(j)) - theta;
        out(j) = a > 0.0 ? (v(j) > 0.0 ? a : -a) : 0.0;
    }
    return out;
}

Eigen::VectorXd prox_jacobian_diag(const Eigen::VectorXd& v_next, const PenaltySpec& pen) {
    if (pen.kind == PenaltyKind::None)
        return Eigen::VectorXd::Ones(v_next.size());
    return (v_next.array() != 0.0).cast<double>();
}

}  // namespace trajrisk
