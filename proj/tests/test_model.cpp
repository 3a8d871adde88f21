#include <doctest.h>

#include <cmath>
#include <random>

#include "trajrisk/errors.hpp"
#include "trajrisk/model.hpp"

using namespace trajrisk;

namespace {

ProblemConfig small_problem() {
    ProblemConfig cfg;
    cfg.n = 20;
    cfg.p = 8;
    cfg.noise.kind = NoiseKind::Gaussian;
    cfg.noise.param = 1.0;
    cfg.signal_strength = 10.0;
    cfg.sparsity_fraction = 0.25;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("psi values") {
    const LossSpec huber{LossKind::Huber, 1.0};
    const LossSpec pseudo{LossKind::PseudoHuber, 1.0};
    const LossSpec square{LossKind::Square, 1.0};

    CHECK(psi(0.0, huber) == 0.0);
    CHECK(psi(3.0, huber) == 1.0);
    CHECK(psi(-3.0, huber) == -1.0);
    CHECK(psi(1.0, pseudo) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(psi(2.5, square) == 2.5);
}

TEST_CASE("psi_prime values") {
    const LossSpec huber{LossKind::Huber, 1.0};
    const LossSpec pseudo{LossKind::PseudoHuber, 1.0};

    CHECK(psi_prime(0.0, pseudo) == 1.0);
    CHECK(psi_prime(3.0, huber) == 0.0);
    CHECK(psi_prime(1.0, pseudo) == doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-12));
    CHECK(psi_prime(1.0, huber) == 1.0);  // boundary closed from the left
    CHECK(psi_prime(4.0, LossSpec{LossKind::Square, 1.0}) == 1.0);
}

TEST_CASE("psi is odd, bounded and 1-Lipschitz") {
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (const auto kind : {LossKind::Huber, LossKind::PseudoHuber, LossKind::Square}) {
        const LossSpec loss{kind, 0.7};
        for (int k = 0; k < 100000; ++k) {
            const double a = u(eng), b = u(eng);
            CHECK(std::abs(psi(a, loss) - psi(b, loss)) <= std::abs(a - b) + 1e-12);
        }
        for (int k = 0; k < 1000; ++k) {
            const double a = u(eng);
            CHECK(psi(-a, loss) == doctest::Approx(-psi(a, loss)).epsilon(1e-14));
            if (kind != LossKind::Square)
                CHECK(std::abs(psi(a, loss)) <= loss.delta);
        }
    }
}

TEST_CASE("psi_prime matches finite differences away from the kink") {
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const double h = 1e-6;
    for (const auto kind : {LossKind::Huber, LossKind::PseudoHuber}) {
        const LossSpec loss{kind, 1.0};
        int done = 0;
        while (done < 1000) {
            const double r = u(eng);
            if (std::abs(std::abs(r) - loss.delta) < 1e-3 + h)
                continue;
            const double fd = (psi(r + h, loss) - psi(r - h, loss)) / (2.0 * h);
            CHECK(std::abs(psi_prime(r, loss) - fd) <= 1e-6);
            ++done;
        }
    }
}

TEST_CASE("prox soft-thresholding") {
    const PenaltySpec l1{PenaltyKind::L1, 1.0};
    const PenaltySpec none;
    Eigen::VectorXd v(3);
    v << 2.5, -0.5, 0.0;
    const Eigen::VectorXd out = prox(v, 1.0, l1);
    CHECK(out(0) == 1.5);
    CHECK(out(1) == 0.0);
    CHECK(out(2) == 0.0);
    CHECK(prox(v, 0.3, none) == v);
}

TEST_CASE("prox is nonexpansive and fixes zero") {
    std::mt19937_64 eng(7);
    std::normal_distribution<double> g(0.0, 2.0);
    const PenaltySpec l1{PenaltyKind::L1, 0.8};
    for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd a(5), b(5);
        for (int j = 0; j < 5; ++j) {
            a(j) = g(eng);
            b(j) = g(eng);
        }
        CHECK((prox(a, 0.5, l1) - prox(b, 0.5, l1)).norm() <= (a - b).norm() + 1e-14);
    }
    CHECK(prox(Eigen::VectorXd::Zero(4), 0.5, l1).isZero(0.0));
}

TEST_CASE("prox_jacobian_diag") {
    const PenaltySpec l1{PenaltyKind::L1, 1.0};
    const PenaltySpec none;
    Eigen::VectorXd v(3);
    v << 0.0, 1.5, -0.2;
    CHECK(prox_jacobian_diag(v, none) == Eigen::VectorXd::Ones(3));
    const Eigen::VectorXd d = prox_jacobian_diag(v, l1);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == 1.0);
    CHECK(d(2) == 1.0);
    CHECK(prox_jacobian_diag(Eigen::VectorXd::Zero(3), l1).isZero(0.0));
}

TEST_CASE("dataset generation is deterministic and exact") {
    const ProblemConfig cfg = small_problem();
    const DataSet a = generate_dataset(cfg);
    const DataSet b = generate_dataset(cfg);
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
    CHECK(a.eps == b.eps);
    CHECK(a.b_star == b.b_star);
    const Eigen::VectorXd xb = a.X * a.b_star;
    CHECK((a.y - (xb + a.eps)).norm() == 0.0);
    CHECK(std::abs(a.b_star.squaredNorm() - cfg.signal_strength) <=
          1e-10 * cfg.signal_strength);
}

TEST_CASE("sparse signal layout") {
    ProblemConfig cfg = small_problem();
    cfg.n = 2;
    cfg.p = 5000;
    cfg.sparsity_fraction = 1.0 / 20.0;
    cfg.signal_strength = 10.0;
    const DataSet ds = generate_dataset(cfg);
    CHECK((ds.b_star.array() != 0.0).count() == 250);
    CHECK(ds.b_star.head(250).isApproxToConstant(0.2, 1e-14));
    CHECK(ds.b_star.tail(4750).isZero(0.0));
}

TEST_CASE("zero signal") {
    ProblemConfig cfg = small_problem();
    cfg.signal_strength = 0.0;
    const DataSet ds = generate_dataset(cfg);
    CHECK(ds.b_star.isZero(0.0));
    CHECK(ds.y == ds.eps);
}

TEST_CASE("dataset configuration errors") {
    ProblemConfig cfg = small_problem();
    cfg.p = 4;
    cfg.sparsity_fraction = 0.1;  // rounds to zero nonzeros
    CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);

    ProblemConfig bad = small_problem();
    Eigen::MatrixXd notspd = -Eigen::MatrixXd::Identity(bad.p, bad.p);
    bad.covariance = Covariance::spd(notspd);
    CHECK_THROWS_AS(generate_dataset(bad), ConfigError);
}

TEST_CASE("student-t noise is heavy tailed but finite") {
    ProblemConfig cfg = small_problem();
    cfg.n = 2000;
    cfg.noise.kind = NoiseKind::StudentT;
    cfg.noise.param = 2.0;
    const DataSet ds = generate_dataset(cfg);
    CHECK(ds.eps.allFinite());
    CHECK(ds.eps.cwiseAbs().maxCoeff() > 3.0);  // tails show up at this n
}
