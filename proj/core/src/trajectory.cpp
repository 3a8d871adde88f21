#include "trajrisk/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trajrisk/errors.hpp"
#include "trajrisk/rng.hpp"

namespace trajrisk {

double auto_step_size(Eigen::Index n, Eigen::Index p, double batch_fraction) {
    const double n_star = batch_fraction < 1.0
                              ? batch_fraction * static_cast<double>(n)
                              : static_cast<double>(n);
    const double s = 1.0 + std::sqrt(static_cast<double>(p) / n_star);
    return 1.0 / (s * s);
}

Schedule Schedule::fixed(Eigen::Index T, double eta, double batch_fraction) {
    if (T < 1)
        throw ConfigError("schedule needs at least one step");
    if (eta < 0.0)
        throw ConfigError("step size must be nonnegative");
    Schedule s;
    s.T = T;
    s.etas = Eigen::VectorXd::Constant(T, eta);
    s.batch_fraction = batch_fraction;
    return s;
}

Schedule Schedule::from_etas(Eigen::VectorXd etas, double batch_fraction) {
    if (etas.size() < 1)
        throw ConfigError("schedule needs at least one step");
    if ((etas.array() < 0.0).any())
        throw ConfigError("step sizes must be nonnegative");
    Schedule s;
    s.T = etas.size();
    s.etas = std::move(etas);
    s.batch_fraction = batch_fraction;
    return s;
}

Schedule Schedule::auto_step(Eigen::Index T, Eigen::Index n, Eigen::Index p,
                             double batch_fraction) {
    return fixed(T, auto_step_size(n, p, batch_fraction), batch_fraction);
}

BatchPlan sample_batches(Eigen::Index n, const Schedule& schedule, std::uint64_t seed) {
    if (schedule.batch_fraction <= 0.0 || schedule.batch_fraction > 1.0)
        throw ConfigError("batch_fraction must lie in (0, 1]");
    const auto m = static_cast<Eigen::Index>(
        std::llround(schedule.batch_fraction * static_cast<double>(n)));
    if (m < 1)
        throw ConfigError("batch size rounds to zero");

    BatchPlan plan;
    plan.batch_size = std::min(m, n);
    plan.full_batch = plan.batch_size == n;
    plan.batches.resize(static_cast<std::size_t>(schedule.T));

    if (plan.full_batch) {
        std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        for (auto& b : plan.batches)
            b = all;
        return plan;
    }

    auto eng = make_engine(seed);
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    for (auto& batch : plan.batches) {
        std::iota(pool.begin(), pool.end(), Eigen::Index{0});
        // partial Fisher-Yates: first m slots become the sample
        for (Eigen::Index k = 0; k < plan.batch_size; ++k) {
            std::uniform_int_distribution<Eigen::Index> pick(k, n - 1);
            std::swap(pool[static_cast<std::size_t>(k)],
                      pool[static_cast<std::size_t>(pick(eng))]);
        }
        batch.assign(pool.begin(), pool.begin() + plan.batch_size);
        std::sort(batch.begin(), batch.end());
    }
    return plan;
}

Trajectory run_trajectory(const DataSet& data, const LossSpec& loss,
                          const PenaltySpec& pen, const Schedule& schedule,
                          const BatchPlan& plan) {
    const Eigen::Index n = data.X.rows();
    const Eigen::Index p = data.X.cols();
    const Eigen::Index T = schedule.T;
    if (static_cast<Eigen::Index>(plan.batches.size()) != T)
        throw ConfigError("batch plan length does not match schedule");
    if (loss.delta <= 0.0 && loss.kind != LossKind::Square)
        throw ConfigError("loss scale delta must be positive");

    Trajectory traj;
    traj.plan = plan;
    traj.schedule = schedule;
    traj.B = Eigen::MatrixXd::Zero(p, T);
    traj.R.resize(n, T);
    traj.F = Eigen::MatrixXd::Zero(n, T);
    traj.Ftil.resize(n, T);
    traj.Ddiag.resize(n, T);
    traj.Dtil_diag = Eigen::MatrixXd::Ones(p, T);

    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::VectorXd r = data.y - data.X * b;
        if (!r.allFinite())
            throw NumericalError("non-finite residual", t);
        traj.B.col(t) = b;
        traj.R.col(t) = r;
        for (Eigen::Index i = 0; i < n; ++i) {
            traj.Ftil(i, t) = psi(r(i), loss);
            traj.Ddiag(i, t) = psi_prime(r(i), loss);
        }
        for (Eigen::Index i : plan.batches[static_cast<std::size_t>(t)])
            traj.F(i, t) = traj.Ftil(i, t);

        if (t + 1 == T)
            break;
        const double scale = schedule.etas(t) / traj.batch_count(t);
        Eigen::VectorXd step = b + scale * (data.X.transpose() * traj.F.col(t));
        b = prox(step, schedule.etas(t), pen);
        if (!b.allFinite())
            throw NumericalError("non-finite iterate", t + 1);
        traj.Dtil_diag.col(t) = prox_jacobian_diag(b, pen);
    }
    return traj;
}

Eigen::VectorXd apply_P(Eigen::Index t, const Eigen::VectorXd& v,
                        const Trajectory& traj, const DataSet& data) {
    Eigen::VectorXd u = data.X * v;
    u.array() *= traj.Ddiag.col(t).array();
    Eigen::VectorXd masked = Eigen::VectorXd::Zero(u.size());
    for (Eigen::Index i : traj.plan.batches[static_cast<std::size_t>(t)])
        masked(i) = u(i);
    const double scale = traj.schedule.etas(t) / traj.batch_count(t);
    Eigen::VectorXd out = v - scale * (data.X.transpose() * masked);
    out.array() *= traj.Dtil_diag.col(t).array();
    return out;
}

}  // namespace trajrisk
