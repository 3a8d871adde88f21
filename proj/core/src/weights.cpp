#include "trajrisk/weights.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "trajrisk/errors.hpp"
#include "trajrisk/rng.hpp"

namespace trajrisk {

namespace {

// S_t D_t diagonal as an n x T matrix (psi' zeroed outside each batch).
Eigen::MatrixXd masked_ddiag(const Trajectory& traj) {
    if (traj.plan.full_batch)
        return traj.Ddiag;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(traj.n(), traj.T());
    for (Eigen::Index t = 0; t < traj.T(); ++t)
        for (Eigen::Index i : traj.plan.batches[static_cast<std::size_t>(t)])
            m(i, t) = traj.Ddiag(i, t);
    return m;
}

}  // namespace

GammaOperator::GammaOperator(const Trajectory& traj, const DataSet& data)
    : traj_(traj), data_(data) {
    const Eigen::Index T = traj.T();
    masks_.resize(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        auto& mask = masks_[static_cast<std::size_t>(t)];
        mask.assign(static_cast<std::size_t>(traj.n()), 0);
        for (Eigen::Index i : traj.plan.batches[static_cast<std::size_t>(t)])
            mask[static_cast<std::size_t>(i)] = 1;
    }
    if (!traj.plan.full_batch) {
        // gather batch rows once; every later push is then a pair of GEMMs
        xb_.resize(static_cast<std::size_t>(T));
        for (Eigen::Index t = 0; t + 1 < T; ++t) {
            const auto& idx = traj.plan.batches[static_cast<std::size_t>(t)];
            auto& rows = xb_[static_cast<std::size_t>(t)];
            rows.resize(static_cast<Eigen::Index>(idx.size()), traj.p());
            for (std::size_t k = 0; k < idx.size(); ++k)
                rows.row(static_cast<Eigen::Index>(k)) = data.X.row(idx[k]);
        }
    }
}

const Eigen::MatrixXd& GammaOperator::batch_rows(Eigen::Index t) const {
    return traj_.plan.full_batch ? data_.X : xb_[static_cast<std::size_t>(t)];
}

const std::vector<char>& GammaOperator::batch_mask(Eigen::Index t) const {
    return masks_[static_cast<std::size_t>(t)];
}

Eigen::VectorXd GammaOperator::seed(Eigen::Index s, const Eigen::VectorXd& v) const {
    const double scale = traj_.schedule.etas(s) / traj_.batch_count(s);
    return scale * traj_.Dtil_diag.col(s).cwiseProduct(v);
}

void GammaOperator::push(Eigen::Index t, Eigen::Ref<Eigen::MatrixXd> G) const {
    const double scale = traj_.schedule.etas(t) / traj_.batch_count(t);
    if (traj_.plan.full_batch) {
        Eigen::MatrixXd U = data_.X * G;
        U.array().colwise() *= traj_.Ddiag.col(t).array();
        G.noalias() -= scale * (data_.X.transpose() * U);
    } else {
        const auto& rows = xb_[static_cast<std::size_t>(t)];
        const auto& idx = traj_.plan.batches[static_cast<std::size_t>(t)];
        Eigen::MatrixXd U = rows * G;
        for (std::size_t k = 0; k < idx.size(); ++k)
            U.row(static_cast<Eigen::Index>(k)) *= traj_.Ddiag(idx[k], t);
        G.noalias() -= scale * (rows.transpose() * U);
    }
    G.array().colwise() *= traj_.Dtil_diag.col(t).array();
}

std::vector<Eigen::VectorXd> GammaOperator::gamma_apply(Eigen::Index s,
                                                        const Eigen::VectorXd& v) const {
    std::vector<Eigen::VectorXd> out;
    const Eigen::Index T = traj_.T();
    out.reserve(static_cast<std::size_t>(T - 1 - s));
    Eigen::MatrixXd g = seed(s, v);
    for (Eigen::Index t = s + 1; t < T; ++t) {
        out.emplace_back(g.col(0));
        if (t + 1 < T)
            push(t, g);
    }
    return out;
}

WeightSet dense_weights(const Trajectory& traj, const DataSet& data,
                        bool compute_sub, Eigen::Index cap) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = traj.p();
    if (p * T > cap)
        throw CapacityError("p*T exceeds the dense assembly cap; use hutchinson_weights");

    GammaOperator gamma(traj, data);
    const Eigen::MatrixXd dm = masked_ddiag(traj);
    Eigen::MatrixXd sigma;
    if (!data.identity_sigma)
        sigma = data.sigma_half * data.sigma_half.transpose();

    WeightSet ws;
    ws.method = WeightMethod::Dense;
    ws.W = Eigen::MatrixXd::Zero(T, T);
    ws.Ahat = Eigen::MatrixXd::Zero(T, T);
    ws.Khat = Eigen::MatrixXd::Zero(T, T);
    if (compute_sub) {
        ws.Atil = Eigen::MatrixXd::Zero(T, T);
        ws.Ktil = Eigen::MatrixXd::Zero(T, T);
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        ws.Khat(t, t) = traj.Ddiag.col(t).sum();
        if (compute_sub)
            (*ws.Ktil)(t, t) = dm.col(t).sum();
    }

    for (Eigen::Index s = 0; s + 1 < T; ++s) {
        const double scale = traj.schedule.etas(s) / traj.batch_count(s);
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
        G.diagonal() = scale * traj.Dtil_diag.col(s);
        for (Eigen::Index t = s + 1; t < T; ++t) {
            // G is Gamma_{t,s}; all entries contract through
            // q_i = x_i^T G x_i since S_s D_s is diagonal
            ws.W(t, s) = data.identity_sigma ? G.trace()
                                             : sigma.cwiseProduct(G.transpose()).sum();
            const Eigen::VectorXd q = ((data.X * G).cwiseProduct(data.X)).rowwise().sum();
            ws.Ahat(t, s) = traj.Ddiag.col(t).dot(q);
            ws.Khat(t, s) = -traj.Ddiag.col(t).cwiseProduct(dm.col(s)).dot(q);
            if (compute_sub) {
                (*ws.Atil)(t, s) = dm.col(s).dot(q);
                (*ws.Ktil)(t, s) = -dm.col(t).cwiseProduct(dm.col(s)).dot(q);
            }
            if (t + 1 < T)
                gamma.push(t, G);
        }
    }
    return ws;
}

WeightSet hutchinson_weights(const Trajectory& traj, const DataSet& data,
                             const HutchinsonOptions& opt) {
    if (opt.probes < 1)
        throw ConfigError("probe count must be at least 1");
    const Eigen::Index T = traj.T();
    const Eigen::Index n = traj.n();
    const Eigen::Index p = traj.p();
    const bool want_w = opt.compute_w;
    const bool want_ak = opt.compute_ahat_khat;
    const bool want_sub = opt.compute_sub;

    GammaOperator gamma(traj, data);
    const Eigen::MatrixXd dm = masked_ddiag(traj);
    Eigen::MatrixXd sigma;
    if (want_w && !data.identity_sigma)
        sigma = data.sigma_half * data.sigma_half.transpose();

    // running sums and sums of squares per entry, fixed reduction order
    auto zero = [T] { return Eigen::MatrixXd::Zero(T, T); };
    Eigen::MatrixXd sW = zero(), qW = zero(), sA = zero(), qA = zero();
    Eigen::MatrixXd sK = zero(), qK = zero(), sAt = zero(), qAt = zero();
    Eigen::MatrixXd sKt = zero(), qKt = zero();

    const int kb = std::max(1, opt.block);
    std::bernoulli_distribution coin(0.5);

    for (int base = 0; base < opt.probes; base += kb) {
        const int nb = std::min(kb, opt.probes - base);
        // each probe owns a derived substream, so results do not depend on
        // the block size
        Eigen::MatrixXd U(n, nb), Z;
        if (want_w)
            Z.resize(p, nb);
        for (int k = 0; k < nb; ++k) {
            auto eng = make_engine(
                derive_seed(opt.seed, seed_tag::probes, static_cast<std::uint64_t>(base + k)));
            for (Eigen::Index i = 0; i < n; ++i)
                U(i, k) = coin(eng) ? 1.0 : -1.0;
            if (want_w)
                for (Eigen::Index j = 0; j < p; ++j)
                    Z(j, k) = coin(eng) ? 1.0 : -1.0;
        }

        Eigen::MatrixXd SZ;  // Sigma z, contraction side of the W probes
        if (want_w)
            SZ = data.identity_sigma ? Z : Eigen::MatrixXd(sigma * Z);
        Eigen::MatrixXd BU;  // X^T u
        if (want_ak || want_sub)
            BU = data.X.transpose() * U;
        // AT[t] = X^T (D_t u); C[t] = X^T (S_t D_t u), doubling as the
        // K-family seeds at s = t
        std::vector<Eigen::MatrixXd> AT, C;
        if (want_ak) {
            AT.resize(static_cast<std::size_t>(T));
            for (Eigen::Index t = 0; t < T; ++t)
                AT[static_cast<std::size_t>(t)] =
                    data.X.transpose() * (U.array().colwise() * traj.Ddiag.col(t).array()).matrix();
        }
        if (want_ak || want_sub) {
            C.resize(static_cast<std::size_t>(T));
            for (Eigen::Index t = 0; t < T; ++t) {
                if (traj.plan.full_batch && want_ak) {
                    C[static_cast<std::size_t>(t)] = AT[static_cast<std::size_t>(t)];
                } else {
                    C[static_cast<std::size_t>(t)] =
                        data.X.transpose() * (U.array().colwise() * dm.col(t).array()).matrix();
                }
            }
        }

        // families stacked side by side so every push is one GEMM pair
        const int fam_w = want_w ? 1 : 0;
        const int fam_b = want_ak ? 1 : 0;
        const int fam_k = (want_ak || want_sub) ? 1 : 0;
        const int width = (fam_w + fam_b + fam_k) * nb;
        if (width == 0)
            throw ConfigError("no weight family requested");
        const int off_w = 0;
        const int off_b = fam_w * nb;
        const int off_k = (fam_w + fam_b) * nb;

        Eigen::MatrixXd G(p, width);
        for (Eigen::Index s = 0; s + 1 < T; ++s) {
            const double scale = traj.schedule.etas(s) / traj.batch_count(s);
            const Eigen::ArrayXd seed_diag = scale * traj.Dtil_diag.col(s).array();
            if (want_w)
                G.middleCols(off_w, nb) = (Z.array().colwise() * seed_diag).matrix();
            if (fam_b)
                G.middleCols(off_b, nb) = (BU.array().colwise() * seed_diag).matrix();
            if (fam_k)
                G.middleCols(off_k, nb) =
                    (C[static_cast<std::size_t>(s)].array().colwise() * seed_diag).matrix();

            for (Eigen::Index t = s + 1; t < T; ++t) {
                for (int k = 0; k < nb; ++k) {
                    if (want_w) {
                        const double est = SZ.col(k).dot(G.col(off_w + k));
                        sW(t, s) += est;
                        qW(t, s) += est * est;
                    }
                    if (want_ak) {
                        const auto& at = AT[static_cast<std::size_t>(t)].col(k);
                        const double ea = at.dot(G.col(off_b + k));
                        sA(t, s) += ea;
                        qA(t, s) += ea * ea;
                        const double ek = -at.dot(G.col(off_k + k));
                        sK(t, s) += ek;
                        qK(t, s) += ek * ek;
                    }
                    if (want_sub) {
                        const double eat = BU.col(k).dot(G.col(off_k + k));
                        sAt(t, s) += eat;
                        qAt(t, s) += eat * eat;
                        const double ekt =
                            -C[static_cast<std::size_t>(t)].col(k).dot(G.col(off_k + k));
                        sKt(t, s) += ekt;
                        qKt(t, s) += ekt * ekt;
                    }
                }
                if (t + 1 < T)
                    gamma.push(t, G);
            }
        }
    }

    const double m = static_cast<double>(opt.probes);
    auto finish = [&](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sumsq,
                      Eigen::MatrixXd& mean, Eigen::MatrixXd& se) {
        mean = sum / m;
        if (opt.probes > 1) {
            Eigen::MatrixXd var =
                (sumsq - m * mean.cwiseProduct(mean)) / (m - 1.0);
            se = (var.cwiseMax(0.0) / m).cwiseSqrt();
        } else {
            se = Eigen::MatrixXd::Zero(T, T);
        }
    };

    WeightSet ws;
    ws.method = WeightMethod::Hutchinson;
    ws.probes = opt.probes;
    ws.probe_seed = opt.seed;
    ws.has_w = want_w;
    ws.has_ahat = want_ak;
    ws.W = zero();
    ws.Ahat = zero();
    ws.Khat = zero();
    if (want_w)
        finish(sW, qW, ws.W, ws.se_W);
    if (want_ak) {
        finish(sA, qA, ws.Ahat, ws.se_Ahat);
        finish(sK, qK, ws.Khat, ws.se_Khat);
    }
    if (want_ak || want_sub)
        for (Eigen::Index t = 0; t < T; ++t)
            ws.Khat(t, t) = traj.Ddiag.col(t).sum();  // exact, no probes
    if (want_sub) {
        ws.Atil = zero();
        ws.Ktil = zero();
        finish(sAt, qAt, *ws.Atil, ws.se_Atil);
        finish(sKt, qKt, *ws.Ktil, ws.se_Ktil);
        for (Eigen::Index t = 0; t < T; ++t)
            (*ws.Ktil)(t, t) = dm.col(t).sum();
    }
    return ws;
}

namespace {

// forward substitution for lower-triangular K against a strictly lower
// right-hand side; strict triangularity of the result is automatic
Eigen::MatrixXd forward_solve(const Eigen::MatrixXd& K, const Eigen::MatrixXd& A,
                              double tol, const char* what) {
    const Eigen::Index T = K.rows();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (std::abs(K(t, t)) < tol)
            throw SingularityError(std::string(what) + " diagonal below tolerance", t);
        Eigen::RowVectorXd row = A.row(t);
        for (Eigen::Index u = 0; u < t; ++u)
            row -= K(t, u) * W.row(u);
        W.row(t) = row / K(t, t);
    }
    return W;
}

}  // namespace

void solve_wtilde(WeightSet& ws, Eigen::Index n, double tol_scale) {
    ws.Wtilde = forward_solve(ws.Khat, ws.Ahat, tol_scale * static_cast<double>(n), "Khat");
}

SubSolveResult solve_wtilde_sub(const WeightSet& ws, const Trajectory& traj,
                                double tol_scale, double warn_ratio) {
    if (!ws.Ktil || !ws.Atil)
        throw ConfigError("sub-solve requires Ktil and Atil");
    const Eigen::Index T = traj.T();
    const double n = static_cast<double>(traj.n());
    const double tol = tol_scale * n;

    SubSolveResult res;
    for (Eigen::Index t = 0; t < T; ++t) {
        const double kd = (*ws.Ktil)(t, t);
        if (std::abs(kd) < tol) {
            res.singular.push_back(t);
            continue;
        }
        // in-batch mean psi' much smaller than the full-sample mean marks
        // a diagonal likely to destabilize the solve
        const double full_mean = ws.Khat(t, t) / n;
        const double batch_mean = kd / traj.batch_count(t);
        if (full_mean > 0.0 && batch_mean < warn_ratio * full_mean)
            res.flagged.push_back(t);
    }
    if (!res.singular.empty())
        return res;
    res.Wsub = forward_solve(*ws.Ktil, *ws.Atil, tol, "Ktil");
    return res;
}

}  // namespace trajrisk
