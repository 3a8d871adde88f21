#include "trajrisk/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "trajrisk/errors.hpp"
#include "trajrisk/rng.hpp"

namespace trajrisk {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad real for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad seed for " + key + ": '" + v + "'");
    }
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& val) {
    if (key == "problem.n") {
        cfg.problem.n = parse_int(key, val);
    } else if (key == "problem.p") {
        cfg.problem.p = parse_int(key, val);
    } else if (key == "problem.covariance") {
        if (val != "identity")
            throw ConfigError("only identity covariance is configurable; "
                              "other kinds are library-level");
        cfg.problem.covariance = Covariance::identity();
    } else if (key == "problem.noise") {
        if (val == "student_t")
            cfg.problem.noise.kind = NoiseKind::StudentT;
        else if (val == "gaussian")
            cfg.problem.noise.kind = NoiseKind::Gaussian;
        else
            throw ConfigError("unknown noise kind '" + val + "'");
    } else if (key == "problem.noise_param") {
        cfg.problem.noise.param = parse_real(key, val);
    } else if (key == "problem.signal_strength") {
        cfg.problem.signal_strength = parse_real(key, val);
    } else if (key == "problem.sparsity_fraction") {
        cfg.problem.sparsity_fraction = parse_real(key, val);
    } else if (key == "loss.kind") {
        if (val == "huber")
            cfg.loss.kind = LossKind::Huber;
        else if (val == "pseudo_huber")
            cfg.loss.kind = LossKind::PseudoHuber;
        else if (val == "square")
            cfg.loss.kind = LossKind::Square;
        else
            throw ConfigError("unknown loss kind '" + val + "'");
    } else if (key == "loss.delta") {
        cfg.loss.delta = parse_real(key, val);
    } else if (key == "penalty.kind") {
        if (val == "none")
            cfg.penalty.kind = PenaltyKind::None;
        else if (val == "l1")
            cfg.penalty.kind = PenaltyKind::L1;
        else
            throw ConfigError("unknown penalty kind '" + val + "'");
    } else if (key == "penalty.lambda") {
        cfg.penalty.lambda = parse_real(key, val);
    } else if (key == "schedule.T") {
        cfg.T = parse_int(key, val);
    } else if (key == "schedule.eta") {
        if (val == "auto") {
            cfg.eta = -1.0;
        } else {
            cfg.eta = parse_real(key, val);
            if (cfg.eta < 0.0)
                throw ConfigError("schedule.eta must be nonnegative or 'auto'");
        }
    } else if (key == "schedule.etas") {
        std::vector<double> vals;
        std::stringstream ss(val);
        std::string item;
        while (std::getline(ss, item, ','))
            vals.push_back(parse_real(key, trim(item)));
        cfg.etas = Eigen::Map<Eigen::VectorXd>(vals.data(),
                                               static_cast<Eigen::Index>(vals.size()));
    } else if (key == "schedule.batch_fraction") {
        cfg.batch_fraction = parse_real(key, val);
    } else if (key == "algorithm") {
        if (val == "gd")
            cfg.algorithm = Algorithm::GD;
        else if (val == "sgd")
            cfg.algorithm = Algorithm::SGD;
        else if (val == "pgd")
            cfg.algorithm = Algorithm::PGD;
        else if (val == "psgd")
            cfg.algorithm = Algorithm::PSGD;
        else
            throw ConfigError("unknown algorithm '" + val + "'");
    } else if (key == "replicates") {
        cfg.replicates = static_cast<int>(parse_int(key, val));
    } else if (key == "probes") {
        cfg.probes = static_cast<int>(parse_int(key, val));
    } else if (key == "weight_mode") {
        if (val == "dense")
            cfg.weight_mode = WeightMode::Dense;
        else if (val == "hutchinson")
            cfg.weight_mode = WeightMode::Hutchinson;
        else if (val == "auto")
            cfg.weight_mode = WeightMode::Auto;
        else
            throw ConfigError("unknown weight_mode '" + val + "'");
    } else if (key == "compute_hat") {
        cfg.compute_hat = parse_bool(key, val);
    } else if (key == "compute_tilde") {
        cfg.compute_tilde = parse_bool(key, val);
    } else if (key == "compute_sub") {
        cfg.compute_sub = parse_bool(key, val);
    } else if (key == "freeze_batches") {
        cfg.freeze_batches = parse_bool(key, val);
    } else if (key == "master_seed") {
        cfg.master_seed = parse_u64(key, val);
    } else if (key == "output_dir") {
        cfg.output_dir = val;
    } else if (key == "argmin_window") {
        cfg.argmin_window = static_cast<int>(parse_int(key, val));
    } else if (key == "workers") {
        cfg.workers = static_cast<int>(parse_int(key, val));
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

// shortest round-trip decimal form
std::string fmt(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

bool dense_selected(const ExperimentConfig& cfg) {
    switch (cfg.weight_mode) {
        case WeightMode::Dense:
            return true;
        case WeightMode::Hutchinson:
            return false;
        case WeightMode::Auto:
            return cfg.problem.p * cfg.T <= kDenseCap;
    }
    return false;
}

}  // namespace

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value");
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value, got '" + kv + "'");
    set_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.problem.n < 1 || cfg.problem.p < 1)
        throw ConfigError("problem.n and problem.p must be at least 1");
    if (cfg.T < 1)
        throw ConfigError("schedule.T must be at least 1");
    if (cfg.replicates < 1)
        throw ConfigError("replicates must be at least 1");
    if (cfg.probes < 1)
        throw ConfigError("probes must be at least 1");
    if (cfg.batch_fraction <= 0.0 || cfg.batch_fraction > 1.0)
        throw ConfigError("schedule.batch_fraction must lie in (0, 1]");
    const bool prox = cfg.algorithm == Algorithm::PGD || cfg.algorithm == Algorithm::PSGD;
    if (!prox && cfg.penalty.kind == PenaltyKind::L1)
        throw ConfigError("l1 penalty requires the pgd or psgd algorithm");
    const bool stochastic = cfg.algorithm == Algorithm::SGD || cfg.algorithm == Algorithm::PSGD;
    if (!stochastic && cfg.batch_fraction != 1.0)
        throw ConfigError("gd and pgd require batch_fraction = 1");
    if (cfg.etas.size() > 0 && cfg.etas.size() != cfg.T)
        throw ConfigError("schedule.etas length must equal schedule.T");
}

Schedule make_schedule(const ExperimentConfig& cfg) {
    if (cfg.etas.size() > 0)
        return Schedule::from_etas(cfg.etas, cfg.batch_fraction);
    if (cfg.eta < 0.0)
        return Schedule::auto_step(cfg.T, cfg.problem.n, cfg.problem.p, cfg.batch_fraction);
    return Schedule::fixed(cfg.T, cfg.eta, cfg.batch_fraction);
}

namespace {

ReplicateResult run_one(const ExperimentConfig& cfg, const Schedule& schedule, int rep) {
    ReplicateResult out;
    out.rep = rep;
    try {
        const std::uint64_t rep_seed =
            derive_seed(cfg.master_seed, seed_tag::replicate, static_cast<std::uint64_t>(rep));
        ProblemConfig prob = cfg.problem;
        prob.seed = derive_seed(rep_seed, seed_tag::data);
        const DataSet data = generate_dataset(prob);
        const std::uint64_t batch_seed =
            cfg.freeze_batches ? derive_seed(cfg.master_seed, seed_tag::batches)
                               : derive_seed(rep_seed, seed_tag::batches);
        const BatchPlan plan = sample_batches(prob.n, schedule, batch_seed);
        const Trajectory traj = run_trajectory(data, cfg.loss, cfg.penalty, schedule, plan);

        RiskSeries& series = out.series;
        series.r_true = oracle_risk(traj, data);
        series.noise_term = data.eps.squaredNorm() / static_cast<double>(prob.n);
        series.risk_only = series.r_true.array() - series.noise_term;

        const bool need_weights = cfg.compute_hat || cfg.compute_tilde || cfg.compute_sub;
        if (need_weights) {
            WeightSet ws;
            if (dense_selected(cfg)) {
                ws = dense_weights(traj, data, cfg.compute_sub);
            } else {
                HutchinsonOptions opt;
                opt.probes = cfg.probes;
                opt.seed = derive_seed(rep_seed, seed_tag::probes);
                opt.compute_w = cfg.compute_hat;
                opt.compute_ahat_khat = cfg.compute_tilde;
                opt.compute_sub = cfg.compute_sub;
                ws = hutchinson_weights(traj, data, opt);
            }
            if (cfg.compute_hat)
                series.r_hat = estimate_rhat(traj, ws.W);
            if (cfg.compute_tilde) {
                solve_wtilde(ws, prob.n);
                series.r_tilde = estimate_rtilde(traj, ws);
            }
            if (cfg.compute_sub) {
                const SubSolveResult sub = solve_wtilde_sub(ws, traj);
                series.r_sub = estimate_rsub(traj, sub);
            }
        }
    } catch (const std::exception& e) {
        out.failed = true;
        out.failure = e.what();
    }
    return out;
}

}  // namespace

std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    const Schedule schedule = make_schedule(cfg);

    int workers = cfg.workers;
    if (workers <= 0) {
        if (const char* env = std::getenv("TRAJRISK_WORKERS"))
            workers = std::max(1, static_cast<int>(std::strtol(env, nullptr, 10)));
        else
            workers = 1;
    }
    workers = std::min(workers, cfg.replicates);

    std::vector<ReplicateResult> results(static_cast<std::size_t>(cfg.replicates));
    if (workers <= 1) {
        for (int r = 0; r < cfg.replicates; ++r)
            results[static_cast<std::size_t>(r)] = run_one(cfg, schedule, r);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int r = next.fetch_add(1); r < cfg.replicates; r = next.fetch_add(1))
                    results[static_cast<std::size_t>(r)] = run_one(cfg, schedule, r);
            });
        for (auto& th : pool)
            th.join();
    }

    const int failures = static_cast<int>(
        std::count_if(results.begin(), results.end(),
                      [](const ReplicateResult& r) { return r.failed; }));
    if (5 * failures > cfg.replicates)
        throw NumericalError("more than 20% of replicates failed (" +
                                 std::to_string(failures) + "/" +
                                 std::to_string(cfg.replicates) + ")",
                             -1);
    return results;
}

namespace {

CurveStats curve_stats(const std::vector<Eigen::VectorXd>& values, Eigen::Index T) {
    CurveStats cs;
    cs.mean = Eigen::VectorXd::Zero(T);
    cs.median = Eigen::VectorXd::Zero(T);
    cs.se = Eigen::VectorXd::Zero(T);
    const auto m = static_cast<double>(values.size());
    if (values.empty())
        return cs;
    std::vector<double> col(values.size());
    for (Eigen::Index t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t r = 0; r < values.size(); ++r) {
            col[r] = values[r](t);
            sum += col[r];
        }
        cs.mean(t) = sum / m;
        std::sort(col.begin(), col.end());
        cs.median(t) = values.size() % 2 == 1
                           ? col[values.size() / 2]
                           : 0.5 * (col[values.size() / 2 - 1] + col[values.size() / 2]);
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : col)
                ss += (v - cs.mean(t)) * (v - cs.mean(t));
            cs.se(t) = std::sqrt(ss / (m - 1.0) / m);
        }
    }
    return cs;
}

}  // namespace

Eigen::Index smoothed_argmin(const Eigen::VectorXd& curve, int window) {
    const Eigen::Index T = curve.size();
    const Eigen::Index radius = std::max(0, window / 2);
    Eigen::Index best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index a = std::max<Eigen::Index>(0, t - radius);
        const Eigen::Index b = std::min<Eigen::Index>(T - 1, t + radius);
        const double v = curve.segment(a, b - a + 1).mean();
        if (v < best_val) {
            best_val = v;
            best = t;
        }
    }
    return best;
}

AggregateResult aggregate(const std::vector<ReplicateResult>& reps,
                          const ExperimentConfig& cfg) {
    std::vector<const ReplicateResult*> ok;
    for (const auto& r : reps)
        if (!r.failed)
            ok.push_back(&r);
    if (ok.empty())
        throw NumericalError("no surviving replicates to aggregate", -1);
    const Eigen::Index T = ok.front()->series.r_true.size();

    AggregateResult agg;
    agg.survivors = static_cast<int>(ok.size());
    agg.failures = static_cast<int>(reps.size() - ok.size());

    std::vector<Eigen::VectorXd> vt, vh, vti, vs;
    int agree_hat = 0, agree_tilde = 0;
    double noise_sum = 0.0;
    for (const auto* r : ok) {
        const RiskSeries& s = r->series;
        noise_sum += s.noise_term;
        vt.push_back(s.risk_only);
        const Eigen::Index oracle_arg = smoothed_argmin(s.risk_only, cfg.argmin_window);
        if (s.r_hat.size() == T) {
            vh.push_back(s.r_hat.array() - s.noise_term);
            if (std::abs(smoothed_argmin(s.r_hat, cfg.argmin_window) - oracle_arg) <=
                cfg.argmin_window)
                ++agree_hat;
        }
        if (s.r_tilde && s.r_tilde->size() == T) {
            vti.push_back(s.r_tilde->array() - s.noise_term);
            if (std::abs(smoothed_argmin(*s.r_tilde, cfg.argmin_window) - oracle_arg) <=
                cfg.argmin_window)
                ++agree_tilde;
        }
        if (s.r_sub && s.r_sub->size() == T)
            vs.push_back(s.r_sub->array() - s.noise_term);
    }
    agg.mean_noise = noise_sum / static_cast<double>(ok.size());
    agg.true_curve = curve_stats(vt, T);
    agg.hat = curve_stats(vh, T);
    agg.tilde = curve_stats(vti, T);
    agg.sub = curve_stats(vs, T);
    agg.has_tilde = !vti.empty();
    agg.has_sub = !vs.empty();
    if (!vh.empty())
        agg.argmin_agree_hat = static_cast<double>(agree_hat) / static_cast<double>(vh.size());
    if (!vti.empty())
        agg.argmin_agree_tilde =
            static_cast<double>(agree_tilde) / static_cast<double>(vti.size());
    return agg;
}

void emit_csv(const std::vector<ReplicateResult>& reps, const AggregateResult& agg,
              const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + cfg.output_dir.string());

    const fs::path raw_path = cfg.output_dir / "raw.csv";
    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw)
        throw IoError("cannot write " + raw_path.string());
    raw << "rep,t,r_true,r_hat,r_tilde,r_sub,noise_term\n";
    for (const auto& r : reps) {
        if (r.failed)
            continue;
        const RiskSeries& s = r.series;
        const Eigen::Index T = s.r_true.size();
        for (Eigen::Index t = 0; t < T; ++t) {
            raw << r.rep << ',' << (t + 1) << ',' << fmt(s.r_true(t)) << ',';
            if (s.r_hat.size() == T)
                raw << fmt(s.r_hat(t));
            raw << ',';
            if (s.r_tilde && s.r_tilde->size() == T)
                raw << fmt((*s.r_tilde)(t));
            raw << ',';
            if (s.r_sub && s.r_sub->size() == T)
                raw << fmt((*s.r_sub)(t));
            raw << ',' << fmt(s.noise_term) << '\n';
        }
    }
    raw.close();
    if (!raw)
        throw IoError("write failure on " + raw_path.string());

    const fs::path sum_path = cfg.output_dir / "summary.csv";
    std::ofstream sum(sum_path, std::ios::binary);
    if (!sum)
        throw IoError("cannot write " + sum_path.string());
    sum << "t,curve,stat,value\n";
    const Eigen::Index T = agg.true_curve.mean.size();
    auto emit_curve = [&](const char* name, const CurveStats& cs) {
        for (Eigen::Index t = 0; t < T; ++t) {
            sum << (t + 1) << ',' << name << ",mean," << fmt(cs.mean(t)) << '\n';
            sum << (t + 1) << ',' << name << ",median," << fmt(cs.median(t)) << '\n';
            sum << (t + 1) << ',' << name << ",se," << fmt(cs.se(t)) << '\n';
        }
    };
    emit_curve("true", agg.true_curve);
    if (agg.hat.mean.size() == T && cfg.compute_hat)
        emit_curve("hat", agg.hat);
    if (agg.has_tilde)
        emit_curve("tilde", agg.tilde);
    if (agg.has_sub)
        emit_curve("sub", agg.sub);
    sum.close();
    if (!sum)
        throw IoError("write failure on " + sum_path.string());

    const fs::path meta_path = cfg.output_dir / "meta.txt";
    std::ofstream meta(meta_path, std::ios::binary);
    if (!meta)
        throw IoError("cannot write " + meta_path.string());
    const Schedule schedule = make_schedule(cfg);
    const char* alg = cfg.algorithm == Algorithm::GD    ? "gd"
                      : cfg.algorithm == Algorithm::SGD ? "sgd"
                      : cfg.algorithm == Algorithm::PGD ? "pgd"
                                                        : "psgd";
    meta << "algorithm=" << alg << '\n'
         << "problem.n=" << cfg.problem.n << '\n'
         << "problem.p=" << cfg.problem.p << '\n'
         << "loss.kind="
         << (cfg.loss.kind == LossKind::Huber          ? "huber"
             : cfg.loss.kind == LossKind::PseudoHuber ? "pseudo_huber"
                                                       : "square")
         << '\n'
         << "loss.delta=" << fmt(cfg.loss.delta) << '\n'
         << "penalty.kind=" << (cfg.penalty.kind == PenaltyKind::L1 ? "l1" : "none") << '\n'
         << "penalty.lambda=" << fmt(cfg.penalty.lambda) << '\n'
         << "schedule.T=" << cfg.T << '\n'
         << "schedule.eta_first=" << fmt(schedule.etas(0)) << '\n'
         << "schedule.batch_fraction=" << fmt(cfg.batch_fraction) << '\n'
         << "weight_mode=" << (dense_selected(cfg) ? "dense" : "hutchinson") << '\n'
         << "probes=" << cfg.probes << '\n'
         << "replicates=" << cfg.replicates << '\n'
         << "master_seed=" << cfg.master_seed << '\n'
         << "survivors=" << agg.survivors << '\n'
         << "failures=" << agg.failures << '\n'
         << "mean_noise=" << fmt(agg.mean_noise) << '\n'
         << "argmin_agree_hat=" << fmt(agg.argmin_agree_hat) << '\n'
         << "argmin_agree_tilde=" << fmt(agg.argmin_agree_tilde) << '\n';
    meta.close();
    if (!meta)
        throw IoError("write failure on " + meta_path.string());
}

}  // namespace trajrisk
