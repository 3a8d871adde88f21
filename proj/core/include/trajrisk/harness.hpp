#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajrisk/model.hpp"
#include "trajrisk/risk.hpp"
#include "trajrisk/trajectory.hpp"
#include "trajrisk/weights.hpp"

namespace trajrisk {

enum class Algorithm { GD, SGD, PGD, PSGD };

enum class WeightMode { Dense, Hutchinson, Auto };

struct ExperimentConfig {
    ProblemConfig problem;
    LossSpec loss;
    PenaltySpec penalty;

    Eigen::Index T = 100;
    double eta = -1.0;            // < 0 means the (1+sqrt(p/n_*))^-2 default
    Eigen::VectorXd etas;         // nonempty overrides eta
    double batch_fraction = 1.0;
    Algorithm algorithm = Algorithm::GD;

    int replicates = 1;
    int probes = 100;
    WeightMode weight_mode = WeightMode::Auto;
    bool compute_hat = true;      // the W-based curve
    bool compute_tilde = true;    // the Khat^{-1} Ahat curve
    bool compute_sub = false;     // the batch-restricted curve
    bool freeze_batches = false;  // reuse one batch plan across replicates

    std::uint64_t master_seed = 1;
    std::filesystem::path output_dir;
    int argmin_window = 3;
    int workers = 0;              // 0 reads TRAJRISK_WORKERS, else serial
};

// Flat key=value file with '#' comments; dotted keys mirror the struct
// nesting (problem.n, loss.kind, ...). Unknown keys are a ConfigError.
ExperimentConfig parse_config_file(const std::filesystem::path& path);
// One "key=value" override as accepted by the CLI.
void apply_override(ExperimentConfig& cfg, const std::string& kv);
// Cross-field checks; throws ConfigError.
void validate(const ExperimentConfig& cfg);

Schedule make_schedule(const ExperimentConfig& cfg);

struct ReplicateResult {
    int rep = -1;
    RiskSeries series;
    bool failed = false;
    std::string failure;          // diagnostic when failed
};

struct CurveStats {
    Eigen::VectorXd mean, median, se;  // length T, over surviving replicates
};

struct AggregateResult {
    CurveStats true_curve, hat, tilde, sub;
    bool has_tilde = false;
    bool has_sub = false;
    int survivors = 0;
    int failures = 0;
    double mean_noise = 0.0;
    // Smoothed-argmin agreement diagnostics between the oracle curve and
    // each estimate (fraction of replicates whose argmins coincide within
    // argmin_window).
    double argmin_agree_hat = 0.0;
    double argmin_agree_tilde = 0.0;
};

std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg);

AggregateResult aggregate(const std::vector<ReplicateResult>& reps,
                          const ExperimentConfig& cfg);

// raw.csv, summary.csv and meta.txt under cfg.output_dir; doubles are
// written in shortest round-trip form so reruns are byte-identical.
void emit_csv(const std::vector<ReplicateResult>& reps, const AggregateResult& agg,
              const ExperimentConfig& cfg);

Eigen::Index smoothed_argmin(const Eigen::VectorXd& curve, int window);

}  // namespace trajrisk
