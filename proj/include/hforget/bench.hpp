#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hforget/calibration.hpp"
#include "hforget/forgetting.hpp"
#include "hforget/market_sim.hpp"
#include "hforget/unlearn_cache.hpp"

namespace hforget {

struct ExperimentConfig {
    std::string name;
    PathConfig path;
    GridConfig grid;
    QuadratureConfig quad;
    int shard_days = 10;
    HestonParams theta_true{2.0, 0.06, 0.30, -0.6, 0.06};
    HestonParams theta_init{1.0, 0.04, 0.20, -0.3, 0.04};
    std::uint64_t noise_seed = 43;
    LmConfig lm;
    FdPolicy fd;

    // 90 days, 10-day shards, T in {30, 60} days, K in {90, 100, 110}, noise 1e-3.
    static ExperimentConfig small(std::uint64_t seed = 42);
    // 180 days, 30-day shards, T in {30, 60, 90} days, K in {80..120}, noise 5e-4.
    static ExperimentConfig large(std::uint64_t seed = 42);
    static ExperimentConfig by_name(const std::string& name, std::uint64_t seed = 42);
};

struct Experiment {
    ExperimentConfig config;
    DatasetMeta meta;
    std::vector<Quote> quotes;
    LmResult calibration;
    UnlearnCache cache;  // built at the calibrated theta_star
};

/// Path, quote grid, noise and shard assignment; no fitting.
std::vector<Quote> simulate_dataset(const ExperimentConfig& cfg, DatasetMeta* meta = nullptr,
                                    int threads = 1);

Experiment run_experiment(const ExperimentConfig& cfg, int threads = 1);

/// Writes quotes.csv, meta.json, calibration.json and cache.bin into dir.
void write_experiment(const Experiment& e, const std::string& dir);

/// Uniform sample of k distinct ids, returned sorted. Deterministic for a seed.
std::vector<QuoteId> sample_ids(std::span<const Quote> quotes, std::size_t k, std::uint64_t seed);

/// round(fraction * n), at least 1 and at most n - 1.
std::size_t forget_count(double fraction, std::size_t n);

struct BenchConfig {
    std::vector<double> fractions{0.01, 0.02, 0.05, 0.10, 0.25};
    int n_repeats = 10;
    std::uint64_t seed = 7;
    std::string config_name = "small";
    int threads = 1;
    int fast_batch = 1000;  // fast solves per timing sample; one solve is far below timer resolution

    void validate() const;
};

// One forget set, all three methods.
struct BenchRun {
    double fraction = 0.0;
    int repeat = 0;
    std::size_t n_forget = 0;
    double retrain_seconds = 0.0;
    double recompute_seconds = 0.0;
    double fast_seconds = 0.0;
    Vec5 diff_fast_retrain = Vec5::Zero();       // theta_fast - theta_retrain
    double param_dist_fast_retrain = 0.0;
    double param_dist_recompute_retrain = 0.0;
    double rmse_kept_fast = 0.0;
    double rmse_kept_retrain = 0.0;
    std::size_t n_affected_shards = 0;
    std::size_t n_repriced = 0;
    std::size_t n_retained_in_affected = 0;     // counter the recompute path must match
    double min_eig_Hprime = 0.0;
};

struct BenchRow {
    double fraction = 0.0;
    std::size_t n_forget = 0;
    double median_retrain_seconds = 0.0;
    double median_recompute_seconds = 0.0;
    double median_fast_seconds = 0.0;
    double rmse_kept_fast = 0.0;      // median over repeats
    double rmse_kept_retrain = 0.0;   // median over repeats
    double speedup = 0.0;             // median retrain / median fast
    double param_dist_fast_retrain = 0.0;       // worst repeat
    double param_dist_recompute_retrain = 0.0;  // worst repeat
    double n_affected_shards = 0.0;   // median

    friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::vector<BenchRun> runs;
    std::vector<std::string> violations;  // exactness or counter failures
    std::vector<std::string> warnings;    // timing structure that did not hold
};

inline constexpr double kExactnessTol = 1e-8;

/// Equal when both round to the same 3 significant figures.
bool same_3_sig_figs(double a, double b);

BenchReport bench_sweep(const BenchConfig& cfg, std::span<const Quote> quotes,
                        const UnlearnCache& cache);

struct LocalityRow {
    std::size_t n_affected_shards = 0;
    std::size_t n_forget = 0;
    std::size_t n_repriced = 0;
    double n_repriced_ratio = 0.0;  // n_repriced / N
    double recompute_seconds = 0.0;
    double retrain_seconds = 0.0;
    double time_ratio = 0.0;        // recompute / retrain medians

    friend bool operator==(const LocalityRow&, const LocalityRow&) = default;
};

struct LocalityConfig {
    double shard_fraction = 0.1;  // share of each touched shard that is forgotten
    int n_repeats = 5;
    std::uint64_t seed = 11;
};

/// Scenarios touch the first k shards for k = 0 (empty control) .. all shards.
std::vector<LocalityRow> shard_locality_study(const LocalityConfig& cfg, std::span<const Quote> quotes,
                                              const UnlearnCache& cache);

struct ScalingPoint {
    std::string axis;  // retrain_vs_n, fast_vs_n, fast_vs_f, retrain_vs_nu
    double x = 0.0;
    double median_seconds = 0.0;
    double fitted_slope = 0.0;  // log-log slope of the whole axis

    friend bool operator==(const ScalingPoint&, const ScalingPoint&) = default;
};

struct ScalingConfig {
    std::vector<int> days{36, 72, 180};      // large grid: 15 quotes a day
    std::vector<int> node_counts{180, 400, 800};
    std::vector<double> forget_fractions{0.01, 0.05, 0.25};
    std::size_t fixed_forget = 27;
    int n_repeats = 5;
    int fast_batch = 1000;
    std::uint64_t seed = 42;
};

std::vector<ScalingPoint> scaling_study(const ScalingConfig& cfg);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> v);

// Result CSVs, shortest round-trip doubles so read-then-write is byte-identical.
std::string bench_csv(std::span<const BenchRow> rows);
std::vector<BenchRow> read_bench_csv(std::string_view text);
std::string locality_csv(std::span<const LocalityRow> rows);
std::vector<LocalityRow> read_locality_csv(std::string_view text);
std::string scaling_csv(std::span<const ScalingPoint> rows);
std::vector<ScalingPoint> read_scaling_csv(std::string_view text);
std::string bench_runs_csv(std::span<const BenchRun> runs);

nlohmann::json to_json(const BenchRow& r);

}  // namespace hforget
