#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hforget/calibration.hpp"
#include "hforget/unlearn_cache.hpp"

namespace hforget {

enum class ForgetMethod { Retrain, Recompute, Fast };

std::string to_string(ForgetMethod m);
ForgetMethod forget_method_from_string(const std::string& s);

struct ForgetRequest {
    std::vector<QuoteId> forget_ids;  // sorted, unique
    ForgetMethod method = ForgetMethod::Fast;
    double lambda_ridge = 1e-6;

    ForgetRequest() = default;
    ForgetRequest(std::vector<QuoteId> ids, ForgetMethod m, double lambda);
};

/// Quotes grouped by shard, the raw-data side that sharded recomputation reopens.
class QuoteStore {
public:
    explicit QuoteStore(std::vector<Quote> quotes);

    std::span<const Quote> all() const noexcept { return quotes_; }
    std::span<const Quote> shard(ShardId id) const;
    std::vector<ShardId> shard_ids() const;
    const std::string& dataset_hash() const noexcept { return hash_; }
    std::size_t size() const noexcept { return quotes_.size(); }

private:
    std::vector<Quote> quotes_;  // sorted by (shard_id, quote_id)
    std::map<ShardId, std::pair<std::size_t, std::size_t>> ranges_;
    std::string hash_;
};

struct StabilityReport {
    double norm_dH = 0.0;             // ||H' - H||_2
    double norm_dG = 0.0;             // ||G' - G||_2
    double lambda_min_H = 0.0;
    double lambda_min_Hprime = 0.0;
    double inv_norm_Hprime = 0.0;     // ||(H' + lambda I)^{-1}||_2
    double stability_bound = 0.0;     // inv_norm_Hprime * (||dG|| + ||dH|| ||dtheta||)
    double actual_deviation = 0.0;    // ||dtheta' - dtheta||_2
    double neumann_premise = 0.0;     // ||(H + lambda I)^{-1} dH||_2
    std::optional<double> neumann_inv_norm_bound;  // only when the premise is < 1
    double weyl_lower_bound = 0.0;    // lambda_min(H) - ||dH||_2
};

struct ForgetOutcome {
    ForgetMethod method = ForgetMethod::Fast;
    HestonParams theta_new;           // theta_ref + delta_theta (not clipped)
    Vec5 delta_theta = Vec5::Zero();
    GnAggregates aggregates;          // (H', G') that was solved
    double wall_time = 0.0;           // seconds spent in the operator proper
    std::size_t n_repriced = 0;
    std::size_t n_forgotten = 0;
    std::size_t n_affected_shards = 0;
    double min_eig_Hprime = 0.0;
    std::optional<StabilityReport> stability;
    std::vector<std::string> warnings;
};

/// Relative eigenvalue level below which a conditioning warning is emitted.
inline constexpr double kConditioningWarnLevel = 1e-8;

double min_eigenvalue(const Mat5& m);
double spectral_norm_symmetric(const Mat5& m);

/// Baseline: reassemble on the retained quotes at theta_ref and take one GN step.
ForgetOutcome retrain_full(std::span<const Quote> quotes_retained, const HestonParams& theta_ref,
                           double lambda_ridge, const Quadrature& quad, const FdPolicy& fd,
                           int threads = 1);

/// Reprices only retained quotes of affected shards; unaffected shards reuse cached sums.
ForgetOutcome sharded_recompute(const UnlearnCache& cache, const QuoteStore& store,
                                const ForgetRequest& request, int threads = 1);

/// Data-free operator: subtract cached per-quote statistics, fresh Cholesky solve.
ForgetOutcome fast_refactor(const UnlearnCache& cache, const ForgetRequest& request);

/// The timed core of fast_refactor: downdate and solve, nothing else.
Vec5 fast_refactor_solve(const UnlearnCache& cache, std::span<const QuoteId> forget_ids,
                         double lambda_ridge, GnAggregates* downdated = nullptr);

StabilityReport stability_report(const UnlearnCache& cache, const GnAggregates& before,
                                 const GnAggregates& after, const Vec5& delta_theta_before);

struct Relinearization {
    HestonParams theta_hat;
    double refinement_norm = 0.0;  // ||theta_hat - theta_prime||_2
};

Relinearization relinearize_once(std::span<const Quote> quotes_retained,
                                 const HestonParams& theta_prime, double lambda_ridge,
                                 const Quadrature& quad, const FdPolicy& fd, int threads = 1);

nlohmann::json to_json(const StabilityReport& s);
nlohmann::json to_json(const ForgetOutcome& o);

}  // namespace hforget
