#include "hforget/forgetting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "hforget/errors.hpp"

namespace hforget {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat5 ridge(const Mat5& h, double lambda) {
    Mat5 a = h;
    a.diagonal().array() += lambda;
    return a;
}

void check_proper_subset(std::size_t n_forget, std::size_t n_total) {
    if (n_forget >= n_total) throw InvalidArgument("forget set must leave at least one quote");
}

// Attaches lambda_min(H') and the Weyl bound to a failed solve.
[[noreturn]] void rethrow_npd(const GnAggregates& before, const GnAggregates& after) {
    const double lmin_after = min_eigenvalue(after.H);
    const double weyl = min_eigenvalue(before.H) - spectral_norm_symmetric(after.H - before.H);
    throw NotPositiveDefinite("downdated normal equations are not positive definite (lambda_min(H')=" +
                                  std::to_string(lmin_after) + ")",
                              lmin_after, weyl);
}

void add_diagnostics(ForgetOutcome& out, const UnlearnCache* cache, double lambda) {
    out.min_eig_Hprime = min_eigenvalue(out.aggregates.H);
    const double scale = spectral_norm_symmetric(out.aggregates.H);
    if (out.min_eig_Hprime < kConditioningWarnLevel * scale) {
        out.warnings.push_back("ill-conditioned curvature after forgetting: lambda_min(H')=" +
                               std::to_string(out.min_eig_Hprime) + ", ||H'||_2=" + std::to_string(scale));
    }
    if (cache != nullptr) {
        if (lambda != cache->lambda_ridge) {
            out.warnings.push_back("request lambda differs from the cache lambda");
        }
        const Vec5 before = gn_step(cache->global, cache->lambda_ridge);
        out.stability = stability_report(*cache, cache->global, out.aggregates, before);
    }
}

}  // namespace

std::string to_string(ForgetMethod m) {
    switch (m) {
        case ForgetMethod::Retrain: return "retrain";
        case ForgetMethod::Recompute: return "recompute";
        case ForgetMethod::Fast: return "fast";
    }
    return "unknown";
}

ForgetMethod forget_method_from_string(const std::string& s) {
    if (s == "retrain") return ForgetMethod::Retrain;
    if (s == "recompute") return ForgetMethod::Recompute;
    if (s == "fast") return ForgetMethod::Fast;
    throw InvalidArgument("unknown forget method '" + s + "'");
}

ForgetRequest::ForgetRequest(std::vector<QuoteId> ids, ForgetMethod m, double lambda)
    : forget_ids(std::move(ids)), method(m), lambda_ridge(lambda) {
    std::sort(forget_ids.begin(), forget_ids.end());
    forget_ids.erase(std::unique(forget_ids.begin(), forget_ids.end()), forget_ids.end());
    if (!(lambda_ridge >= 0.0)) throw InvalidArgument("lambda_ridge must be >= 0");
}

QuoteStore::QuoteStore(std::vector<Quote> quotes) : hash_(::hforget::dataset_hash(quotes)) {
    quotes_ = std::move(quotes);
    std::stable_sort(quotes_.begin(), quotes_.end(), [](const Quote& a, const Quote& b) {
        return a.shard_id != b.shard_id ? a.shard_id < b.shard_id : a.quote_id < b.quote_id;
    });
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= quotes_.size(); ++i) {
        if (i == quotes_.size() || quotes_[i].shard_id != quotes_[begin].shard_id) {
            ranges_[quotes_[begin].shard_id] = {begin, i};
            begin = i;
        }
    }
}

std::span<const Quote> QuoteStore::shard(ShardId id) const {
    const auto it = ranges_.find(id);
    if (it == ranges_.end()) return {};
    return std::span<const Quote>(quotes_).subspan(it->second.first, it->second.second - it->second.first);
}

std::vector<ShardId> QuoteStore::shard_ids() const {
    std::vector<ShardId> ids;
    for (const auto& [id, range] : ranges_) ids.push_back(id);
    return ids;
}

double min_eigenvalue(const Mat5& m) {
    const Eigen::SelfAdjointEigenSolver<Mat5> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

double spectral_norm_symmetric(const Mat5& m) {
    const Eigen::SelfAdjointEigenSolver<Mat5> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

ForgetOutcome retrain_full(std::span<const Quote> quotes_retained, const HestonParams& theta_ref,
                           double lambda_ridge, const Quadrature& quad, const FdPolicy& fd,
                           int threads) {
    if (quotes_retained.empty()) throw InvalidArgument("retained set is empty");
    ForgetOutcome out;
    out.method = ForgetMethod::Retrain;
    const auto t0 = Clock::now();
    const Assembly assembly = assemble(quotes_retained, theta_ref, quad, fd, threads);
    out.aggregates = assembly.aggregates;
    try {
        out.delta_theta = gn_step(out.aggregates, lambda_ridge);
    } catch (const NotPositiveDefinite&) {
        throw NotPositiveDefinite("retained normal equations are not positive definite",
                                  min_eigenvalue(out.aggregates.H));
    }
    out.wall_time = seconds_since(t0);
    out.theta_new = HestonParams::from_vec(theta_ref.to_vec() + out.delta_theta);
    out.n_repriced = quotes_retained.size();
    add_diagnostics(out, nullptr, lambda_ridge);
    return out;
}

ForgetOutcome sharded_recompute(const UnlearnCache& cache, const QuoteStore& store,
                                const ForgetRequest& request, int threads) {
    if (store.dataset_hash() != cache.meta.dataset_hash) {
        throw DatasetHashMismatch("quote store does not match the dataset the cache was built on");
    }
    const auto& ids = request.forget_ids;
    check_proper_subset(ids.size(), cache.per_quote.size());
    std::set<ShardId> affected;
    for (QuoteId id : ids) affected.insert(cache.stats(id).shard_id);

    const Quadrature quad(cache.meta.quad);
    ForgetOutcome out;
    out.method = ForgetMethod::Recompute;
    out.n_forgotten = ids.size();
    out.n_affected_shards = affected.size();

    const auto t0 = Clock::now();
    if (ids.empty()) {
        out.aggregates = cache.global;
    } else {
        for (const auto& [shard, agg] : cache.per_shard) {
            if (!affected.contains(shard)) {
                out.aggregates.add(agg);
                continue;
            }
            std::vector<Quote> kept;
            for (const Quote& q : store.shard(shard)) {
                if (!std::binary_search(ids.begin(), ids.end(), q.quote_id)) kept.push_back(q);
            }
            if (kept.empty()) continue;  // whole shard forgotten: its cached sums simply drop out
            out.aggregates.add(assemble(kept, cache.theta_ref, quad, cache.meta.fd, threads).aggregates);
            out.n_repriced += kept.size();
        }
    }
    try {
        out.delta_theta = gn_step(out.aggregates, request.lambda_ridge);
    } catch (const NotPositiveDefinite&) {
        rethrow_npd(cache.global, out.aggregates);
    }
    out.wall_time = seconds_since(t0);
    out.theta_new = HestonParams::from_vec(cache.theta_ref.to_vec() + out.delta_theta);
    add_diagnostics(out, &cache, request.lambda_ridge);
    return out;
}

Vec5 fast_refactor_solve(const UnlearnCache& cache, std::span<const QuoteId> forget_ids,
                         double lambda_ridge, GnAggregates* downdated) {
    const GnAggregates agg = subtract_quotes(cache, forget_ids);
    if (downdated != nullptr) *downdated = agg;
    return gn_step(agg, lambda_ridge);
}

ForgetOutcome fast_refactor(const UnlearnCache& cache, const ForgetRequest& request) {
    check_proper_subset(request.forget_ids.size(), cache.per_quote.size());
    ForgetOutcome out;
    out.method = ForgetMethod::Fast;
    out.n_forgotten = request.forget_ids.size();
    const auto t0 = Clock::now();
    try {
        out.delta_theta = fast_refactor_solve(cache, request.forget_ids, request.lambda_ridge, &out.aggregates);
    } catch (const NotPositiveDefinite&) {
        rethrow_npd(cache.global, out.aggregates);
    }
    out.wall_time = seconds_since(t0);
    out.theta_new = HestonParams::from_vec(cache.theta_ref.to_vec() + out.delta_theta);
    std::set<ShardId> affected;
    for (QuoteId id : request.forget_ids) affected.insert(cache.stats(id).shard_id);
    out.n_affected_shards = affected.size();
    add_diagnostics(out, &cache, request.lambda_ridge);
    return out;
}

StabilityReport stability_report(const UnlearnCache& cache, const GnAggregates& before,
                                 const GnAggregates& after, const Vec5& delta_theta_before) {
    const double lambda = cache.lambda_ridge;
    StabilityReport s;
    const Mat5 dH = after.H - before.H;
    const Vec5 dG = after.G - before.G;
    s.norm_dH = spectral_norm_symmetric(dH);
    s.norm_dG = dG.norm();
    s.lambda_min_H = min_eigenvalue(before.H);
    s.lambda_min_Hprime = min_eigenvalue(after.H);
    s.weyl_lower_bound = s.lambda_min_H - s.norm_dH;

    const double lmin_ridged = min_eigenvalue(ridge(after.H, lambda));
    s.inv_norm_Hprime = lmin_ridged > 0.0 ? 1.0 / lmin_ridged : std::numeric_limits<double>::infinity();
    s.stability_bound = s.inv_norm_Hprime * (s.norm_dG + s.norm_dH * delta_theta_before.norm());

    if (lmin_ridged > 0.0) {
        const Vec5 delta_after = gn_step(after, lambda);
        s.actual_deviation = (delta_after - delta_theta_before).norm();
    } else {
        s.actual_deviation = std::numeric_limits<double>::infinity();
    }

    const Mat5 before_ridged = ridge(before.H, lambda);
    const Mat5 inv_before = before_ridged.inverse();
    const Eigen::JacobiSVD<Mat5> svd(inv_before * dH);
    s.neumann_premise = svd.singularValues()[0];
    if (s.neumann_premise < 1.0) {
        const double inv_norm_before = 1.0 / min_eigenvalue(before_ridged);
        s.neumann_inv_norm_bound = inv_norm_before / (1.0 - s.neumann_premise);
    }
    return s;
}

Relinearization relinearize_once(std::span<const Quote> quotes_retained,
                                 const HestonParams& theta_prime, double lambda_ridge,
                                 const Quadrature& quad, const FdPolicy& fd, int threads) {
    if (quotes_retained.empty()) throw InvalidArgument("retained set is empty");
    const Assembly assembly = assemble(quotes_retained, theta_prime, quad, fd, threads);
    const Vec5 step = gn_step(assembly.aggregates, lambda_ridge);
    Relinearization out;
    out.theta_hat = HestonParams::from_vec(theta_prime.to_vec() + step);
    out.refinement_norm = step.norm();
    return out;
}

nlohmann::json to_json(const StabilityReport& s) {
    nlohmann::json j = {{"norm_dH", s.norm_dH},
                        {"norm_dG", s.norm_dG},
                        {"lambda_min_H", s.lambda_min_H},
                        {"lambda_min_Hprime", s.lambda_min_Hprime},
                        {"inv_norm_Hprime", s.inv_norm_Hprime},
                        {"stability_bound", s.stability_bound},
                        {"actual_deviation", s.actual_deviation},
                        {"neumann_premise", s.neumann_premise},
                        {"weyl_lower_bound", s.weyl_lower_bound}};
    j["neumann_inv_norm_bound"] = s.neumann_inv_norm_bound ? nlohmann::json(*s.neumann_inv_norm_bound) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const ForgetOutcome& o) {
    nlohmann::json j = {{"method", to_string(o.method)},
                        {"theta_new", params_to_json(o.theta_new)},
                        {"delta_theta", std::vector<double>(o.delta_theta.data(), o.delta_theta.data() + kNumParams)},
                        {"wall_time", o.wall_time},
                        {"n_repriced", o.n_repriced},
                        {"n_forgotten", o.n_forgotten},
                        {"n_affected_shards", o.n_affected_shards},
                        {"min_eig_Hprime", o.min_eig_Hprime},
                        {"warnings", o.warnings}};
    j["stability"] = o.stability ? to_json(*o.stability) : nlohmann::json(nullptr);
    return j;
}

}  // namespace hforget
