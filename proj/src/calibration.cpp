#include "hforget/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "hforget/errors.hpp"

namespace hforget {

namespace {

// Quotes in ascending quote_id order; copies only when the input is unsorted.
std::span<const Quote> sorted_by_id(std::span<const Quote> quotes, std::vector<Quote>& storage) {
    const auto by_id = [](const Quote& a, const Quote& b) { return a.quote_id < b.quote_id; };
    if (std::is_sorted(quotes.begin(), quotes.end(), by_id)) return quotes;
    storage.assign(quotes.begin(), quotes.end());
    std::stable_sort(storage.begin(), storage.end(), by_id);
    return storage;
}

}  // namespace

QuoteStats QuoteStats::from_jacobian(QuoteId id, ShardId shard, const Vec5& jac, double residual,
                                     double weight) {
    QuoteStats s;
    s.quote_id = id;
    s.shard_id = shard;
    const double wr = weight * residual;
    for (int a = 0; a < kNumParams; ++a) {
        s.u[a] = wr * jac[a];
        const double wj = weight * jac[a];
        for (int b = a; b < kNumParams; ++b) s.psi[packed_index(a, b)] = wj * jac[b];
    }
    return s;
}

void GnAggregates::add_upper(const QuoteStats& s) {
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) H(a, b) += s.psi[packed_index(a, b)];
    }
    G += s.u;
    ++n_quotes;
}

void GnAggregates::subtract_upper(const QuoteStats& s) {
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) H(a, b) -= s.psi[packed_index(a, b)];
    }
    G -= s.u;
    --n_quotes;
}

void GnAggregates::symmetrize() {
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a + 1; b < kNumParams; ++b) H(b, a) = H(a, b);
    }
}

void GnAggregates::add(const QuoteStats& s) {
    add_upper(s);
    symmetrize();
}

void GnAggregates::subtract(const QuoteStats& s) {
    subtract_upper(s);
    symmetrize();
}

void GnAggregates::add(const GnAggregates& other) {
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) H(a, b) += other.H(a, b);
    }
    G += other.G;
    n_quotes += other.n_quotes;
    symmetrize();
}

void GnAggregates::subtract(const GnAggregates& other) {
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) H(a, b) -= other.H(a, b);
    }
    G -= other.G;
    n_quotes -= other.n_quotes;
    symmetrize();
}

std::vector<double> residuals(std::span<const Quote> quotes, const HestonParams& params,
                              const Quadrature& quad, int threads) {
    std::vector<Quote> storage;
    const auto sorted = sorted_by_id(quotes, storage);
    const auto prices = price_calls(features_of(sorted), params, quad, threads);
    std::vector<double> r(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) r[i] = sorted[i].y - prices[i];
    return r;
}

double weighted_loss(std::span<const Quote> quotes, const HestonParams& params,
                     const Quadrature& quad, int threads) {
    std::vector<Quote> storage;
    const auto sorted = sorted_by_id(quotes, storage);
    const auto r = residuals(sorted, params, quad, threads);
    double loss = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) loss += sorted[i].weight * r[i] * r[i];
    return loss;
}

Assembly assemble(std::span<const Quote> quotes, const HestonParams& params,
                  const Quadrature& quad, const FdPolicy& fd, int threads) {
    std::vector<Quote> storage;
    const auto sorted = sorted_by_id(quotes, storage);
    const auto pj = price_with_jacobians(features_of(sorted), params, quad, fd, threads);

    Assembly out;
    out.stats.reserve(sorted.size());
    out.residuals.resize(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const Quote& q = sorted[i];
        const double r = q.y - pj.prices[i];
        out.residuals[i] = r;
        out.loss += q.weight * r * r;
        out.stats.push_back(QuoteStats::from_jacobian(q.quote_id, q.shard_id, pj.jacobians[i], r, q.weight));
        out.aggregates.add_upper(out.stats.back());
    }
    out.aggregates.symmetrize();
    return out;
}

Vec5 gn_step(const GnAggregates& agg, double damping) {
    if (!(damping >= 0.0)) throw InvalidArgument("damping must be non-negative");
    Mat5 a = agg.H;
    a.diagonal().array() += damping;
    const Eigen::LLT<Mat5> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("Cholesky factorization of H + damping*I failed");
    }
    Vec5 step = llt.solve(agg.G);
    if (!step.allFinite()) throw NotPositiveDefinite("Gauss-Newton solve produced non-finite step");
    return step;
}

double rmse(std::span<const double> r) {
    if (r.empty()) return 0.0;
    double ss = 0.0;
    for (double x : r) ss += x * x;
    return std::sqrt(ss / static_cast<double>(r.size()));
}

double rmse(std::span<const Quote> quotes, const HestonParams& params, const Quadrature& quad,
            int threads) {
    return rmse(residuals(quotes, params, quad, threads));
}

std::vector<double> huber_weights(std::span<const double> r, double c) {
    if (!(c > 0.0)) throw InvalidArgument("Huber threshold must be positive");
    std::vector<double> w(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double a = std::abs(r[i]);
        w[i] = a <= c ? 1.0 : c / a;
    }
    return w;
}

bool ParamBox::contains(const HestonParams& p) const {
    const Vec5 v = p.to_vec(), lo = lower.to_vec(), hi = upper.to_vec();
    return (v.array() >= lo.array()).all() && (v.array() <= hi.array()).all();
}

HestonParams ParamBox::clip(const HestonParams& p) const {
    return HestonParams::from_vec(p.to_vec().cwiseMax(lower.to_vec()).cwiseMin(upper.to_vec()));
}

void LmConfig::validate() const {
    if (!(lambda_ridge >= 0.0)) throw InvalidArgument("lambda_ridge must be >= 0");
    if (mu0 && !(*mu0 > 0.0)) throw InvalidArgument("mu0 must be positive");
    if (!(mu0_scale > 0.0) || !(mu_up > 1.0) || !(mu_down > 0.0 && mu_down < 1.0)) {
        throw InvalidArgument("invalid damping schedule");
    }
    if (max_iters < 1 || !(grad_tol > 0.0) || !(step_tol > 0.0) || !(max_damping_factor > 0.0)) {
        throw InvalidArgument("invalid stopping rules");
    }
}

std::string to_string(LmStop s) {
    switch (s) {
        case LmStop::GradTol: return "grad_tol";
        case LmStop::StepTol: return "step_tol";
        case LmStop::MaxIters: return "max_iters";
    }
    return "unknown";
}

LmResult lm_calibrate(std::span<const Quote> quotes, const HestonParams& theta_ref,
                      const LmConfig& cfg, const Quadrature& quad, const FdPolicy& fd) {
    cfg.validate();
    theta_ref.validate();
    if (!cfg.box.contains(theta_ref)) throw InvalidArgument("theta_ref outside the parameter box");
    if (quotes.empty()) throw InvalidArgument("cannot calibrate on an empty dataset");

    const auto start = std::chrono::steady_clock::now();
    LmResult result;
    result.theta_ref = theta_ref;

    HestonParams theta = theta_ref;
    Assembly asm_ = assemble(quotes, theta, quad, fd, cfg.threads);
    double loss = asm_.loss;
    result.initial_loss = loss;

    const double trace_h = asm_.aggregates.H.trace();
    double mu = cfg.mu0 ? *cfg.mu0 : cfg.mu0_scale * std::max(trace_h, 1e-300) / kNumParams;
    const double mu_cap = cfg.max_damping_factor * std::max(trace_h, 1.0);

    result.stop = LmStop::MaxIters;
    bool done = false;
    for (int iter = 0; iter < cfg.max_iters && !done; ++iter) {
        LmIteration rec;
        rec.iter = iter;
        rec.loss = loss;
        rec.grad_inf = asm_.aggregates.G.lpNorm<Eigen::Infinity>();
        if (rec.grad_inf <= cfg.grad_tol) {
            result.stop = LmStop::GradTol;
            break;
        }
        while (true) {
            rec.damping = mu;
            Vec5 step;
            try {
                step = gn_step(asm_.aggregates, mu + cfg.lambda_ridge);
            } catch (const NotPositiveDefinite&) {
                if (mu > mu_cap) throw NotPositiveDefinite("normal equations not positive definite at maximum damping");
                mu *= cfg.mu_up;
                ++rec.rejections;
                continue;
            }
            const HestonParams candidate = cfg.box.clip(HestonParams::from_vec(theta.to_vec() + step));
            const Vec5 actual = candidate.to_vec() - theta.to_vec();
            rec.step_norm = actual.norm();
            if (rec.step_norm <= cfg.step_tol) {
                result.stop = LmStop::StepTol;
                done = true;
                break;
            }
            const double new_loss = weighted_loss(quotes, candidate, quad, cfg.threads);
            if (new_loss < loss) {
                rec.accepted = true;
                rec.new_loss = new_loss;
                theta = candidate;
                mu *= cfg.mu_down;
                asm_ = assemble(quotes, theta, quad, fd, cfg.threads);
                loss = asm_.loss;
                break;
            }
            mu *= cfg.mu_up;
            ++rec.rejections;
            if (mu > mu_cap) {
                result.stop = LmStop::StepTol;
                done = true;
                break;
            }
        }
        result.trace.push_back(rec);
    }

    result.theta_star = theta;
    result.final_loss = loss;
    result.final_rmse = rmse(asm_.residuals);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

nlohmann::json to_json(const LmResult& r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& it : r.trace) {
        trace.push_back({{"iter", it.iter},
                         {"loss", it.loss},
                         {"damping", it.damping},
                         {"grad_inf", it.grad_inf},
                         {"step_norm", it.step_norm},
                         {"new_loss", it.new_loss},
                         {"accepted", it.accepted},
                         {"rejections", it.rejections}});
    }
    return {{"theta_ref", params_to_json(r.theta_ref)},
            {"theta_star", params_to_json(r.theta_star)},
            {"initial_loss", r.initial_loss},
            {"final_loss", r.final_loss},
            {"final_rmse", r.final_rmse},
            {"stop", to_string(r.stop)},
            {"iterations", r.trace.size()},
            {"seconds", r.seconds},
            {"trace", trace}};
}

LmResult lm_result_from_json(const nlohmann::json& j) {
    LmResult r;
    r.theta_ref = params_from_json(j.at("theta_ref"));
    r.theta_star = params_from_json(j.at("theta_star"));
    r.initial_loss = j.at("initial_loss").get<double>();
    r.final_loss = j.at("final_loss").get<double>();
    r.final_rmse = j.at("final_rmse").get<double>();
    const auto stop = j.at("stop").get<std::string>();
    r.stop = stop == "grad_tol" ? LmStop::GradTol : stop == "step_tol" ? LmStop::StepTol : LmStop::MaxIters;
    r.seconds = j.at("seconds").get<double>();
    for (const auto& t : j.at("trace")) {
        LmIteration it;
        it.iter = t.at("iter").get<int>();
        it.loss = t.at("loss").get<double>();
        it.damping = t.at("damping").get<double>();
        it.grad_inf = t.at("grad_inf").get<double>();
        it.step_norm = t.at("step_norm").get<double>();
        it.new_loss = t.at("new_loss").get<double>();
        it.accepted = t.at("accepted").get<bool>();
        it.rejections = t.at("rejections").get<int>();
        r.trace.push_back(it);
    }
    return r;
}

}  // namespace hforget
