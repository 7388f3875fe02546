#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hforget/market_sim.hpp"
#include "hforget/pricing.hpp"
#include "hforget/types.hpp"

namespace hforget {

/// Per-quote Gauss-Newton sufficient statistics at a reference point:
/// u = w J^T r and psi = w J^T J (packed upper triangle).
struct QuoteStats {
    QuoteId quote_id = 0;
    ShardId shard_id = 0;
    Vec5 u = Vec5::Zero();
    SymPacked psi{};

    static QuoteStats from_jacobian(QuoteId id, ShardId shard, const Vec5& jac, double residual,
                                    double weight);
    Mat5 psi_dense() const { return unpack_symmetric(psi); }
};

/// Normal-equation aggregates (H, G). H is stored dense but only ever updated
/// through its upper triangle and mirrored, so it is exactly symmetric.
struct GnAggregates {
    Mat5 H = Mat5::Zero();
    Vec5 G = Vec5::Zero();
    std::size_t n_quotes = 0;

    void add(const QuoteStats& s);
    void subtract(const QuoteStats& s);
    void add(const GnAggregates& other);
    void subtract(const GnAggregates& other);
    void add_upper(const QuoteStats& s);       // no mirroring; call symmetrize() when done
    void subtract_upper(const QuoteStats& s);  // ditto
    void symmetrize();
};

struct Assembly {
    GnAggregates aggregates;
    std::vector<QuoteStats> stats;   // ascending quote_id
    std::vector<double> residuals;   // ascending quote_id
    double loss = 0.0;               // sum w r^2
};

/// r_i = y_i - m(x_i; theta), in ascending quote_id order.
std::vector<double> residuals(std::span<const Quote> quotes, const HestonParams& params,
                              const Quadrature& quad, int threads = 1);

double weighted_loss(std::span<const Quote> quotes, const HestonParams& params,
                     const Quadrature& quad, int threads = 1);

/// H = sum psi_i, G = sum u_i accumulated in strictly ascending quote_id order.
Assembly assemble(std::span<const Quote> quotes, const HestonParams& params,
                  const Quadrature& quad, const FdPolicy& fd, int threads = 1);

/// Solves (H + damping I) dtheta = G by Cholesky; throws NotPositiveDefinite.
Vec5 gn_step(const GnAggregates& agg, double damping);

double rmse(std::span<const double> residuals);
double rmse(std::span<const Quote> quotes, const HestonParams& params, const Quadrature& quad,
            int threads = 1);

/// w_i = 1 if |r_i| <= c else c / |r_i|.
std::vector<double> huber_weights(std::span<const double> residuals, double c);

struct ParamBox {
    HestonParams lower{1e-3, 1e-4, 1e-3, -0.999, 1e-4};
    HestonParams upper{20.0, 1.0, 3.0, 0.999, 1.0};

    bool contains(const HestonParams& p) const;
    HestonParams clip(const HestonParams& p) const;
};

struct LmConfig {
    double lambda_ridge = 1e-6;
    std::optional<double> mu0;  // unset: mu0_scale * trace(H) / 5 at the start point
    double mu0_scale = 1e-3;
    double mu_up = 4.0;
    double mu_down = 0.5;
    int max_iters = 50;
    double grad_tol = 1e-10;  // on ||G||_inf
    double step_tol = 1e-12;  // on ||dtheta||_2
    double max_damping_factor = 1e16;  // damping cap relative to max(trace(H), 1)
    ParamBox box;
    int threads = 1;

    void validate() const;
};

enum class LmStop { GradTol, StepTol, MaxIters };

std::string to_string(LmStop s);

struct LmIteration {
    int iter = 0;
    double loss = 0.0;       // loss at the iterate before the step
    double damping = 0.0;    // mu used for the accepted (or last tried) step
    double grad_inf = 0.0;
    double step_norm = 0.0;
    double new_loss = 0.0;
    bool accepted = false;
    int rejections = 0;
};

struct LmResult {
    HestonParams theta_ref;
    HestonParams theta_star;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double final_rmse = 0.0;
    LmStop stop = LmStop::MaxIters;
    std::vector<LmIteration> trace;
    double seconds = 0.0;
};

/// Levenberg-Marquardt: GN steps on (H + (mu + lambda_ridge) I), clipped to the box,
/// accepted only when the loss decreases.
LmResult lm_calibrate(std::span<const Quote> quotes, const HestonParams& theta_ref,
                      const LmConfig& cfg, const Quadrature& quad, const FdPolicy& fd);

nlohmann::json to_json(const LmResult& r);
LmResult lm_result_from_json(const nlohmann::json& j);

}  // namespace hforget
