#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "hforget/types.hpp"

namespace hforget {

/// Heston model parameters. Variance quantities are in annualized variance units.
struct HestonParams {
    double kappa = 0.0;    // mean-reversion speed
    double theta_v = 0.0;  // long-run variance
    double sigma_v = 0.0;  // vol-of-vol
    double rho = 0.0;      // spot/variance shock correlation
    double v0 = 0.0;       // initial variance

    Vec5 to_vec() const { return Vec5(kappa, theta_v, sigma_v, rho, v0); }
    static HestonParams from_vec(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

    /// kappa, theta_v, sigma_v, v0 > 0 and -1 < rho < 1, all finite.
    bool is_valid() const;
    void validate() const;

    friend bool operator==(const HestonParams&, const HestonParams&) = default;
};

struct QuoteFeatures {
    double spot = 0.0;
    double strike = 0.0;
    double maturity = 0.0;  // years
    double rate = 0.0;      // continuously compounded

    void validate() const;
    friend bool operator==(const QuoteFeatures&, const QuoteFeatures&) = default;
};

struct QuadratureConfig {
    double u_max = 120.0;
    int n_sub = 800;  // Simpson sub-intervals, even
    double u_floor = 1e-8;

    void validate() const;
    friend bool operator==(const QuadratureConfig&, const QuadratureConfig&) = default;

    static QuadratureConfig small() { return {50.0, 180, 1e-8}; }
    static QuadratureConfig large() { return {120.0, 800, 1e-8}; }
};

/// Composite Simpson nodes on [u_floor, u_max] with the 1/u factor of the
/// inversion integrand folded into the weights. Immutable; share freely.
class Quadrature {
public:
    explicit Quadrature(const QuadratureConfig& cfg);

    const QuadratureConfig& config() const noexcept { return cfg_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::span<const double> nodes() const noexcept { return nodes_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> weights_over_u() const noexcept { return weights_over_u_; }

private:
    QuadratureConfig cfg_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> weights_over_u_;
};

/// Heston (1993) characteristic function phi_j(u) of ln S_T, j in {1, 2},
/// evaluated in the branch-stable form.
std::complex<double> char_fn(double u, int j, const HestonParams& params,
                             const QuoteFeatures& features);

double price_call(const QuoteFeatures& features, const HestonParams& params,
                  const Quadrature& quad);

/// Prices a batch. Consecutive quotes sharing a maturity reuse one evaluation of
/// the characteristic function; each price is bit-identical to price_call.
std::vector<double> price_calls(std::span<const QuoteFeatures> features,
                                const HestonParams& params, const Quadrature& quad,
                                int threads = 1);

struct FdPolicy {
    double rel_step = 1e-5;
    double abs_step = 1e-7;  // floor for parameters near zero
    double min_step = 1e-9;  // shrinking below this is an error
    double shrink = 2.0;

    void validate() const;
    friend bool operator==(const FdPolicy&, const FdPolicy&) = default;
};

/// Central-difference step per parameter: max(rel_step*|theta_k|, abs_step), halved
/// until both bumps stay inside the parameter domain. Throws BumpError below min_step.
Vec5 fd_steps(const HestonParams& params, const FdPolicy& fd);

Vec5 price_jacobian(const QuoteFeatures& features, const HestonParams& params,
                    const Quadrature& quad, const FdPolicy& fd);

struct PricesAndJacobians {
    std::vector<double> prices;
    std::vector<Vec5> jacobians;
};

PricesAndJacobians price_with_jacobians(std::span<const QuoteFeatures> features,
                                        const HestonParams& params, const Quadrature& quad,
                                        const FdPolicy& fd, int threads = 1);

double black_scholes_call(double spot, double strike, double maturity, double rate, double vol);

}  // namespace hforget
