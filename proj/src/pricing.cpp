#include "hforget/pricing.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hforget/errors.hpp"
#include "parallel.hpp"

namespace hforget {

namespace {

using cplx = std::complex<double>;

constexpr double kInvPi = std::numbers::inv_pi;

// Parts of the log characteristic function that depend on (kappa, sigma_v, rho, T):
// log phi_j = kappa*theta_v*c_j + d_j*v0 + i u (ln S + rT). Written so that no term
// divides by sigma_v^2, which keeps the BS limit sigma_v -> 0 accurate.
struct CoreTerms {
    cplx c;  // C_j / (kappa theta_v)
    cplx d;  // D_j
};

CoreTerms core_terms(double u, int j, double kappa, double sigma, double rho, double maturity) {
    const double half = (j == 1) ? 0.5 : -0.5;
    const double b = (j == 1) ? kappa - rho * sigma : kappa;
    const double s2 = sigma * sigma;
    const cplx iu(0.0, u);

    const cplx beta = b - rho * sigma * iu;
    const cplx w = 2.0 * half * iu - u * u;
    const cplx disc = std::sqrt(beta * beta - s2 * w);
    const cplx inv_bpd = 1.0 / (beta + disc);
    const cplx q = w * inv_bpd;        // (beta - disc) / sigma^2
    const cplx g = s2 * q * inv_bpd;   // (beta - disc) / (beta + disc)
    const cplx e = std::exp(-disc * maturity);
    const cplx one_minus_e = 1.0 - e;

    CoreTerms out;
    out.d = q * one_minus_e / (1.0 - g * e);

    // (2 / sigma^2) ln((1 - g e) / (1 - g)) = 2 y log1p(x) / x, x = sigma^2 y, 1 - g = 2 disc / (beta + disc)
    const cplx y = q * one_minus_e / (2.0 * disc);
    const cplx x = s2 * y;
    cplx log1p_over_x;
    if (std::abs(x) < 1e-3) {
        log1p_over_x = 1.0 + x * (-0.5 + x * (1.0 / 3.0 + x * (-0.25 + x * (0.2 - x / 6.0))));
    } else {
        log1p_over_x = std::log(1.0 + x) / x;
    }
    out.c = q * maturity - 2.0 * y * log1p_over_x;
    return out;
}

cplx log_cf_core(double u, int j, const HestonParams& p, double maturity) {
    const CoreTerms t = core_terms(u, j, p.kappa, p.sigma_v, p.rho, maturity);
    return p.kappa * p.theta_v * t.c + t.d * p.v0;
}

// Core terms on every quadrature node for one (kappa, sigma_v, rho, T).
struct CoreTable {
    std::vector<CoreTerms> j1, j2;
};

void fill_core(CoreTable& core, double maturity, const HestonParams& p, const Quadrature& quad) {
    const auto nodes = quad.nodes();
    core.j1.resize(nodes.size());
    core.j2.resize(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        core.j1[k] = core_terms(nodes[k], 1, p.kappa, p.sigma_v, p.rho, maturity);
        core.j2[k] = core_terms(nodes[k], 2, p.kappa, p.sigma_v, p.rho, maturity);
    }
}

// Weighted integrand values exp(log phi_j(u_n) - phase) * w_n / u_n.
struct IntegrandTable {
    std::vector<double> re1, im1, re2, im2;
};

void fill_table(IntegrandTable& t, const CoreTable& core, const HestonParams& p,
                const Quadrature& quad, double maturity) {
    const auto wu = quad.weights_over_u();
    const std::size_t n = wu.size();
    t.re1.resize(n);
    t.im1.resize(n);
    t.re2.resize(n);
    t.im2.resize(n);
    const double a = p.kappa * p.theta_v;
    for (std::size_t k = 0; k < n; ++k) {
        const cplx e1 = std::exp(a * core.j1[k].c + core.j1[k].d * p.v0) * wu[k];
        const cplx e2 = std::exp(a * core.j2[k].c + core.j2[k].d * p.v0) * wu[k];
        t.re1[k] = e1.real();
        t.im1[k] = e1.imag();
        t.re2[k] = e2.real();
        t.im2[k] = e2.imag();
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(t.re1[k]) || !std::isfinite(t.im1[k]) || !std::isfinite(t.re2[k]) ||
            !std::isfinite(t.im2[k])) {
            throw PricingError("non-finite Heston integrand at u=" + std::to_string(quad.nodes()[k]) +
                               ", T=" + std::to_string(maturity));
        }
    }
}

// Phase e^{i u_n k} with k = ln(S/K) + rT; stored as (cos, sin).
void fill_phases(std::vector<double>& c, std::vector<double>& s, const QuoteFeatures& f,
                 const Quadrature& quad) {
    const double k = std::log(f.spot / f.strike) + f.rate * f.maturity;
    const auto nodes = quad.nodes();
    c.resize(nodes.size());
    s.resize(nodes.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const double a = nodes[n] * k;
        c[n] = std::cos(a);
        s[n] = std::sin(a);
    }
}

// sum_n Im(E_n * phase_n) with four interleaved accumulators in a fixed order.
double integrate(const std::vector<double>& re, const std::vector<double>& im,
                 const std::vector<double>& c, const std::vector<double>& s) {
    const std::size_t n = re.size();
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        for (std::size_t l = 0; l < 4; ++l) acc[l] += re[k + l] * s[k + l] + im[k + l] * c[k + l];
    }
    for (; k < n; ++k) acc[0] += re[k] * s[k] + im[k] * c[k];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double price_from(const IntegrandTable& t, const QuoteFeatures& f, const std::vector<double>& c,
                  const std::vector<double>& s) {
    const double p1 = 0.5 + kInvPi * integrate(t.re1, t.im1, c, s);
    const double p2 = 0.5 + kInvPi * integrate(t.re2, t.im2, c, s);
    const double price = f.spot * p1 - f.strike * std::exp(-f.rate * f.maturity) * p2;
    if (!std::isfinite(price)) throw PricingError("non-finite Heston price");
    return price;
}

// Consecutive runs [begin, end) of equal maturity.
std::vector<std::pair<std::size_t, std::size_t>> maturity_runs(
    std::span<const QuoteFeatures> features) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= features.size(); ++i) {
        if (i == features.size() || features[i].maturity != features[begin].maturity) {
            runs.emplace_back(begin, i);
            begin = i;
        }
    }
    return runs;
}

bool in_domain(const Vec5& v) { return HestonParams::from_vec(v).is_valid(); }

}  // namespace

bool HestonParams::is_valid() const {
    const Vec5 v = to_vec();
    if (!v.allFinite()) return false;
    return kappa > 0.0 && theta_v > 0.0 && sigma_v > 0.0 && v0 > 0.0 && rho > -1.0 && rho < 1.0;
}

void HestonParams::validate() const {
    if (!is_valid()) {
        throw InvalidArgument("invalid Heston parameters (kappa=" + std::to_string(kappa) +
                              ", theta_v=" + std::to_string(theta_v) +
                              ", sigma_v=" + std::to_string(sigma_v) +
                              ", rho=" + std::to_string(rho) + ", v0=" + std::to_string(v0) + ")");
    }
}

void QuoteFeatures::validate() const {
    if (!(spot > 0.0) || !(strike > 0.0) || !(maturity > 0.0) || !std::isfinite(spot) ||
        !std::isfinite(strike) || !std::isfinite(maturity) || !std::isfinite(rate)) {
        throw InvalidArgument("invalid quote features");
    }
}

void QuadratureConfig::validate() const {
    if (!(u_floor > 0.0) || !(u_max > u_floor) || !std::isfinite(u_max)) {
        throw InvalidArgument("quadrature needs u_max > u_floor > 0");
    }
    if (n_sub < 2 || n_sub % 2 != 0) throw InvalidArgument("n_sub must be even and >= 2");
}

void FdPolicy::validate() const {
    if (!(rel_step > 0.0) || !(abs_step > 0.0) || !(min_step > 0.0) || !(shrink > 1.0)) {
        throw InvalidArgument("invalid finite-difference policy");
    }
}

Quadrature::Quadrature(const QuadratureConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t n = static_cast<std::size_t>(cfg_.n_sub) + 1;
    const double h = (cfg_.u_max - cfg_.u_floor) / cfg_.n_sub;
    nodes_.resize(n);
    weights_.resize(n);
    weights_over_u_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        nodes_[k] = cfg_.u_floor + static_cast<double>(k) * h;
        double w = (k == 0 || k == n - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        weights_[k] = w * h / 3.0;
        weights_over_u_[k] = weights_[k] / nodes_[k];
    }
}

std::complex<double> char_fn(double u, int j, const HestonParams& params,
                             const QuoteFeatures& features) {
    if (j != 1 && j != 2) throw InvalidArgument("characteristic function index must be 1 or 2");
    const cplx phase(0.0, u * (std::log(features.spot) + features.rate * features.maturity));
    return std::exp(log_cf_core(u, j, params, features.maturity) + phase);
}

double price_call(const QuoteFeatures& features, const HestonParams& params,
                  const Quadrature& quad) {
    return price_calls(std::span(&features, 1), params, quad).front();
}

std::vector<double> price_calls(std::span<const QuoteFeatures> features,
                                const HestonParams& params, const Quadrature& quad, int threads) {
    params.validate();
    for (const auto& f : features) f.validate();
    std::vector<double> out(features.size());
    const auto runs = maturity_runs(features);
    detail::parallel_for(runs.size(), threads, [&](std::size_t rb, std::size_t re) {
        CoreTable core;
        IntegrandTable table;
        std::vector<double> c, s;
        for (std::size_t r = rb; r < re; ++r) {
            const auto [begin, end] = runs[r];
            const double maturity = features[begin].maturity;
            fill_core(core, maturity, params, quad);
            fill_table(table, core, params, quad, maturity);
            for (std::size_t i = begin; i < end; ++i) {
                fill_phases(c, s, features[i], quad);
                out[i] = price_from(table, features[i], c, s);
            }
        }
    });
    return out;
}

Vec5 fd_steps(const HestonParams& params, const FdPolicy& fd) {
    params.validate();
    fd.validate();
    const Vec5 theta = params.to_vec();
    Vec5 h;
    for (int k = 0; k < kNumParams; ++k) {
        double step = std::max(fd.rel_step * std::abs(theta[k]), fd.abs_step);
        while (true) {
            Vec5 up = theta, down = theta;
            up[k] += step;
            down[k] -= step;
            if (in_domain(up) && in_domain(down)) break;
            step /= fd.shrink;
            if (step < fd.min_step) {
                throw BumpError("finite-difference bump for parameter " + std::to_string(k) +
                                " cannot stay inside the parameter domain");
            }
        }
        h[k] = step;
    }
    return h;
}

Vec5 price_jacobian(const QuoteFeatures& features, const HestonParams& params,
                    const Quadrature& quad, const FdPolicy& fd) {
    return price_with_jacobians(std::span(&features, 1), params, quad, fd).jacobians.front();
}

PricesAndJacobians price_with_jacobians(std::span<const QuoteFeatures> features,
                                        const HestonParams& params, const Quadrature& quad,
                                        const FdPolicy& fd, int threads) {
    for (const auto& f : features) f.validate();
    const Vec5 h = fd_steps(params, fd);
    const Vec5 theta = params.to_vec();

    // 0: base point; 1 + 2k: theta + h_k e_k; 2 + 2k: theta - h_k e_k.
    constexpr int kSets = 1 + 2 * kNumParams;
    std::array<HestonParams, kSets> sets;
    sets[0] = params;
    for (int k = 0; k < kNumParams; ++k) {
        Vec5 up = theta, down = theta;
        up[k] += h[k];
        down[k] -= h[k];
        sets[1 + 2 * k] = HestonParams::from_vec(up);
        sets[2 + 2 * k] = HestonParams::from_vec(down);
    }

    PricesAndJacobians out;
    out.prices.resize(features.size());
    out.jacobians.resize(features.size());
    const auto runs = maturity_runs(features);
    detail::parallel_for(runs.size(), threads, [&](std::size_t rb, std::size_t re) {
        std::array<IntegrandTable, kSets> tables;
        CoreTable base_core, bumped_core;
        std::vector<double> c, s;
        for (std::size_t r = rb; r < re; ++r) {
            const auto [begin, end] = runs[r];
            const double maturity = features[begin].maturity;
            for (int t = 0; t < kSets; ++t) {
                // theta_v and v0 (indices 1 and 4) enter only after the core terms
                const bool shares_base_core = t > 0 && ((t - 1) / 2 == 1 || (t - 1) / 2 == 4);
                CoreTable& core = (t == 0 || shares_base_core) ? base_core : bumped_core;
                if (!shares_base_core) fill_core(core, maturity, sets[t], quad);
                fill_table(tables[t], core, sets[t], quad, maturity);
            }
            for (std::size_t i = begin; i < end; ++i) {
                fill_phases(c, s, features[i], quad);
                out.prices[i] = price_from(tables[0], features[i], c, s);
                Vec5 jac;
                for (int k = 0; k < kNumParams; ++k) {
                    const double up = price_from(tables[1 + 2 * k], features[i], c, s);
                    const double down = price_from(tables[2 + 2 * k], features[i], c, s);
                    jac[k] = (up - down) / (2.0 * h[k]);
                }
                out.jacobians[i] = jac;
            }
        }
    });
    return out;
}

double black_scholes_call(double spot, double strike, double maturity, double rate, double vol) {
    const double sd = vol * std::sqrt(maturity);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sd;
    const double d2 = d1 - sd;
    const auto ncdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
    return spot * ncdf(d1) - strike * std::exp(-rate * maturity) * ncdf(d2);
}

}  // namespace hforget
