#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "hforget/bench.hpp"

namespace hforget::testing {

// One calibrated small experiment per test binary; LM on it takes a few seconds.
inline const Experiment& small_experiment() {
    static const Experiment e = run_experiment(ExperimentConfig::small());
    return e;
}

// Small-config quotes without noise, generated at theta.
inline std::vector<Quote> noiseless_small(const HestonParams& theta) {
    ExperimentConfig c = ExperimentConfig::small();
    c.grid.noise_sigma = 0.0;
    c.theta_true = theta;
    return simulate_dataset(c);
}

inline double rel_frobenius(const Mat5& a, const Mat5& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline double rel_norm(const Vec5& a, const Vec5& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// Textbook Heston characteristic function (original 1993 algebra, principal-branch
// log). Agrees with the stable form whenever no branch cut is crossed, which holds
// for short maturities.
inline std::complex<double> textbook_char_fn(double u, int j, const HestonParams& p, const QuoteFeatures& x) {
    using cd = std::complex<double>;
    const cd i(0.0, 1.0);
    const double uj = j == 1 ? 0.5 : -0.5;
    const double bj = j == 1 ? p.kappa - p.rho * p.sigma_v : p.kappa;
    const double s2 = p.sigma_v * p.sigma_v;
    const cd beta = bj - p.rho * p.sigma_v * u * i;
    const cd d = std::sqrt(beta * beta - s2 * (2.0 * uj * u * i - u * u));
    const cd g = (beta + d) / (beta - d);
    const cd e = std::exp(d * x.maturity);
    const cd c = x.rate * u * i * x.maturity +
                 p.kappa * p.theta_v / s2 * ((beta + d) * x.maturity - 2.0 * std::log((1.0 - g * e) / (1.0 - g)));
    const cd dd = (beta + d) / s2 * (1.0 - e) / (1.0 - g * e);
    return std::exp(c + dd * p.v0 + i * u * std::log(x.spot));
}

// Plain Monte Carlo under the model: full-truncation Euler variance, log-Euler
// spot, independent std::normal_distribution draws.
struct McResult {
    std::vector<double> mean;  // per observation time and strike, discounted payoff
    std::vector<double> se;
    double mean_log_s = 0.0;   // E[ln S_T] at the last observation time
    double se_log_s = 0.0;
};

inline McResult mc_calls(const HestonParams& p, double s0, double r, const std::vector<int>& obs_steps,
                         const std::vector<double>& strikes, double dt, int n_paths, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    const std::size_t n_cells = obs_steps.size() * strikes.size();
    std::vector<double> sum(n_cells, 0.0), sum2(n_cells, 0.0);
    double sl = 0.0, sl2 = 0.0;
    const int last = obs_steps.back();
    const double sq = std::sqrt(dt), rc = std::sqrt(1.0 - p.rho * p.rho);
    for (int path = 0; path < n_paths; ++path) {
        double log_s = std::log(s0), v = p.v0;
        std::size_t next_obs = 0;
        for (int step = 1; step <= last; ++step) {
            const double zv = n01(rng);
            const double zs = p.rho * zv + rc * n01(rng);
            const double vp = std::max(v, 0.0);
            log_s += (r - 0.5 * vp) * dt + std::sqrt(vp) * sq * zs;
            v += p.kappa * (p.theta_v - vp) * dt + p.sigma_v * std::sqrt(vp) * sq * zv;
            if (step == obs_steps[next_obs]) {
                const double s = std::exp(log_s);
                const double disc = std::exp(-r * step * dt);
                for (std::size_t k = 0; k < strikes.size(); ++k) {
                    const double pay = disc * std::max(s - strikes[k], 0.0);
                    sum[next_obs * strikes.size() + k] += pay;
                    sum2[next_obs * strikes.size() + k] += pay * pay;
                }
                ++next_obs;
            }
        }
        sl += log_s;
        sl2 += log_s * log_s;
    }
    McResult out;
    const double n = n_paths;
    for (std::size_t c = 0; c < n_cells; ++c) {
        const double m = sum[c] / n;
        out.mean.push_back(m);
        out.se.push_back(std::sqrt((sum2[c] / n - m * m) / (n - 1.0)));
    }
    out.mean_log_s = sl / n;
    out.se_log_s = std::sqrt((sl2 / n - out.mean_log_s * out.mean_log_s) / (n - 1.0));
    return out;
}

// Textbook Gaussian elimination with partial pivoting.
inline Vec5 gauss_solve(Mat5 a, Vec5 b) {
    for (int c = 0; c < kNumParams; ++c) {
        int piv = c;
        for (int r = c + 1; r < kNumParams; ++r) {
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        }
        a.row(c).swap(a.row(piv));
        std::swap(b[c], b[piv]);
        for (int r = c + 1; r < kNumParams; ++r) {
            const double f = a(r, c) / a(c, c);
            a.row(r) -= f * a.row(c);
            b[r] -= f * b[c];
        }
    }
    Vec5 x;
    for (int r = kNumParams - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < kNumParams; ++c) s -= a(r, c) * x[c];
        x[r] = s / a(r, r);
    }
    return x;
}

}  // namespace hforget::testing
