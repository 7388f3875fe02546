#include <gtest/gtest.h>

#include <random>

#include "hforget/errors.hpp"
#include "hforget/pricing.hpp"
#include "test_support.hpp"

using namespace hforget;
using hforget::testing::mc_calls;
using hforget::testing::textbook_char_fn;

namespace {

const HestonParams kTrue{2.0, 0.06, 0.30, -0.6, 0.06};

const Quadrature& large_quad() {
    static const Quadrature q(QuadratureConfig::large());
    return q;
}

QuoteFeatures atm(double t_days) { return {100.0, 100.0, t_days / 252.0, 0.01}; }

}  // namespace

TEST(HestonParams, Validity) {
    EXPECT_TRUE(kTrue.is_valid());
    EXPECT_FALSE((HestonParams{0.0, 0.06, 0.3, -0.6, 0.06}.is_valid()));
    EXPECT_FALSE((HestonParams{2.0, 0.06, 0.3, -1.0, 0.06}.is_valid()));
    EXPECT_FALSE((HestonParams{2.0, 0.06, 0.3, 0.5, -0.01}.is_valid()));
    EXPECT_THROW((HestonParams{2.0, 0.06, 0.0, 0.5, 0.06}.validate()), InvalidArgument);
    // Feller is not enforced: 2 kappa theta_v < sigma_v^2 is still valid.
    EXPECT_TRUE((HestonParams{0.5, 0.04, 0.9, 0.0, 0.04}.is_valid()));
}

TEST(QuadratureConfig, Validation) {
    EXPECT_THROW(Quadrature({120.0, 801, 1e-8}), InvalidArgument);
    EXPECT_THROW(Quadrature({120.0, 0, 1e-8}), InvalidArgument);
    EXPECT_THROW(Quadrature({1e-9, 800, 1e-8}), InvalidArgument);
    EXPECT_THROW(Quadrature({120.0, 800, 0.0}), InvalidArgument);
    const Quadrature q(QuadratureConfig::small());
    EXPECT_EQ(q.size(), 181u);
    EXPECT_DOUBLE_EQ(q.nodes().front(), 1e-8);
    EXPECT_DOUBLE_EQ(q.nodes().back(), 50.0);
    double total = 0.0;
    for (double w : q.weights()) total += w;
    EXPECT_NEAR(total, 50.0 - 1e-8, 1e-12);  // Simpson integrates 1 exactly
}

TEST(CharFn, OneAtZero) {
    for (int j : {1, 2}) {
        const auto phi = char_fn(0.0, j, kTrue, atm(30));
        EXPECT_EQ(phi.real(), 1.0);
        EXPECT_EQ(phi.imag(), 0.0);
    }
}

TEST(CharFn, ConjugateSymmetry) {
    for (int j : {1, 2}) {
        const auto a = char_fn(0.7, j, kTrue, atm(60));
        const auto b = char_fn(-0.7, j, kTrue, atm(60));
        EXPECT_NEAR(a.real(), b.real(), 1e-14);
        EXPECT_NEAR(a.imag(), -b.imag(), 1e-14);
    }
}

TEST(CharFn, ModulusAtMostOne) {
    for (double t : {1.0, 30.0, 90.0, 252.0 * 5}) {
        for (double u = 0.0; u <= 120.0; u += 0.37) {
            for (int j : {1, 2}) {
                // phi_2 is the characteristic function of ln S_T; phi_1 is under the
                // share measure, still a probability measure.
                EXPECT_LE(std::abs(char_fn(u, j, kTrue, atm(t))), 1.0 + 1e-12) << "u=" << u << " t=" << t;
            }
        }
    }
}

TEST(CharFn, MatchesTextbookFormAtShortMaturity) {
    const QuoteFeatures x{100.0, 100.0, 0.05, 0.01};
    for (int j : {1, 2}) {
        for (double u : {0.05, 0.5, 1.0, 3.0, 10.0, 25.0}) {
            const auto a = char_fn(u, j, kTrue, x);
            const auto b = textbook_char_fn(u, j, kTrue, x);
            EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(b))) << "j=" << j << " u=" << u;
        }
    }
}

TEST(CharFn, StableAtLongMaturity) {
    const QuoteFeatures x{100.0, 100.0, 10.0, 0.01};
    const HestonParams wild{0.5, 0.04, 1.5, -0.9, 0.04};
    for (double u = 0.01; u < 120.0; u += 0.5) {
        const auto phi = char_fn(u, 2, wild, x);
        EXPECT_TRUE(std::isfinite(phi.real()) && std::isfinite(phi.imag()));
    }
}

TEST(PriceCall, BlackScholesLimit) {
    const QuoteFeatures x{100.0, 100.0, 0.25, 0.01};
    const HestonParams flat{2.0, 0.04, 1e-6, 0.0, 0.04};
    EXPECT_NEAR(price_call(x, flat, large_quad()), black_scholes_call(100.0, 100.0, 0.25, 0.01, 0.2), 1e-5);
}

TEST(PriceCall, BlackScholesReferenceValue) {
    // Closed form by hand: d1 = (0.01 + 0.02)*0.25/(0.2*0.5) = 0.075, d2 = -0.025.
    EXPECT_NEAR(black_scholes_call(100.0, 100.0, 0.25, 0.01, 0.2), 4.1088700892, 1e-8);
}

TEST(PriceCall, MonotoneInStrike) {
    const double t = 30.0 / 252.0;
    const double c90 = price_call({100, 90, t, 0.01}, kTrue, large_quad());
    const double c100 = price_call({100, 100, t, 0.01}, kTrue, large_quad());
    const double c110 = price_call({100, 110, t, 0.01}, kTrue, large_quad());
    EXPECT_GT(c90, c100);
    EXPECT_GT(c100, c110);
}

TEST(PriceCall, NoArbitrageBoundsAndMonotonicityOnGrids) {
    for (double s : {85.0, 100.0, 118.0}) {
        for (int t : {30, 60, 90}) {
            double prev_k = std::numeric_limits<double>::infinity();
            for (double k : {80.0, 90.0, 100.0, 110.0, 120.0}) {
                const QuoteFeatures x{s, k, t / 252.0, 0.01};
                const double c = price_call(x, kTrue, large_quad());
                EXPECT_GE(c, std::max(s - k * std::exp(-0.01 * x.maturity), 0.0) - 1e-6);
                EXPECT_LE(c, s);
                EXPECT_LE(c, prev_k);
                prev_k = c;
                if (t > 30) {
                    const QuoteFeatures shorter{s, k, (t - 30) / 252.0, 0.01};
                    EXPECT_GE(c, price_call(shorter, kTrue, large_quad()));
                }
            }
        }
    }
}

TEST(PriceCall, QuadratureRefinement) {
    const Quadrature doubled({120.0, 1600, 1e-8});
    for (int t : {30, 60, 90}) {
        for (double k : {80.0, 90.0, 100.0, 110.0, 120.0}) {
            const QuoteFeatures x{100.0, k, t / 252.0, 0.01};
            EXPECT_LT(std::abs(price_call(x, kTrue, large_quad()) - price_call(x, kTrue, doubled)), 1e-8);
        }
    }
}

TEST(PriceCall, MonteCarloOracle) {
    const double dt = 1.0 / 1000.0;
    // 30 and 60 trading days, rounded to the MC step.
    const std::vector<int> steps{static_cast<int>(std::lround(30.0 / 252.0 / dt)),
                                 static_cast<int>(std::lround(60.0 / 252.0 / dt))};
    const std::vector<double> strikes{90.0, 100.0, 110.0};
    const auto mc = mc_calls(kTrue, 100.0, 0.01, steps, strikes, dt, 200000, 2024);
    for (std::size_t o = 0; o < steps.size(); ++o) {
        for (std::size_t k = 0; k < strikes.size(); ++k) {
            const double price = price_call({100.0, strikes[k], steps[o] * dt, 0.01}, kTrue, large_quad());
            const std::size_t c = o * strikes.size() + k;
            EXPECT_LE(std::abs(price - mc.mean[c]), 3.0 * mc.se[c])
                << "T steps " << steps[o] << " K " << strikes[k] << " mc " << mc.mean[c] << " se " << mc.se[c];
        }
    }
    // E[ln S_T] = phi_2'(0) / i, by central difference in u.
    const QuoteFeatures x{100.0, 100.0, steps.back() * dt, 0.01};
    const double h = 1e-4;
    const auto d = (char_fn(h, 2, kTrue, x) - char_fn(-h, 2, kTrue, x)) / (2.0 * h);
    EXPECT_LE(std::abs(d.imag() - mc.mean_log_s), 3.0 * mc.se_log_s);
}

TEST(PriceCall, RejectsInvalidInputs) {
    EXPECT_THROW(price_call({100, -1, 0.1, 0.01}, kTrue, large_quad()), InvalidArgument);
    EXPECT_THROW(price_call({100, 100, 0.0, 0.01}, kTrue, large_quad()), InvalidArgument);
    EXPECT_THROW(price_call(atm(30), HestonParams{}, large_quad()), InvalidArgument);
}

TEST(PriceCalls, BitIdenticalToSinglePricesAndThreadCount) {
    std::vector<QuoteFeatures> xs;
    for (double s : {95.0, 101.0}) {
        for (int t : {30, 60}) {
            for (double k : {90.0, 100.0, 110.0}) xs.push_back({s, k, t / 252.0, 0.01});
        }
    }
    xs.push_back(xs.front());  // a maturity run broken and restarted
    const auto batch = price_calls(xs, kTrue, large_quad());
    const auto threaded = price_calls(xs, kTrue, large_quad(), 3);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_EQ(batch[i], price_call(xs[i], kTrue, large_quad()));
        EXPECT_EQ(batch[i], threaded[i]);
    }
}

TEST(FdSteps, DefaultAndNearBounds) {
    const FdPolicy fd;
    const Vec5 h = fd_steps(kTrue, fd);
    EXPECT_DOUBLE_EQ(h[0], 2e-5);
    EXPECT_DOUBLE_EQ(h[3], 6e-6);
    HestonParams near = kTrue;
    near.rho = 1.0 - 3e-6;  // 1e-5 * |rho| does not fit; halves until it does
    const Vec5 hn = fd_steps(near, fd);
    EXPECT_LT(hn[3], 3e-6);
    EXPECT_GT(hn[3], 0.5 * 3e-6 / 2.0);
    near.rho = 1.0 - 1e-12;
    EXPECT_THROW(fd_steps(near, fd), BumpError);
}

TEST(PriceJacobian, VegaLikePositivity) {
    const Vec5 j = price_jacobian(atm(60), kTrue, large_quad(), FdPolicy{});
    EXPECT_GT(j[4], 0.0);
}

TEST(PriceJacobian, MatchesBatchJacobians) {
    std::vector<QuoteFeatures> xs{atm(30), {100, 110, 60 / 252.0, 0.01}, {97, 90, 60 / 252.0, 0.01}};
    const auto pj = price_with_jacobians(xs, kTrue, large_quad(), FdPolicy{});
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_EQ(pj.prices[i], price_call(xs[i], kTrue, large_quad()));
        const Vec5 single = price_jacobian(xs[i], kTrue, large_quad(), FdPolicy{});
        for (int k = 0; k < kNumParams; ++k) EXPECT_EQ(pj.jacobians[i][k], single[k]);
    }
}

TEST(PriceJacobian, DirectionalDerivative) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    const QuoteFeatures x{100.0, 105.0, 60 / 252.0, 0.01};
    const Vec5 j = price_jacobian(x, kTrue, large_quad(), FdPolicy{});
    for (int trial = 0; trial < 5; ++trial) {
        Vec5 d;
        for (int k = 0; k < kNumParams; ++k) d[k] = n01(rng);
        d.normalize();
        const double h = 1e-5;
        const double up = price_call(x, HestonParams::from_vec(kTrue.to_vec() + h * d), large_quad());
        const double dn = price_call(x, HestonParams::from_vec(kTrue.to_vec() - h * d), large_quad());
        const double fd = (up - dn) / (2.0 * h);
        EXPECT_NEAR(fd, j.dot(d), 1e-6 * std::max(std::abs(fd), 1.0));
    }
}

TEST(PriceJacobian, RichardsonOrder) {
    // Central differences converge at O(h^2): successive differences of J(h), J(h/2),
    // J(h/4) shrink by about 4. Steps are large enough that rounding stays negligible.
    const QuoteFeatures x{100.0, 100.0, 60 / 252.0, 0.01};
    auto jac = [&](double rel) { return price_jacobian(x, kTrue, large_quad(), FdPolicy{rel, 1e-7, 1e-9, 2.0}); };
    const Vec5 j1 = jac(4e-2), j2 = jac(2e-2), j3 = jac(1e-2);
    for (int k = 0; k < kNumParams; ++k) {
        const double ratio = (j1[k] - j2[k]) / (j2[k] - j3[k]);
        EXPECT_NEAR(ratio, 4.0, 0.8) << "parameter " << k;
    }
}
