#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "hforget/errors.hpp"
#include "hforget/market_sim.hpp"
#include "test_support.hpp"

using namespace hforget;
using namespace hforget::testing;

TEST(Configs, QuoteAndShardCounts) {
    const auto& small = small_experiment().quotes;
    EXPECT_EQ(small.size(), 540u);
    std::set<ShardId> shards;
    for (const auto& q : small) shards.insert(q.shard_id);
    EXPECT_EQ(shards.size(), 9u);

    const auto large = simulate_dataset(ExperimentConfig::large());
    EXPECT_EQ(large.size(), 2700u);
    shards.clear();
    for (const auto& q : large) shards.insert(q.shard_id);
    EXPECT_EQ(shards.size(), 6u);
}

TEST(GaussianStream, Moments) {
    GaussianStream g(1);
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = g.next();
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(GaussianStream, SameSeedSameStream) {
    GaussianStream a(77), b(77), c(78);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.next();
        EXPECT_EQ(x, b.next());
        differs |= x != c.next();
    }
    EXPECT_TRUE(differs);
}

TEST(CorrelatedShocks, SampleCorrelation) {
    GaussianStream g(3);
    const int n = 100000;
    double sv = 0, ss = 0, svv = 0, sss = 0, svs = 0;
    for (int i = 0; i < n; ++i) {
        const auto z = correlated_shocks(g, -0.6);
        sv += z.z_v;
        ss += z.z_s;
        svv += z.z_v * z.z_v;
        sss += z.z_s * z.z_s;
        svs += z.z_v * z.z_s;
    }
    const double cov = svs / n - sv / n * ss / n;
    const double corr = cov / std::sqrt((svv / n - sv * sv / n / n) * (sss / n - ss * ss / n / n));
    EXPECT_NEAR(corr, -0.6, 0.02);
}

TEST(SimulatePath, DeterministicAndInDomain) {
    const PathConfig cfg{252, 1.0 / 252, 100.0, 0.01, 5};
    const HestonParams p{2.0, 0.06, 0.9, -0.6, 0.06};  // Feller violated on purpose
    const auto a = simulate_path(cfg, p);
    const auto b = simulate_path(cfg, p);
    ASSERT_EQ(a.size(), 253u);
    EXPECT_EQ(a[0].spot, 100.0);
    EXPECT_EQ(a[0].variance, 0.06);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].spot, b[i].spot);
        EXPECT_EQ(a[i].variance, b[i].variance);
        EXPECT_GT(a[i].spot, 0.0);
        EXPECT_GE(a[i].variance, 0.0);
        EXPECT_TRUE(std::isfinite(a[i].spot));
    }
}

TEST(SimulatePath, NearZeroVolOfVolFollowsDriftRecursion) {
    const PathConfig cfg{120, 1.0 / 252, 100.0, 0.01, 9};
    const HestonParams p{3.0, 0.05, 1e-12, -0.5, 0.09};
    const auto path = simulate_path(cfg, p);
    double v = p.v0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        v += p.kappa * (p.theta_v - v) * cfg.dt;
        EXPECT_NEAR(path[i].variance, v, 1e-12) << i;
    }
}

TEST(SimulatePath, MeanVarianceMatchesEulerExpectation) {
    // Without truncation, E[v_{n+1}] = v_n + kappa (theta - v_n) dt exactly.
    const HestonParams p{2.0, 0.04, 0.2, -0.6, 0.09};
    PathConfig cfg{60, 1.0 / 252, 100.0, 0.01, 0};
    const int n_paths = 4000;
    std::vector<double> sum(61, 0.0), sum2(61, 0.0);
    for (int k = 0; k < n_paths; ++k) {
        cfg.seed = 1000 + k;
        const auto path = simulate_path(cfg, p);
        for (std::size_t i = 0; i < path.size(); ++i) {
            sum[i] += path[i].variance;
            sum2[i] += path[i].variance * path[i].variance;
        }
    }
    for (int i : {10, 30, 60}) {
        const double expected = p.theta_v + (p.v0 - p.theta_v) * std::pow(1.0 - p.kappa * cfg.dt, i);
        const double m = sum[i] / n_paths;
        const double se = std::sqrt((sum2[i] / n_paths - m * m) / (n_paths - 1));
        EXPECT_NEAR(m, expected, 4.0 * se) << i;
    }
}

TEST(SimulatePath, RejectsBadConfig) {
    const HestonParams p{2.0, 0.06, 0.3, -0.6, 0.06};
    EXPECT_THROW(simulate_path(PathConfig{0, 1.0 / 252, 100.0, 0.01, 1}, p), InvalidArgument);
    EXPECT_THROW(simulate_path(PathConfig{10, -1.0, 100.0, 0.01, 1}, p), InvalidArgument);
    EXPECT_THROW(simulate_path(PathConfig{10, 1.0 / 252, 0.0, 0.01, 1}, p), InvalidArgument);
    EXPECT_THROW(simulate_path(PathConfig{10, 1.0 / 252, 100.0, 0.01, 1}, HestonParams{2.0, 0.06, 0.3, -1.5, 0.06}),
                 InvalidArgument);
}

TEST(BuildQuotes, LexicographicIdsAndFeatures) {
    const auto& e = small_experiment();
    const auto& q = e.quotes;
    const auto& g = e.config.grid;
    std::size_t i = 0;
    for (int d = 0; d < e.config.path.days; ++d) {
        for (int m : g.maturities_days) {
            for (double k : g.strikes) {
                ASSERT_LT(i, q.size());
                EXPECT_EQ(q[i].quote_id, static_cast<QuoteId>(i));
                EXPECT_EQ(q[i].day_index, d);
                EXPECT_EQ(q[i].features.strike, k);
                EXPECT_EQ(q[i].features.maturity, m / kTradingDaysPerYear);
                EXPECT_EQ(q[i].shard_id, d / e.config.shard_days);
                EXPECT_EQ(q[i].weight, 1.0);
                ++i;
            }
        }
    }
    EXPECT_EQ(i, q.size());
}

TEST(BuildQuotes, NoiseHasConfiguredScale) {
    const auto& e = small_experiment();
    const auto clean = noiseless_small(e.config.theta_true);
    ASSERT_EQ(clean.size(), e.quotes.size());
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        EXPECT_EQ(clean[i].features, e.quotes[i].features);
        const double eps = e.quotes[i].y - clean[i].y;
        s += eps;
        s2 += eps * eps;
    }
    const double n = static_cast<double>(clean.size());
    const double sd = std::sqrt(s2 / n - s * s / n / n);
    // Sample std of n normals has relative standard error about 1/sqrt(2n).
    EXPECT_NEAR(sd / e.config.grid.noise_sigma, 1.0, 4.0 / std::sqrt(2.0 * n));
    EXPECT_NEAR(s / n, 0.0, 4.0 * e.config.grid.noise_sigma / std::sqrt(n));
}

TEST(BuildQuotes, RejectsBadGrid) {
    const std::vector<PathPoint> path{{100, 0.04}, {101, 0.04}};
    const HestonParams p{2.0, 0.06, 0.3, -0.6, 0.06};
    const Quadrature quad(QuadratureConfig::small());
    EXPECT_THROW(build_quotes(path, GridConfig{{}, {100.0}, 0.0}, 0.01, p, quad, 1), InvalidArgument);
    EXPECT_THROW(build_quotes(path, GridConfig{{0}, {100.0}, 0.0}, 0.01, p, quad, 1), InvalidArgument);
    EXPECT_THROW(build_quotes(path, GridConfig{{30}, {-1.0}, 0.0}, 0.01, p, quad, 1), InvalidArgument);
    EXPECT_THROW(build_quotes(path, GridConfig{{30}, {100.0}, -1.0}, 0.01, p, quad, 1), InvalidArgument);
    EXPECT_THROW(build_quotes(std::span(path).first(1), GridConfig{{30}, {100.0}, 0.0}, 0.01, p, quad, 1),
                 InvalidArgument);
}

TEST(ShardByTime, PartitionsQuotes) {
    for (int shard_days : {1, 7, 10, 90, 1000}) {
        const auto q = shard_by_time(small_experiment().quotes, shard_days);
        for (std::size_t i = 0; i < q.size(); ++i) {
            EXPECT_EQ(q[i].shard_id, q[i].day_index / shard_days);
            if (i > 0) {
                EXPECT_GE(q[i].shard_id, q[i - 1].shard_id);
            }
        }
    }
    EXPECT_THROW(shard_by_time({}, 0), InvalidArgument);
}

TEST(RetainedQuotes, ComplementOfForgetSet) {
    const auto& q = small_experiment().quotes;
    const std::vector<QuoteId> ids{0, 5, 17, 539};
    const auto kept = retained_quotes(q, ids);
    EXPECT_EQ(kept.size(), q.size() - ids.size());
    for (const auto& k : kept) EXPECT_FALSE(std::binary_search(ids.begin(), ids.end(), k.quote_id));
}

TEST(QuoteCsv, RoundTripIsExact) {
    const auto& q = small_experiment().quotes;
    const std::string csv = quotes_to_csv(q);
    EXPECT_EQ(csv.substr(0, kQuoteCsvHeader.size()), kQuoteCsvHeader);
    std::istringstream in(csv);
    const auto back = read_quotes_csv(in);
    EXPECT_EQ(back, q);
    EXPECT_EQ(quotes_to_csv(back), csv);
    EXPECT_EQ(dataset_hash(back), dataset_hash(q));
}

TEST(QuoteCsv, RejectsMalformedInput) {
    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return read_quotes_csv(in);
    };
    const std::string h = std::string(kQuoteCsvHeader) + "\n";
    EXPECT_THROW(parse(""), CorruptFile);
    EXPECT_THROW(parse("a,b,c\n"), CorruptFile);
    EXPECT_THROW(parse(h + "0,0,0,100,100,0.1,0.01,1.5\n"), CorruptFile);
    EXPECT_THROW(parse(h + "0,0,0,100,100,0.1,0.01,abc,1\n"), CorruptFile);
    EXPECT_THROW(parse(h + "0,0,0,100,100,0.1,0.01,nan,1\n"), CorruptFile);
    EXPECT_THROW(parse(h + "0,0,0,100,100,0.1,0.01,1.5,-1\n"), CorruptFile);
    EXPECT_THROW(parse(h + "0,0,0,100,100,0.1,0.01,1.5,1\n0,1,0,100,100,0.1,0.01,1.5,1\n"), CorruptFile);
    EXPECT_EQ(parse(h + "0,0,0,100,100,0.1,0.01,1.5,1\n").size(), 1u);
    EXPECT_THROW(load_quotes_csv("/nonexistent/quotes.csv"), IoError);
}

TEST(DatasetHash, SensitiveToEveryField) {
    const auto& q = small_experiment().quotes;
    const std::string h0 = dataset_hash(q);
    EXPECT_EQ(h0.size(), 64u);
    auto bumped = q;
    bumped[100].y = std::nextafter(bumped[100].y, 1e9);
    EXPECT_NE(dataset_hash(bumped), h0);
    bumped = q;
    bumped[3].weight = 0.5;
    EXPECT_NE(dataset_hash(bumped), h0);
    bumped = q;
    bumped[7].shard_id += 1;
    EXPECT_NE(dataset_hash(bumped), h0);
}

TEST(DatasetHash, KnownEmptyValue) {
    // SHA-256 of the header line plus newline, computed with an independent tool.
    EXPECT_EQ(dataset_hash(std::vector<Quote>{}),
              "ad036ef003ea3a53c89663ad12fc795d8d1a8946d9cf48841ac4945e1094b35a");
}

TEST(DatasetMeta, JsonRoundTrip) {
    const auto& m = small_experiment().meta;
    EXPECT_EQ(m.n_quotes, 540u);
    EXPECT_EQ(m.dataset_hash, dataset_hash(small_experiment().quotes));
    EXPECT_EQ(m.rng_algorithm, kRngAlgorithm);
    const auto j = to_json(m);
    EXPECT_EQ(to_json(dataset_meta_from_json(j)), j);
    EXPECT_EQ(params_from_json(params_to_json(m.theta_true)), m.theta_true);
}

TEST(SimulateDataset, DeterministicPerSeed) {
    const auto a = simulate_dataset(ExperimentConfig::small(42));
    EXPECT_EQ(a, small_experiment().quotes);
    const auto b = simulate_dataset(ExperimentConfig::small(43));
    EXPECT_NE(dataset_hash(a), dataset_hash(b));
    EXPECT_EQ(simulate_dataset(ExperimentConfig::small(42), nullptr, 4), a);
}
