#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <type_traits>

#include "hforget/errors.hpp"
#include "hforget/unlearn_cache.hpp"
#include "test_support.hpp"

using namespace hforget;
using namespace hforget::testing;

namespace {

const UnlearnCache& cache() { return small_experiment().cache; }
const std::vector<Quote>& quotes() { return small_experiment().quotes; }

void expect_same_cache(const UnlearnCache& a, const UnlearnCache& b) {
    EXPECT_EQ(a.theta_ref, b.theta_ref);
    EXPECT_EQ(a.lambda_ridge, b.lambda_ridge);
    EXPECT_EQ(a.global.H, b.global.H);
    EXPECT_EQ(a.global.G, b.global.G);
    EXPECT_EQ(a.global.n_quotes, b.global.n_quotes);
    ASSERT_EQ(a.per_shard.size(), b.per_shard.size());
    for (const auto& [id, agg] : a.per_shard) {
        EXPECT_EQ(agg.H, b.per_shard.at(id).H);
        EXPECT_EQ(agg.G, b.per_shard.at(id).G);
    }
    ASSERT_EQ(a.per_quote.size(), b.per_quote.size());
    for (std::size_t i = 0; i < a.per_quote.size(); ++i) {
        EXPECT_EQ(a.per_quote[i].quote_id, b.per_quote[i].quote_id);
        EXPECT_EQ(a.per_quote[i].shard_id, b.per_quote[i].shard_id);
        EXPECT_EQ(a.per_quote[i].u, b.per_quote[i].u);
        EXPECT_EQ(a.per_quote[i].psi, b.per_quote[i].psi);
    }
    EXPECT_EQ(a.meta.dataset_hash, b.meta.dataset_hash);
    EXPECT_EQ(a.meta.quad, b.meta.quad);
    EXPECT_EQ(a.meta.fd, b.meta.fd);
}

}  // namespace

TEST(BuildCache, EmptyDataset) {
    const UnlearnCache c = build_cache(std::vector<Quote>{}, small_experiment().calibration.theta_star, 1e-6,
                                       Quadrature(QuadratureConfig::small()), FdPolicy{});
    EXPECT_EQ(c.global.H, Mat5::Zero());
    EXPECT_EQ(c.global.G, Vec5::Zero());
    EXPECT_TRUE(c.per_shard.empty());
    EXPECT_TRUE(c.per_quote.empty());
}

TEST(BuildCache, ConsistencyInvariants) {
    const auto& c = cache();
    EXPECT_EQ(c.per_shard.size(), 9u);
    ASSERT_EQ(c.per_quote.size(), quotes().size());
    for (std::size_t i = 0; i < c.per_quote.size(); ++i) EXPECT_EQ(c.per_quote[i].quote_id, quotes()[i].quote_id);

    GnAggregates shards, each;
    for (const auto& [id, agg] : c.per_shard) shards.add(agg);
    for (const auto& s : c.per_quote) each.add(s);
    EXPECT_LE(rel_frobenius(shards.H, c.global.H), 1e-12);
    // G nearly cancels at the calibrated point, so scale by the summed magnitudes.
    double g_scale = 0.0;
    for (const auto& s : c.per_quote) g_scale += s.u.norm();
    EXPECT_LE((shards.G - c.global.G).norm(), 1e-12 * g_scale);
    EXPECT_EQ(each.H, c.global.H);  // same order as the build, so bit-identical
    EXPECT_EQ(each.G, c.global.G);
    EXPECT_EQ(shards.n_quotes, quotes().size());
}

TEST(BuildCache, NearFirstOrderOptimalAtCalibratedPoint) {
    const auto& c = cache();
    EXPECT_LE(c.global.G.lpNorm<Eigen::Infinity>(), 1e-6 * c.global.H.norm());
}

TEST(CacheFile, RoundTripBitExact) {
    const std::string bytes = serialize_cache(cache());
    const UnlearnCache back = deserialize_cache(bytes);
    expect_same_cache(cache(), back);
    EXPECT_EQ(serialize_cache(back), bytes);

    const auto path = (std::filesystem::temp_directory_path() / "hforget_cache_test.bin").string();
    save_cache(cache(), path);
    expect_same_cache(cache(), load_cache(path));
    std::filesystem::remove(path);
}

TEST(CacheFile, RejectsTruncation) {
    const std::string bytes = serialize_cache(cache());
    for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() / 2,
                            bytes.size() - 1}) {
        EXPECT_THROW(deserialize_cache(std::string_view(bytes).substr(0, len)), CorruptFile) << len;
    }
}

TEST(CacheFile, RejectsFlippedByte) {
    std::string bytes = serialize_cache(cache());
    bytes[bytes.size() / 2] ^= 0x10;
    EXPECT_THROW(deserialize_cache(bytes), CorruptFile);
}

TEST(CacheFile, RejectsBadMagic) {
    std::string bytes = serialize_cache(cache());
    bytes[0] = 'X';
    EXPECT_THROW(deserialize_cache(bytes), CorruptFile);
}

TEST(CacheFile, RejectsOtherVersion) {
    std::string bytes = serialize_cache(cache());
    bytes[8] = static_cast<char>(kCacheFormatVersion + 1);  // u32 right after the 8 magic bytes
    EXPECT_THROW(deserialize_cache(bytes), VersionMismatch);
}

TEST(CacheFile, MissingFileIsIoError) {
    EXPECT_THROW(load_cache("/nonexistent/dir/cache.bin"), IoError);
}

TEST(CacheFile, HoldsNoRawQuoteValues) {
    // No S, K, T, r or y double appears in the file's bytes.
    const std::string bytes = serialize_cache(cache());
    auto contains = [&](double v) {
        char raw[8];
        std::memcpy(raw, &v, 8);
        return bytes.find(std::string_view(raw, 8)) != std::string::npos;
    };
    std::size_t hits = 0;
    for (const auto& q : quotes()) {
        hits += contains(q.y) + contains(q.features.spot);
    }
    EXPECT_EQ(hits, 0u);
    const auto header = cache_header_json(cache());
    for (const char* key : {"quotes", "y", "spot", "strike", "maturity", "rate"}) EXPECT_FALSE(header.contains(key));
}

TEST(SubtractQuotes, EmptyIsIdentity) {
    const GnAggregates g = subtract_quotes(cache(), std::vector<QuoteId>{});
    EXPECT_EQ(g.H, cache().global.H);
    EXPECT_EQ(g.G, cache().global.G);
}

TEST(SubtractQuotes, EverythingCancels) {
    std::vector<QuoteId> all;
    for (const auto& s : cache().per_quote) all.push_back(s.quote_id);
    const GnAggregates g = subtract_quotes(cache(), all);
    EXPECT_LE(g.H.norm(), 1e-10 * cache().global.H.norm());
    EXPECT_LE(g.G.norm(), 1e-10 * cache().global.H.norm());
    EXPECT_EQ(g.n_quotes, 0u);
}

TEST(SubtractQuotes, Errors) {
    EXPECT_THROW(subtract_quotes(cache(), std::vector<QuoteId>{3, 1}), InvalidArgument);
    EXPECT_THROW(subtract_quotes(cache(), std::vector<QuoteId>{1, 1}), InvalidArgument);
    try {
        subtract_quotes(cache(), std::vector<QuoteId>{1, 100000});
        FAIL() << "expected UnknownQuoteId";
    } catch (const UnknownQuoteId& e) {
        EXPECT_EQ(e.id(), 100000);
    }
}

TEST(SubtractQuotes, MatchesDirectReassembly) {
    const Quadrature quad(cache().meta.quad);
    std::mt19937_64 rng(21);
    int trial = 0;
    for (double f : {0.01, 0.05, 0.25}) {
        for (int rep = 0; rep < 4; ++rep, ++trial) {
            const auto ids = sample_ids(quotes(), forget_count(f, quotes().size()), rng());
            const GnAggregates down = subtract_quotes(cache(), ids);
            const auto kept = retained_quotes(quotes(), ids);
            const GnAggregates direct = assemble(kept, cache().theta_ref, quad, cache().meta.fd).aggregates;
            EXPECT_LE(rel_frobenius(down.H, direct.H), 1e-12) << "f=" << f;
            EXPECT_LE(rel_norm(down.G, direct.G), 1e-12) << "f=" << f;
            EXPECT_EQ(down.n_quotes, kept.size());
        }
    }
}

TEST(UnlearnCache, FindAndStats) {
    EXPECT_EQ(cache().find(0), std::optional<std::size_t>(0));
    EXPECT_EQ(cache().find(539), std::optional<std::size_t>(539));
    EXPECT_FALSE(cache().find(-1));
    EXPECT_THROW(cache().stats(540), UnknownQuoteId);
}
