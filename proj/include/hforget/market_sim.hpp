#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hforget/pricing.hpp"
#include "hforget/types.hpp"

namespace hforget {

inline constexpr double kTradingDaysPerYear = 252.0;

/// Name recorded in dataset metadata: 64-bit Mersenne Twister, top 53 bits per
/// uniform, Box-Muller pairs for normals.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64/u53/box-muller";

struct PathConfig {
    int days = 90;
    double dt = 1.0 / kTradingDaysPerYear;
    double s0 = 100.0;
    double rate = 0.01;
    std::uint64_t seed = 42;

    void validate() const;
};

struct PathPoint {
    double spot = 0.0;
    double variance = 0.0;  // max(v, 0) of the full-truncation state
};

struct GridConfig {
    std::vector<int> maturities_days;
    std::vector<double> strikes;  // absolute levels
    double noise_sigma = 0.0;

    void validate() const;
};

struct Quote {
    QuoteId quote_id = 0;
    std::int64_t day_index = 0;
    QuoteFeatures features;
    double y = 0.0;
    ShardId shard_id = 0;
    double weight = 1.0;

    friend bool operator==(const Quote&, const Quote&) = default;
};

/// Standard normal draws from mt19937_64 via Box-Muller.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}
    double next();

private:
    double uniform53();

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct ShockPair {
    double z_v = 0.0;
    double z_s = 0.0;
};

/// Z_s = rho Z_v + sqrt(1 - rho^2) Z_perp.
ShockPair correlated_shocks(GaussianStream& rng, double rho);

/// Euler-Maruyama with full truncation for v and log-Euler for S; returns days + 1 points.
std::vector<PathPoint> simulate_path(const PathConfig& cfg, const HestonParams& params);

/// One quote per (day, maturity, strike) for days 0..path.size()-2, quote ids in
/// that lexicographic order. y = model price + N(0, noise_sigma^2).
std::vector<Quote> build_quotes(std::span<const PathPoint> path, const GridConfig& grid,
                                double rate, const HestonParams& params_true,
                                const Quadrature& quad, std::uint64_t noise_seed,
                                int threads = 1);

/// shard_id = day_index / shard_days.
std::vector<Quote> shard_by_time(std::vector<Quote> quotes, int shard_days);

std::vector<Quote> retained_quotes(std::span<const Quote> quotes,
                                   std::span<const QuoteId> forget_ids_sorted);

std::vector<QuoteFeatures> features_of(std::span<const Quote> quotes);

// Quote dataset CSV: quote_id,day_index,shard_id,S,K,T_years,r,y,weight with
// shortest round-trip decimal doubles.
inline constexpr std::string_view kQuoteCsvHeader = "quote_id,day_index,shard_id,S,K,T_years,r,y,weight";

void write_quotes_csv(std::ostream& os, std::span<const Quote> quotes);
std::string quotes_to_csv(std::span<const Quote> quotes);
std::vector<Quote> read_quotes_csv(std::istream& is);
void save_quotes_csv(const std::string& path, std::span<const Quote> quotes);
std::vector<Quote> load_quotes_csv(const std::string& path);

/// SHA-256 (hex) of the canonical CSV encoding.
std::string dataset_hash(std::span<const Quote> quotes);

struct DatasetMeta {
    PathConfig path;
    GridConfig grid;
    QuadratureConfig quad;
    HestonParams theta_true;
    std::uint64_t noise_seed = 0;
    int shard_days = 1;
    std::string rng_algorithm{kRngAlgorithm};
    std::string dataset_hash;
    std::size_t n_quotes = 0;
    std::size_t n_negative_y = 0;
};

nlohmann::json to_json(const DatasetMeta& meta);
DatasetMeta dataset_meta_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const HestonParams& p);
HestonParams params_from_json(const nlohmann::json& j);

}  // namespace hforget
