#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hforget/calibration.hpp"
#include "hforget/pricing.hpp"

namespace hforget {

inline constexpr std::uint32_t kCacheFormatVersion = 1;

struct CacheMetadata {
    std::string dataset_hash;
    QuadratureConfig quad;
    FdPolicy fd;
};

/// Sufficient statistics at a fixed reference point. Holds no quote features or
/// prices; everything a data-free forgetting request needs.
struct UnlearnCache {
    HestonParams theta_ref;
    double lambda_ridge = 1e-6;
    GnAggregates global;
    std::map<ShardId, GnAggregates> per_shard;
    std::vector<QuoteStats> per_quote;  // strictly ascending quote_id
    CacheMetadata meta;

    /// Position of id in per_quote, or nullopt.
    std::optional<std::size_t> find(QuoteId id) const;
    const QuoteStats& stats(QuoteId id) const;  // throws UnknownQuoteId
};

UnlearnCache build_cache(std::span<const Quote> quotes, const HestonParams& theta_ref,
                         double lambda_ridge, const Quadrature& quad, const FdPolicy& fd,
                         int threads = 1);

/// Same as build_cache, from an assembly already computed at theta_ref.
UnlearnCache cache_from_assembly(const Assembly& assembly, const HestonParams& theta_ref,
                                 double lambda_ridge, CacheMetadata meta);

// Binary layout (little-endian): magic "HFGCACHE", u32 version, u64 header length,
// header JSON, payload of doubles, CRC-32 trailer over all preceding bytes.
std::string serialize_cache(const UnlearnCache& cache);
UnlearnCache deserialize_cache(std::string_view bytes);
void save_cache(const UnlearnCache& cache, const std::string& path);
UnlearnCache load_cache(const std::string& path);

nlohmann::json cache_header_json(const UnlearnCache& cache);

/// Downdate: H - sum_{i in F} psi_i, G - sum_{i in F} u_i, subtracting in ascending
/// id order. forget_ids must be sorted and unique. Throws UnknownQuoteId.
GnAggregates subtract_quotes(const UnlearnCache& cache, std::span<const QuoteId> forget_ids);

}  // namespace hforget
