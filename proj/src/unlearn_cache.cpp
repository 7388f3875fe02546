#include "hforget/unlearn_cache.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <zlib.h>

#include "hforget/errors.hpp"
#include "hforget/io.hpp"

namespace hforget {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'G', 'C', 'A', 'C', 'H', 'E'};

class Writer {
public:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void aggregates(const GnAggregates& a) {
        u64(a.n_quotes);
        for (double x : pack_upper(a.H)) f64(x);
        for (int k = 0; k < kNumParams; ++k) f64(a.G[k]);
    }

    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw CorruptFile("cache file truncated");
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }

    GnAggregates aggregates() {
        GnAggregates a;
        a.n_quotes = u64();
        SymPacked h{};
        for (double& x : h) x = f64();
        a.H = unpack_symmetric(h);
        for (int k = 0; k < kNumParams; ++k) a.G[k] = f64();
        return a;
    }

    std::size_t pos() const { return pos_; }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < data.size()) {
        const std::size_t n = std::min<std::size_t>(data.size() - off, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), static_cast<uInt>(n));
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::optional<std::size_t> UnlearnCache::find(QuoteId id) const {
    const auto it = std::lower_bound(per_quote.begin(), per_quote.end(), id,
                                     [](const QuoteStats& s, QuoteId v) { return s.quote_id < v; });
    if (it == per_quote.end() || it->quote_id != id) return std::nullopt;
    return static_cast<std::size_t>(it - per_quote.begin());
}

const QuoteStats& UnlearnCache::stats(QuoteId id) const {
    const auto idx = find(id);
    if (!idx) throw UnknownQuoteId(id);
    return per_quote[*idx];
}

UnlearnCache cache_from_assembly(const Assembly& assembly, const HestonParams& theta_ref,
                                 double lambda_ridge, CacheMetadata meta) {
    UnlearnCache cache;
    cache.theta_ref = theta_ref;
    cache.lambda_ridge = lambda_ridge;
    cache.meta = std::move(meta);
    cache.per_quote = assembly.stats;
    cache.global = assembly.aggregates;
    for (const auto& s : cache.per_quote) cache.per_shard[s.shard_id].add_upper(s);
    for (auto& [id, agg] : cache.per_shard) agg.symmetrize();
    return cache;
}

UnlearnCache build_cache(std::span<const Quote> quotes, const HestonParams& theta_ref,
                         double lambda_ridge, const Quadrature& quad, const FdPolicy& fd,
                         int threads) {
    if (!(lambda_ridge >= 0.0)) throw InvalidArgument("lambda_ridge must be >= 0");
    const Assembly assembly = assemble(quotes, theta_ref, quad, fd, threads);
    return cache_from_assembly(assembly, theta_ref, lambda_ridge,
                               {dataset_hash(quotes), quad.config(), fd});
}

nlohmann::json cache_header_json(const UnlearnCache& c) {
    return {{"format", "hforget-cache"},
            {"version", kCacheFormatVersion},
            {"dataset_hash", c.meta.dataset_hash},
            {"quadrature",
             {{"u_max", c.meta.quad.u_max}, {"n_sub", c.meta.quad.n_sub}, {"u_floor", c.meta.quad.u_floor}}},
            {"fd",
             {{"rel_step", c.meta.fd.rel_step},
              {"abs_step", c.meta.fd.abs_step},
              {"min_step", c.meta.fd.min_step},
              {"shrink", c.meta.fd.shrink}}},
            {"n_quotes", c.per_quote.size()},
            {"n_shards", c.per_shard.size()}};
}

std::string serialize_cache(const UnlearnCache& c) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCacheFormatVersion);
    const std::string header = cache_header_json(c).dump();
    w.u64(header.size());
    w.raw(header.data(), header.size());

    const Vec5 theta = c.theta_ref.to_vec();
    for (int k = 0; k < kNumParams; ++k) w.f64(theta[k]);
    w.f64(c.lambda_ridge);
    w.aggregates(c.global);
    w.u64(c.per_shard.size());
    for (const auto& [id, agg] : c.per_shard) {
        w.i64(id);
        w.aggregates(agg);
    }
    w.u64(c.per_quote.size());
    for (const auto& s : c.per_quote) {
        w.i64(s.quote_id);
        w.i64(s.shard_id);
        for (int k = 0; k < kNumParams; ++k) w.f64(s.u[k]);
        for (double x : s.psi) w.f64(x);
    }
    w.u32(crc32_of(w.str()));
    return std::move(w.str());
}

UnlearnCache deserialize_cache(std::string_view bytes) {
    Reader r(bytes);
    const auto magic = r.raw(sizeof kMagic);
    if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw CorruptFile("not a cache file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCacheFormatVersion) {
        throw VersionMismatch("cache format version " + std::to_string(version) + ", expected " +
                              std::to_string(kCacheFormatVersion));
    }
    if (bytes.size() < 4 + sizeof kMagic + 4) throw CorruptFile("cache file truncated");
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    Reader trailer(bytes.substr(bytes.size() - 4));
    if (crc32_of(body) != trailer.u32()) throw CorruptFile("cache checksum mismatch");

    Reader p(body);
    p.raw(sizeof kMagic);
    p.u32();
    const std::uint64_t header_len = p.u64();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(p.raw(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("cache header: ") + e.what());
    }

    UnlearnCache c;
    try {
        c.meta.dataset_hash = header.at("dataset_hash").get<std::string>();
        const auto& q = header.at("quadrature");
        c.meta.quad = {q.at("u_max").get<double>(), q.at("n_sub").get<int>(), q.at("u_floor").get<double>()};
        const auto& fd = header.at("fd");
        c.meta.fd = {fd.at("rel_step").get<double>(), fd.at("abs_step").get<double>(),
                     fd.at("min_step").get<double>(), fd.at("shrink").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("cache header: ") + e.what());
    }

    Vec5 theta;
    for (int k = 0; k < kNumParams; ++k) theta[k] = p.f64();
    c.theta_ref = HestonParams::from_vec(theta);
    c.lambda_ridge = p.f64();
    c.global = p.aggregates();
    const std::uint64_t n_shards = p.u64();
    for (std::uint64_t i = 0; i < n_shards; ++i) {
        const ShardId id = p.i64();
        c.per_shard[id] = p.aggregates();
    }
    const std::uint64_t n_quotes = p.u64();
    if (n_quotes > body.size()) throw CorruptFile("implausible quote count");
    c.per_quote.resize(n_quotes);
    for (auto& s : c.per_quote) {
        s.quote_id = p.i64();
        s.shard_id = p.i64();
        for (int k = 0; k < kNumParams; ++k) s.u[k] = p.f64();
        for (double& x : s.psi) x = p.f64();
    }
    if (p.pos() != body.size()) throw CorruptFile("trailing bytes in cache payload");
    for (std::size_t i = 1; i < c.per_quote.size(); ++i) {
        if (c.per_quote[i].quote_id <= c.per_quote[i - 1].quote_id) {
            throw CorruptFile("cache quote ids not strictly ascending");
        }
    }
    return c;
}

void save_cache(const UnlearnCache& cache, const std::string& path) {
    write_text_file(path, serialize_cache(cache));
}

UnlearnCache load_cache(const std::string& path) { return deserialize_cache(read_text_file(path)); }

GnAggregates subtract_quotes(const UnlearnCache& cache, std::span<const QuoteId> forget_ids) {
    GnAggregates out = cache.global;
    QuoteId prev = 0;
    for (std::size_t i = 0; i < forget_ids.size(); ++i) {
        const QuoteId id = forget_ids[i];
        if (i > 0 && id <= prev) throw InvalidArgument("forget ids must be sorted and unique");
        prev = id;
        const auto idx = cache.find(id);
        if (!idx) throw UnknownQuoteId(id);
        out.subtract_upper(cache.per_quote[*idx]);
    }
    out.symmetrize();
    return out;
}

}  // namespace hforget
