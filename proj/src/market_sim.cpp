#include "hforget/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hforget/errors.hpp"
#include "hforget/io.hpp"

namespace hforget {

void PathConfig::validate() const {
    if (days < 1) throw InvalidArgument("path needs at least one day");
    if (!(dt > 0.0) || !(s0 > 0.0) || !std::isfinite(rate)) throw InvalidArgument("invalid path config");
}

void GridConfig::validate() const {
    if (maturities_days.empty() || strikes.empty()) throw InvalidArgument("empty quote grid");
    for (int m : maturities_days) {
        if (m < 1) throw InvalidArgument("maturity must be at least one day");
    }
    for (double k : strikes) {
        if (!(k > 0.0)) throw InvalidArgument("strike must be positive");
    }
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
}

double GaussianStream::uniform53() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform53();  // (0, 1]
    const double u2 = uniform53();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

ShockPair correlated_shocks(GaussianStream& rng, double rho) {
    const double z_v = rng.next();
    const double z_perp = rng.next();
    return {z_v, rho * z_v + std::sqrt(1.0 - rho * rho) * z_perp};
}

std::vector<PathPoint> simulate_path(const PathConfig& cfg, const HestonParams& params) {
    cfg.validate();
    params.validate();
    GaussianStream rng(cfg.seed);
    std::vector<PathPoint> path;
    path.reserve(static_cast<std::size_t>(cfg.days) + 1);
    double s = cfg.s0;
    double v = params.v0;
    path.push_back({s, std::max(v, 0.0)});
    const double sqrt_dt = std::sqrt(cfg.dt);
    for (int t = 0; t < cfg.days; ++t) {
        const ShockPair z = correlated_shocks(rng, params.rho);
        const double v_pos = std::max(v, 0.0);
        const double vol = std::sqrt(v_pos);
        s *= std::exp((cfg.rate - 0.5 * v_pos) * cfg.dt + vol * sqrt_dt * z.z_s);
        v = v + params.kappa * (params.theta_v - v_pos) * cfg.dt +
            params.sigma_v * vol * sqrt_dt * z.z_v;
        path.push_back({s, std::max(v, 0.0)});
    }
    return path;
}

std::vector<Quote> build_quotes(std::span<const PathPoint> path, const GridConfig& grid,
                                double rate, const HestonParams& params_true,
                                const Quadrature& quad, std::uint64_t noise_seed, int threads) {
    grid.validate();
    if (path.size() < 2) throw InvalidArgument("path must contain at least one quoting day");
    const std::size_t days = path.size() - 1;

    std::vector<Quote> quotes;
    quotes.reserve(days * grid.maturities_days.size() * grid.strikes.size());
    QuoteId next_id = 0;
    for (std::size_t d = 0; d < days; ++d) {
        for (int m : grid.maturities_days) {
            for (double k : grid.strikes) {
                Quote q;
                q.quote_id = next_id++;
                q.day_index = static_cast<std::int64_t>(d);
                q.features = {path[d].spot, k, m / kTradingDaysPerYear, rate};
                quotes.push_back(q);
            }
        }
    }
    const auto prices = price_calls(features_of(quotes), params_true, quad, threads);
    GaussianStream noise(noise_seed);
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        quotes[i].y = prices[i] + grid.noise_sigma * noise.next();
    }
    return quotes;
}

std::vector<Quote> shard_by_time(std::vector<Quote> quotes, int shard_days) {
    if (shard_days < 1) throw InvalidArgument("shard_days must be >= 1");
    for (auto& q : quotes) q.shard_id = q.day_index / shard_days;
    return quotes;
}

std::vector<Quote> retained_quotes(std::span<const Quote> quotes,
                                   std::span<const QuoteId> forget_ids_sorted) {
    std::vector<Quote> out;
    out.reserve(quotes.size());
    for (const auto& q : quotes) {
        if (!std::binary_search(forget_ids_sorted.begin(), forget_ids_sorted.end(), q.quote_id)) {
            out.push_back(q);
        }
    }
    return out;
}

std::vector<QuoteFeatures> features_of(std::span<const Quote> quotes) {
    std::vector<QuoteFeatures> out;
    out.reserve(quotes.size());
    for (const auto& q : quotes) out.push_back(q.features);
    return out;
}

void write_quotes_csv(std::ostream& os, std::span<const Quote> quotes) {
    os << kQuoteCsvHeader << '\n';
    for (const auto& q : quotes) {
        os << q.quote_id << ',' << q.day_index << ',' << q.shard_id << ','
           << format_double(q.features.spot) << ',' << format_double(q.features.strike) << ','
           << format_double(q.features.maturity) << ',' << format_double(q.features.rate) << ','
           << format_double(q.y) << ',' << format_double(q.weight) << '\n';
    }
}

std::string quotes_to_csv(std::span<const Quote> quotes) {
    std::ostringstream ss;
    write_quotes_csv(ss, quotes);
    return ss.str();
}

std::vector<Quote> read_quotes_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw CorruptFile("empty quote CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kQuoteCsvHeader) throw CorruptFile("unexpected quote CSV header: " + line);
    std::vector<Quote> quotes;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cols = split_csv_line(line);
        if (cols.size() != 9) {
            throw CorruptFile("quote CSV line " + std::to_string(line_no) + " has " +
                              std::to_string(cols.size()) + " columns");
        }
        Quote q;
        try {
            q.quote_id = parse_int(cols[0]);
            q.day_index = parse_int(cols[1]);
            q.shard_id = parse_int(cols[2]);
            q.features = {parse_double(cols[3]), parse_double(cols[4]), parse_double(cols[5]),
                          parse_double(cols[6])};
            q.y = parse_double(cols[7]);
            q.weight = parse_double(cols[8]);
        } catch (const InvalidArgument&) {
            throw CorruptFile("unparsable field on quote CSV line " + std::to_string(line_no));
        }
        if (!std::isfinite(q.y) || !(q.weight >= 0.0)) {
            throw CorruptFile("invalid quote on line " + std::to_string(line_no));
        }
        quotes.push_back(q);
    }
    std::vector<QuoteId> ids;
    ids.reserve(quotes.size());
    for (const auto& q : quotes) ids.push_back(q.quote_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw CorruptFile("duplicate quote_id in CSV");
    }
    return quotes;
}

void save_quotes_csv(const std::string& path, std::span<const Quote> quotes) {
    write_text_file(path, quotes_to_csv(quotes));
}

std::vector<Quote> load_quotes_csv(const std::string& path) {
    std::istringstream ss(read_text_file(path));
    return read_quotes_csv(ss);
}

std::string dataset_hash(std::span<const Quote> quotes) { return sha256_hex(quotes_to_csv(quotes)); }

nlohmann::json params_to_json(const HestonParams& p) {
    return {{"kappa", p.kappa}, {"theta_v", p.theta_v}, {"sigma_v", p.sigma_v},
            {"rho", p.rho},     {"v0", p.v0}};
}

HestonParams params_from_json(const nlohmann::json& j) {
    return {j.at("kappa").get<double>(), j.at("theta_v").get<double>(),
            j.at("sigma_v").get<double>(), j.at("rho").get<double>(), j.at("v0").get<double>()};
}

nlohmann::json to_json(const DatasetMeta& m) {
    return {
        {"path",
         {{"days", m.path.days},
          {"dt", m.path.dt},
          {"s0", m.path.s0},
          {"rate", m.path.rate},
          {"seed", m.path.seed}}},
        {"grid",
         {{"maturities_days", m.grid.maturities_days},
          {"strikes", m.grid.strikes},
          {"noise_sigma", m.grid.noise_sigma}}},
        {"quadrature", {{"u_max", m.quad.u_max}, {"n_sub", m.quad.n_sub}, {"u_floor", m.quad.u_floor}}},
        {"theta_true", params_to_json(m.theta_true)},
        {"noise_seed", m.noise_seed},
        {"shard_days", m.shard_days},
        {"rng_algorithm", m.rng_algorithm},
        {"dataset_hash", m.dataset_hash},
        {"n_quotes", m.n_quotes},
        {"n_negative_y", m.n_negative_y},
    };
}

DatasetMeta dataset_meta_from_json(const nlohmann::json& j) {
    DatasetMeta m;
    const auto& p = j.at("path");
    m.path = {p.at("days").get<int>(), p.at("dt").get<double>(), p.at("s0").get<double>(),
              p.at("rate").get<double>(), p.at("seed").get<std::uint64_t>()};
    const auto& g = j.at("grid");
    m.grid = {g.at("maturities_days").get<std::vector<int>>(),
              g.at("strikes").get<std::vector<double>>(), g.at("noise_sigma").get<double>()};
    const auto& q = j.at("quadrature");
    m.quad = {q.at("u_max").get<double>(), q.at("n_sub").get<int>(), q.at("u_floor").get<double>()};
    m.theta_true = params_from_json(j.at("theta_true"));
    m.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    m.shard_days = j.at("shard_days").get<int>();
    m.rng_algorithm = j.at("rng_algorithm").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    m.n_quotes = j.at("n_quotes").get<std::size_t>();
    m.n_negative_y = j.value("n_negative_y", std::size_t{0});
    return m;
}

}  // namespace hforget
