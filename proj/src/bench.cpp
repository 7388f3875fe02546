#include "hforget/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "hforget/errors.hpp"
#include "hforget/io.hpp"

namespace hforget {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// splitmix64 step, used to derive independent stream seeds from (seed, a, b).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Unbiased integer in [0, n) by rejection; std::uniform_int_distribution is not
// specified bit-for-bit across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Median seconds per fast solve over a few batches of back-to-back calls.
double time_fast(const UnlearnCache& cache, std::span<const QuoteId> ids, double lambda, int batch) {
    constexpr int kSamples = 5;
    std::vector<double> samples;
    volatile double sink = 0.0;
    for (int s = 0; s < kSamples; ++s) {
        const auto t0 = Clock::now();
        for (int b = 0; b < batch; ++b) sink = sink + fast_refactor_solve(cache, ids, lambda)[0];
        samples.push_back(seconds_since(t0) / batch);
    }
    return median(std::move(samples));
}

std::size_t retained_in_affected(std::span<const Quote> quotes, std::span<const QuoteId> ids) {
    std::set<ShardId> affected;
    for (const auto& q : quotes) {
        if (std::binary_search(ids.begin(), ids.end(), q.quote_id)) affected.insert(q.shard_id);
    }
    std::size_t n = 0;
    for (const auto& q : quotes) {
        if (affected.contains(q.shard_id) && !std::binary_search(ids.begin(), ids.end(), q.quote_id)) ++n;
    }
    return n;
}

std::vector<std::vector<std::string_view>> parse_table(std::string_view text, std::string_view header,
                                                       std::size_t n_cols) {
    std::vector<std::vector<std::string_view>> rows;
    bool first = true;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (first) {
            if (line != header) throw CorruptFile("unexpected CSV header: " + std::string(line));
            first = false;
            continue;
        }
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() != n_cols) {
            throw CorruptFile("CSV line " + std::to_string(line_no) + " has " + std::to_string(cols.size()) +
                              " columns, expected " + std::to_string(n_cols));
        }
        rows.push_back(std::move(cols));
    }
    if (first) throw CorruptFile("empty CSV");
    return rows;
}

template <class Row, class Fn>
std::string emit(std::string_view header, std::span<const Row> rows, Fn&& fields) {
    std::string out(header);
    out += '\n';
    for (const auto& r : rows) {
        const std::vector<std::string> cols = fields(r);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i) out += ',';
            out += cols[i];
        }
        out += '\n';
    }
    return out;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

constexpr std::string_view kBenchHeader =
    "fraction,n_forget,median_retrain_s,median_recompute_s,median_fast_s,rmse_kept_fast,"
    "rmse_kept_retrain,speedup,param_dist_fast_retrain,param_dist_recompute_retrain,n_affected_shards";
constexpr std::string_view kLocalityHeader =
    "n_affected_shards,n_forget,n_repriced,n_repriced_ratio,recompute_s,retrain_s,time_ratio";
constexpr std::string_view kScalingHeader = "axis,x,median_s,fitted_slope";
constexpr std::string_view kRunsHeader =
    "fraction,repeat,n_forget,retrain_s,recompute_s,fast_s,d_kappa,d_theta_v,d_sigma_v,d_rho,d_v0,"
    "param_dist_fast_retrain,param_dist_recompute_retrain,rmse_kept_fast,rmse_kept_retrain,"
    "n_affected_shards,n_repriced,n_retained_in_affected,min_eig_Hprime";

}  // namespace

ExperimentConfig ExperimentConfig::small(std::uint64_t seed) {
    ExperimentConfig c;
    c.name = "small";
    c.path.days = 90;
    c.path.seed = seed;
    c.grid = {{30, 60}, {90.0, 100.0, 110.0}, 1e-3};
    c.quad = QuadratureConfig::small();
    c.shard_days = 10;
    c.noise_seed = seed + 1;
    return c;
}

ExperimentConfig ExperimentConfig::large(std::uint64_t seed) {
    ExperimentConfig c;
    c.name = "large";
    c.path.days = 180;
    c.path.seed = seed;
    c.grid = {{30, 60, 90}, {80.0, 90.0, 100.0, 110.0, 120.0}, 5e-4};
    c.quad = QuadratureConfig::large();
    c.shard_days = 30;
    c.noise_seed = seed + 1;
    return c;
}

ExperimentConfig ExperimentConfig::by_name(const std::string& name, std::uint64_t seed) {
    if (name == "small") return small(seed);
    if (name == "large") return large(seed);
    throw InvalidArgument("unknown config '" + name + "' (expected small or large)");
}

std::vector<Quote> simulate_dataset(const ExperimentConfig& cfg, DatasetMeta* meta, int threads) {
    const Quadrature quad(cfg.quad);
    const auto path = simulate_path(cfg.path, cfg.theta_true);
    auto quotes = shard_by_time(
        build_quotes(path, cfg.grid, cfg.path.rate, cfg.theta_true, quad, cfg.noise_seed, threads),
        cfg.shard_days);
    if (meta != nullptr) {
        meta->path = cfg.path;
        meta->grid = cfg.grid;
        meta->quad = cfg.quad;
        meta->theta_true = cfg.theta_true;
        meta->noise_seed = cfg.noise_seed;
        meta->shard_days = cfg.shard_days;
        meta->dataset_hash = dataset_hash(quotes);
        meta->n_quotes = quotes.size();
        meta->n_negative_y = static_cast<std::size_t>(
            std::count_if(quotes.begin(), quotes.end(), [](const Quote& q) { return q.y < 0.0; }));
    }
    return quotes;
}

Experiment run_experiment(const ExperimentConfig& cfg, int threads) {
    Experiment e;
    e.config = cfg;
    e.config.lm.threads = threads;
    e.quotes = simulate_dataset(cfg, &e.meta, threads);
    const Quadrature quad(cfg.quad);
    e.calibration = lm_calibrate(e.quotes, cfg.theta_init, e.config.lm, quad, cfg.fd);
    e.cache = build_cache(e.quotes, e.calibration.theta_star, cfg.lm.lambda_ridge, quad, cfg.fd, threads);
    return e;
}

void write_experiment(const Experiment& e, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    save_quotes_csv((d / "quotes.csv").string(), e.quotes);
    nlohmann::json meta = to_json(e.meta);
    meta["config"] = e.config.name;
    write_text_file((d / "meta.json").string(), meta.dump(2) + "\n");
    nlohmann::json cal = to_json(e.calibration);
    cal["lambda_ridge"] = e.config.lm.lambda_ridge;
    write_text_file((d / "calibration.json").string(), cal.dump(2) + "\n");
    save_cache(e.cache, (d / "cache.bin").string());
}

std::vector<QuoteId> sample_ids(std::span<const Quote> quotes, std::size_t k, std::uint64_t seed) {
    if (k > quotes.size()) throw InvalidArgument("cannot sample more ids than quotes");
    std::vector<QuoteId> ids;
    ids.reserve(quotes.size());
    for (const auto& q : quotes) ids.push_back(q.quote_id);
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates over the first k slots.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + bounded(rng, ids.size() - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::size_t forget_count(double fraction, std::size_t n) {
    if (n < 2) throw InvalidArgument("need at least two quotes to forget a proper subset");
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

void BenchConfig::validate() const {
    if (fractions.empty()) throw InvalidArgument("no forget fractions");
    for (double f : fractions) {
        if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("forget fractions must lie in (0, 1)");
    }
    if (n_repeats < 1) throw InvalidArgument("n_repeats must be >= 1");
    if (fast_batch < 1) throw InvalidArgument("fast_batch must be >= 1");
}

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope needs two or more points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("log-log fit needs positive values");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw InvalidArgument("log-log fit needs distinct x values");
    return sxy / sxx;
}

bool same_3_sig_figs(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) return false;
    char sa[32], sb[32];
    std::snprintf(sa, sizeof sa, "%.2e", a);
    std::snprintf(sb, sizeof sb, "%.2e", b);
    return std::string_view(sa) == std::string_view(sb);
}

BenchReport bench_sweep(const BenchConfig& cfg, std::span<const Quote> quotes, const UnlearnCache& cache) {
    cfg.validate();
    if (dataset_hash(quotes) != cache.meta.dataset_hash) {
        throw DatasetHashMismatch("bench dataset does not match the cache");
    }
    const Quadrature quad(cache.meta.quad);
    const QuoteStore store(std::vector<Quote>(quotes.begin(), quotes.end()));
    const double lambda = cache.lambda_ridge;

    auto one_run = [&](double fraction, int repeat, std::uint64_t seed, bool keep) {
        BenchRun run;
        run.fraction = fraction;
        run.repeat = repeat;
        const auto ids = sample_ids(quotes, forget_count(fraction, quotes.size()), seed);
        run.n_forget = ids.size();
        const auto kept = retained_quotes(quotes, ids);
        const ForgetRequest req(ids, ForgetMethod::Fast, lambda);

        const ForgetOutcome retrain = retrain_full(kept, cache.theta_ref, lambda, quad, cache.meta.fd, cfg.threads);
        const ForgetOutcome recompute = sharded_recompute(cache, store, req, cfg.threads);
        const ForgetOutcome fast = fast_refactor(cache, req);
        run.retrain_seconds = retrain.wall_time;
        run.recompute_seconds = recompute.wall_time;
        run.fast_seconds = time_fast(cache, ids, lambda, cfg.fast_batch);
        if (!keep) return run;

        run.diff_fast_retrain = fast.theta_new.to_vec() - retrain.theta_new.to_vec();
        run.param_dist_fast_retrain = run.diff_fast_retrain.norm();
        run.param_dist_recompute_retrain = (recompute.theta_new.to_vec() - retrain.theta_new.to_vec()).norm();
        run.rmse_kept_fast = rmse(kept, fast.theta_new, quad, cfg.threads);
        run.rmse_kept_retrain = rmse(kept, retrain.theta_new, quad, cfg.threads);
        run.n_affected_shards = recompute.n_affected_shards;
        run.n_repriced = recompute.n_repriced;
        run.n_retained_in_affected = retained_in_affected(quotes, ids);
        run.min_eig_Hprime = fast.min_eig_Hprime;
        return run;
    };

    BenchReport report;
    one_run(cfg.fractions.front(), -1, mix_seed(cfg.seed, 999), false);  // warm-up, discarded

    for (std::size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
        const double f = cfg.fractions[fi];
        std::vector<double> t_retrain, t_recompute, t_fast, rm_fast, rm_retrain, shards;
        BenchRow row;
        row.fraction = f;
        for (int r = 0; r < cfg.n_repeats; ++r) {
            const BenchRun run = one_run(f, r, mix_seed(cfg.seed, fi, static_cast<std::uint64_t>(r)), true);
            row.n_forget = run.n_forget;
            t_retrain.push_back(run.retrain_seconds);
            t_recompute.push_back(run.recompute_seconds);
            t_fast.push_back(run.fast_seconds);
            rm_fast.push_back(run.rmse_kept_fast);
            rm_retrain.push_back(run.rmse_kept_retrain);
            shards.push_back(static_cast<double>(run.n_affected_shards));
            row.param_dist_fast_retrain = std::max(row.param_dist_fast_retrain, run.param_dist_fast_retrain);
            row.param_dist_recompute_retrain =
                std::max(row.param_dist_recompute_retrain, run.param_dist_recompute_retrain);

            const std::string tag = "fraction " + format_double(f) + " repeat " + std::to_string(r) + ": ";
            if (!(run.param_dist_fast_retrain < kExactnessTol)) {
                report.violations.push_back(tag + "||theta_fast - theta_retrain|| = " +
                                            format_double(run.param_dist_fast_retrain));
            }
            if (!(run.param_dist_recompute_retrain < kExactnessTol)) {
                report.violations.push_back(tag + "||theta_recompute - theta_retrain|| = " +
                                            format_double(run.param_dist_recompute_retrain));
            }
            if (!same_3_sig_figs(run.rmse_kept_fast, run.rmse_kept_retrain)) {
                report.violations.push_back(tag + "kept RMSE differs: fast " + format_double(run.rmse_kept_fast) +
                                            ", retrain " + format_double(run.rmse_kept_retrain));
            }
            if (run.n_repriced != run.n_retained_in_affected) {
                report.violations.push_back(tag + "recompute repriced " + std::to_string(run.n_repriced) +
                                            " quotes, expected " + std::to_string(run.n_retained_in_affected));
            }
            report.runs.push_back(run);
        }
        row.median_retrain_seconds = median(t_retrain);
        row.median_recompute_seconds = median(t_recompute);
        row.median_fast_seconds = median(t_fast);
        row.rmse_kept_fast = median(rm_fast);
        row.rmse_kept_retrain = median(rm_retrain);
        row.speedup = row.median_retrain_seconds / row.median_fast_seconds;
        row.n_affected_shards = median(shards);
        if (!(row.speedup > 0.0) || !std::isfinite(row.speedup)) {
            report.violations.push_back("fraction " + format_double(f) + ": speedup is not a positive number");
        }
        report.rows.push_back(row);
    }
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (!(report.rows[i].speedup < report.rows[i - 1].speedup)) {
            report.warnings.push_back("speedup did not decrease from fraction " +
                                      format_double(report.rows[i - 1].fraction) + " to " +
                                      format_double(report.rows[i].fraction));
        }
    }
    return report;
}

std::vector<LocalityRow> shard_locality_study(const LocalityConfig& cfg, std::span<const Quote> quotes,
                                              const UnlearnCache& cache) {
    if (cfg.n_repeats < 1) throw InvalidArgument("n_repeats must be >= 1");
    if (!(cfg.shard_fraction > 0.0 && cfg.shard_fraction < 1.0)) {
        throw InvalidArgument("shard_fraction must lie in (0, 1)");
    }
    const Quadrature quad(cache.meta.quad);
    const QuoteStore store(std::vector<Quote>(quotes.begin(), quotes.end()));
    if (store.dataset_hash() != cache.meta.dataset_hash) {
        throw DatasetHashMismatch("locality dataset does not match the cache");
    }
    const auto shard_list = store.shard_ids();
    const double lambda = cache.lambda_ridge;

    auto forget_set = [&](std::size_t k, std::uint64_t seed) {
        std::vector<QuoteId> ids;
        for (std::size_t s = 0; s < k; ++s) {
            const auto shard = store.shard(shard_list[s]);
            const std::size_t n = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::llround(cfg.shard_fraction * static_cast<double>(shard.size()))), 1,
                shard.size());
            const auto picked = sample_ids(shard, n, mix_seed(seed, s));
            ids.insert(ids.end(), picked.begin(), picked.end());
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    auto measure = [&](const std::vector<QuoteId>& ids, LocalityRow& row) {
        const ForgetRequest req(ids, ForgetMethod::Recompute, lambda);
        const auto kept = retained_quotes(quotes, ids);
        const ForgetOutcome rec = sharded_recompute(cache, store, req, 1);
        const ForgetOutcome full = retrain_full(kept, cache.theta_ref, lambda, quad, cache.meta.fd, 1);
        row.n_repriced = rec.n_repriced;
        row.n_affected_shards = rec.n_affected_shards;
        return std::pair{rec.wall_time, full.wall_time};
    };

    LocalityRow scratch;
    measure(forget_set(1, mix_seed(cfg.seed, 999)), scratch);  // warm-up

    std::vector<LocalityRow> rows;
    for (std::size_t k = 0; k <= shard_list.size(); ++k) {
        LocalityRow row;
        std::vector<double> t_rec, t_full;
        for (int r = 0; r < cfg.n_repeats; ++r) {
            const auto ids = forget_set(k, mix_seed(cfg.seed, k, static_cast<std::uint64_t>(r)));
            row.n_forget = ids.size();
            const auto [a, b] = measure(ids, row);
            t_rec.push_back(a);
            t_full.push_back(b);
        }
        row.n_repriced_ratio = static_cast<double>(row.n_repriced) / static_cast<double>(quotes.size());
        row.recompute_seconds = median(t_rec);
        row.retrain_seconds = median(t_full);
        row.time_ratio = row.recompute_seconds / row.retrain_seconds;
        rows.push_back(row);
    }
    return rows;
}

std::vector<ScalingPoint> scaling_study(const ScalingConfig& cfg) {
    if (cfg.days.size() < 3 || cfg.node_counts.size() < 3 || cfg.forget_fractions.size() < 3) {
        throw InvalidArgument("scaling study needs at least three sizes per axis");
    }
    if (cfg.n_repeats < 1 || cfg.fast_batch < 1) throw InvalidArgument("invalid scaling repeats");
    const ExperimentConfig base = ExperimentConfig::large(cfg.seed);
    const FdPolicy fd = base.fd;
    const double lambda = base.lm.lambda_ridge;
    // Timing does not depend on where the system is linearized, so skip calibration.
    const HestonParams theta_ref = base.theta_init;

    auto dataset = [&](int days, const QuadratureConfig& q) {
        ExperimentConfig c = base;
        c.path.days = days;
        c.quad = q;
        return simulate_dataset(c);
    };
    auto time_retrain = [&](std::span<const Quote> quotes, std::span<const QuoteId> ids, const Quadrature& quad) {
        const auto kept = retained_quotes(quotes, ids);
        retrain_full(kept, theta_ref, lambda, quad, fd, 1);  // warm-up
        std::vector<double> t;
        for (int r = 0; r < cfg.n_repeats; ++r) t.push_back(retrain_full(kept, theta_ref, lambda, quad, fd, 1).wall_time);
        return median(std::move(t));
    };
    auto time_fast_median = [&](const UnlearnCache& cache, std::span<const QuoteId> ids) {
        std::vector<double> t;
        for (int r = 0; r < cfg.n_repeats; ++r) t.push_back(time_fast(cache, ids, lambda, cfg.fast_batch));
        return median(std::move(t));
    };

    std::vector<ScalingPoint> out;
    auto add_axis = [&](const std::string& axis, const std::vector<double>& x, const std::vector<double>& y) {
        const double slope = loglog_slope(x, y);
        for (std::size_t i = 0; i < x.size(); ++i) out.push_back({axis, x[i], y[i], slope});
    };

    const Quadrature quad_large(base.quad);
    std::vector<double> n_x, retrain_y, fast_y;
    std::vector<Quote> biggest;
    std::optional<UnlearnCache> biggest_cache;
    for (int days : cfg.days) {
        auto quotes = dataset(days, base.quad);
        const auto cache = build_cache(quotes, theta_ref, lambda, quad_large, fd, 1);
        const auto ids = sample_ids(quotes, std::min(cfg.fixed_forget, quotes.size() - 1), mix_seed(cfg.seed, 1));
        n_x.push_back(static_cast<double>(quotes.size()));
        retrain_y.push_back(time_retrain(quotes, ids, quad_large));
        fast_y.push_back(time_fast_median(cache, ids));
        if (quotes.size() >= biggest.size()) {
            biggest = std::move(quotes);
            biggest_cache = cache;
        }
    }
    add_axis("retrain_vs_n", n_x, retrain_y);
    add_axis("fast_vs_n", n_x, fast_y);

    std::vector<double> f_x, f_y;
    for (std::size_t i = 0; i < cfg.forget_fractions.size(); ++i) {
        const auto ids = sample_ids(biggest, forget_count(cfg.forget_fractions[i], biggest.size()),
                                    mix_seed(cfg.seed, 2, i));
        f_x.push_back(static_cast<double>(ids.size()));
        f_y.push_back(time_fast_median(*biggest_cache, ids));
    }
    add_axis("fast_vs_f", f_x, f_y);

    std::vector<double> nu_x, nu_y;
    const int smallest_days = *std::min_element(cfg.days.begin(), cfg.days.end());
    for (int nodes : cfg.node_counts) {
        QuadratureConfig q = base.quad;
        q.n_sub = nodes;
        const Quadrature quad(q);
        const auto quotes = dataset(smallest_days, q);
        const auto ids = sample_ids(quotes, std::min(cfg.fixed_forget, quotes.size() - 1), mix_seed(cfg.seed, 3));
        nu_x.push_back(static_cast<double>(nodes));
        nu_y.push_back(time_retrain(quotes, ids, quad));
    }
    add_axis("retrain_vs_nu", nu_x, nu_y);
    return out;
}

std::string bench_csv(std::span<const BenchRow> rows) {
    return emit(kBenchHeader, rows, [](const BenchRow& r) {
        return std::vector<std::string>{fmt(r.fraction),
                                        fmt(r.n_forget),
                                        fmt(r.median_retrain_seconds),
                                        fmt(r.median_recompute_seconds),
                                        fmt(r.median_fast_seconds),
                                        fmt(r.rmse_kept_fast),
                                        fmt(r.rmse_kept_retrain),
                                        fmt(r.speedup),
                                        fmt(r.param_dist_fast_retrain),
                                        fmt(r.param_dist_recompute_retrain),
                                        fmt(r.n_affected_shards)};
    });
}

std::vector<BenchRow> read_bench_csv(std::string_view text) {
    std::vector<BenchRow> rows;
    try {
        for (const auto& c : parse_table(text, kBenchHeader, 11)) {
            BenchRow r;
            r.fraction = parse_double(c[0]);
            r.n_forget = static_cast<std::size_t>(parse_int(c[1]));
            r.median_retrain_seconds = parse_double(c[2]);
            r.median_recompute_seconds = parse_double(c[3]);
            r.median_fast_seconds = parse_double(c[4]);
            r.rmse_kept_fast = parse_double(c[5]);
            r.rmse_kept_retrain = parse_double(c[6]);
            r.speedup = parse_double(c[7]);
            r.param_dist_fast_retrain = parse_double(c[8]);
            r.param_dist_recompute_retrain = parse_double(c[9]);
            r.n_affected_shards = parse_double(c[10]);
            rows.push_back(r);
        }
    } catch (const InvalidArgument& e) {
        throw CorruptFile(e.what());  // a bad number means a bad file
    }
    return rows;
}

std::string locality_csv(std::span<const LocalityRow> rows) {
    return emit(kLocalityHeader, rows, [](const LocalityRow& r) {
        return std::vector<std::string>{fmt(r.n_affected_shards), fmt(r.n_forget),        fmt(r.n_repriced),
                                        fmt(r.n_repriced_ratio),  fmt(r.recompute_seconds), fmt(r.retrain_seconds),
                                        fmt(r.time_ratio)};
    });
}

std::vector<LocalityRow> read_locality_csv(std::string_view text) {
    std::vector<LocalityRow> rows;
    try {
        for (const auto& c : parse_table(text, kLocalityHeader, 7)) {
            LocalityRow r;
            r.n_affected_shards = static_cast<std::size_t>(parse_int(c[0]));
            r.n_forget = static_cast<std::size_t>(parse_int(c[1]));
            r.n_repriced = static_cast<std::size_t>(parse_int(c[2]));
            r.n_repriced_ratio = parse_double(c[3]);
            r.recompute_seconds = parse_double(c[4]);
            r.retrain_seconds = parse_double(c[5]);
            r.time_ratio = parse_double(c[6]);
            rows.push_back(r);
        }
    } catch (const InvalidArgument& e) {
        throw CorruptFile(e.what());  // a bad number means a bad file
    }
    return rows;
}

std::string scaling_csv(std::span<const ScalingPoint> rows) {
    return emit(kScalingHeader, rows, [](const ScalingPoint& r) {
        return std::vector<std::string>{r.axis, fmt(r.x), fmt(r.median_seconds), fmt(r.fitted_slope)};
    });
}

std::vector<ScalingPoint> read_scaling_csv(std::string_view text) {
    std::vector<ScalingPoint> rows;
    try {
        for (const auto& c : parse_table(text, kScalingHeader, 4)) {
            rows.push_back({std::string(c[0]), parse_double(c[1]), parse_double(c[2]), parse_double(c[3])});
        }
    } catch (const InvalidArgument& e) {
        throw CorruptFile(e.what());  // a bad number means a bad file
    }
    return rows;
}

std::string bench_runs_csv(std::span<const BenchRun> runs) {
    return emit(kRunsHeader, runs, [](const BenchRun& r) {
        std::vector<std::string> c{fmt(r.fraction), std::to_string(r.repeat), fmt(r.n_forget),
                                   fmt(r.retrain_seconds), fmt(r.recompute_seconds), fmt(r.fast_seconds)};
        for (int k = 0; k < kNumParams; ++k) c.push_back(fmt(r.diff_fast_retrain[k]));
        for (double v : {r.param_dist_fast_retrain, r.param_dist_recompute_retrain, r.rmse_kept_fast,
                         r.rmse_kept_retrain}) {
            c.push_back(fmt(v));
        }
        c.push_back(fmt(r.n_affected_shards));
        c.push_back(fmt(r.n_repriced));
        c.push_back(fmt(r.n_retained_in_affected));
        c.push_back(fmt(r.min_eig_Hprime));
        return c;
    });
}

nlohmann::json to_json(const BenchRow& r) {
    return {{"fraction", r.fraction},
            {"n_forget", r.n_forget},
            {"median_retrain_s", r.median_retrain_seconds},
            {"median_recompute_s", r.median_recompute_seconds},
            {"median_fast_s", r.median_fast_seconds},
            {"rmse_kept_fast", r.rmse_kept_fast},
            {"rmse_kept_retrain", r.rmse_kept_retrain},
            {"speedup", r.speedup},
            {"param_dist_fast_retrain", r.param_dist_fast_retrain},
            {"param_dist_recompute_retrain", r.param_dist_recompute_retrain},
            {"n_affected_shards", r.n_affected_shards}};
}

}  // namespace hforget
