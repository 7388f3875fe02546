#include <filesystem>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hforget/bench.hpp"
#include "hforget/errors.hpp"
#include "hforget/io.hpp"

namespace fs = std::filesystem;
using namespace hforget;

namespace {

constexpr int kExitInvariant = 3;

struct Globals {
    std::string config = "small";
    std::string out = "run";
    std::uint64_t seed = 42;
    int threads = 1;
};

std::string in_run(const Globals& g, const char* file) { return (fs::path(g.out) / file).string(); }

// Quadrature and FD settings come from meta.json when the run directory has one,
// so a dataset is always refit with the grid it was priced on.
ExperimentConfig config_for_run(const Globals& g) {
    ExperimentConfig cfg = ExperimentConfig::by_name(g.config, g.seed);
    const auto meta_path = in_run(g, "meta.json");
    if (fs::exists(meta_path)) {
        const auto meta = dataset_meta_from_json(nlohmann::json::parse(read_text_file(meta_path)));
        cfg.quad = meta.quad;
    }
    return cfg;
}

std::vector<Quote> load_quotes(const Globals& g) {
    const auto path = in_run(g, "quotes.csv");
    if (!fs::exists(path)) throw IoError("no quotes.csv in " + g.out + " (run simulate first)");
    return load_quotes_csv(path);
}

UnlearnCache load_run_cache(const Globals& g) {
    const auto path = in_run(g, "cache.bin");
    if (!fs::exists(path)) throw IoError("no cache.bin in " + g.out + " (run cache build first)");
    return load_cache(path);
}

HestonParams calibrated_theta(const Globals& g) {
    const auto path = in_run(g, "calibration.json");
    if (!fs::exists(path)) throw IoError("no calibration.json in " + g.out + " (run calibrate first)");
    return lm_result_from_json(nlohmann::json::parse(read_text_file(path))).theta_star;
}

// Builds every missing artifact of a run directory.
void ensure_run(const Globals& g) {
    if (fs::exists(in_run(g, "quotes.csv")) && fs::exists(in_run(g, "cache.bin"))) return;
    std::cerr << "building " << g.config << " experiment in " << g.out << "\n";
    write_experiment(run_experiment(ExperimentConfig::by_name(g.config, g.seed), g.threads), g.out);
}

std::vector<QuoteId> parse_ids(const std::string& s) {
    std::vector<QuoteId> ids;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) ids.push_back(parse_int(tok));
    }
    return ids;
}

void cmd_simulate(const Globals& g) {
    const ExperimentConfig cfg = ExperimentConfig::by_name(g.config, g.seed);
    DatasetMeta meta;
    const auto quotes = simulate_dataset(cfg, &meta, g.threads);
    fs::create_directories(g.out);
    save_quotes_csv(in_run(g, "quotes.csv"), quotes);
    nlohmann::json j = to_json(meta);
    j["config"] = cfg.name;
    write_text_file(in_run(g, "meta.json"), j.dump(2) + "\n");
    std::cout << "wrote " << quotes.size() << " quotes to " << in_run(g, "quotes.csv") << " (sha256 "
              << meta.dataset_hash << ")\n";
    if (meta.n_negative_y > 0) std::cout << meta.n_negative_y << " noisy quotes are below zero\n";
}

void cmd_calibrate(const Globals& g) {
    ExperimentConfig cfg = config_for_run(g);
    cfg.lm.threads = g.threads;
    const auto quotes = load_quotes(g);
    const LmResult r = lm_calibrate(quotes, cfg.theta_init, cfg.lm, Quadrature(cfg.quad), cfg.fd);
    nlohmann::json j = to_json(r);
    j["lambda_ridge"] = cfg.lm.lambda_ridge;
    write_text_file(in_run(g, "calibration.json"), j.dump(2) + "\n");
    std::cout << "stop=" << to_string(r.stop) << " iterations=" << r.trace.size() << " rmse=" << r.final_rmse
              << " seconds=" << r.seconds << "\n"
              << params_to_json(r.theta_star).dump() << "\n";
}

void cmd_cache_build(const Globals& g) {
    const ExperimentConfig cfg = config_for_run(g);
    const auto quotes = load_quotes(g);
    const auto cache = build_cache(quotes, calibrated_theta(g), cfg.lm.lambda_ridge, Quadrature(cfg.quad),
                                   cfg.fd, g.threads);
    save_cache(cache, in_run(g, "cache.bin"));
    std::cout << "wrote " << in_run(g, "cache.bin") << " (" << cache.per_quote.size() << " quotes, "
              << cache.per_shard.size() << " shards)\n";
}

void cmd_cache_inspect(const Globals& g) {
    const auto cache = load_run_cache(g);
    nlohmann::json j = cache_header_json(cache);
    j["theta_ref"] = params_to_json(cache.theta_ref);
    j["lambda_ridge"] = cache.lambda_ridge;
    j["lambda_min_H"] = min_eigenvalue(cache.global.H);
    j["norm_H"] = spectral_norm_symmetric(cache.global.H);
    nlohmann::json shards = nlohmann::json::array();
    for (const auto& [id, agg] : cache.per_shard) shards.push_back({{"shard_id", id}, {"n_quotes", agg.n_quotes}});
    j["shards"] = shards;
    std::cout << j.dump(2) << "\n";
}

ForgetOutcome retrain_from_files(const Globals& g, const UnlearnCache& cache, std::span<const Quote> quotes,
                                 const ForgetRequest& req) {
    if (dataset_hash(quotes) != cache.meta.dataset_hash) {
        throw DatasetHashMismatch("quotes.csv does not match cache.bin");
    }
    for (QuoteId id : req.forget_ids) cache.stats(id);  // reject unknown ids like the other methods
    const auto kept = retained_quotes(quotes, req.forget_ids);
    ForgetOutcome out =
        retrain_full(kept, cache.theta_ref, req.lambda_ridge, Quadrature(cache.meta.quad), cache.meta.fd, g.threads);
    out.n_forgotten = req.forget_ids.size();
    return out;
}

void cmd_forget(const Globals& g, const std::string& method_name, const std::string& ids_arg, double fraction,
                bool baseline) {
    const ForgetMethod method = forget_method_from_string(method_name);
    const auto cache = load_run_cache(g);
    std::vector<QuoteId> ids;
    std::vector<Quote> quotes;
    if (method != ForgetMethod::Fast || baseline) quotes = load_quotes(g);
    if (!ids_arg.empty()) {
        ids = parse_ids(ids_arg);
    } else {
        // The fast path samples straight from the cached ids, never touching the quotes.
        std::vector<Quote> id_only;
        id_only.reserve(cache.per_quote.size());
        for (const auto& s : cache.per_quote) {
            Quote q;
            q.quote_id = s.quote_id;
            id_only.push_back(q);
        }
        ids = sample_ids(id_only, forget_count(fraction, id_only.size()), g.seed);
    }
    const ForgetRequest req(ids, method, cache.lambda_ridge);
    ForgetOutcome out;
    switch (method) {
        case ForgetMethod::Fast: out = fast_refactor(cache, req); break;
        case ForgetMethod::Recompute: out = sharded_recompute(cache, QuoteStore(quotes), req, g.threads); break;
        case ForgetMethod::Retrain: out = retrain_from_files(g, cache, quotes, req); break;
    }
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
    nlohmann::json j = to_json(out);
    j["forget_fraction"] =
        static_cast<double>(req.forget_ids.size()) / static_cast<double>(cache.per_quote.size());
    if (baseline) {
        const ForgetOutcome ref = method == ForgetMethod::Retrain ? out : retrain_from_files(g, cache, quotes, req);
        j["param_dist_to_retrain"] = (out.theta_new.to_vec() - ref.theta_new.to_vec()).norm();
    }
    std::cout << j.dump(2) << "\n";
}

int cmd_bench(const Globals& g, BenchConfig bc) {
    ensure_run(g);
    bc.config_name = g.config;
    bc.threads = 1;
    const auto quotes = load_quotes(g);
    const auto cache = load_run_cache(g);
    const BenchReport rep = bench_sweep(bc, quotes, cache);
    write_text_file(in_run(g, "bench.csv"), bench_csv(rep.rows));
    write_text_file(in_run(g, "bench_runs.csv"), bench_runs_csv(rep.runs));
    std::cout << bench_csv(rep.rows);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& v : rep.violations) std::cerr << "violation: " << v << "\n";
    return rep.violations.empty() ? 0 : kExitInvariant;
}

int cmd_locality(const Globals& g, const LocalityConfig& lc) {
    ensure_run(g);
    const auto rows = shard_locality_study(lc, load_quotes(g), load_run_cache(g));
    write_text_file(in_run(g, "locality.csv"), locality_csv(rows));
    std::cout << locality_csv(rows);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].n_repriced > rows[i - 1].n_repriced && rows[i].time_ratio < rows[i - 1].time_ratio) {
            std::cerr << "warning: time ratio fell from " << rows[i - 1].n_affected_shards << " to "
                      << rows[i].n_affected_shards << " affected shards\n";
        }
    }
    return 0;
}

void cmd_scaling(const Globals& g, ScalingConfig sc) {
    sc.seed = g.seed;
    const auto pts = scaling_study(sc);
    fs::create_directories(g.out);
    write_text_file(in_run(g, "scaling.csv"), scaling_csv(pts));
    std::cout << scaling_csv(pts);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heston calibration with exact selective forgetting"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Experiment size")->check(CLI::IsMember({"small", "large"}));
    app.add_option("--out", g.out, "Run directory");
    app.add_option("--seed", g.seed, "Base RNG seed");
    app.add_option("--threads", g.threads, "Threads for untimed work")->check(CLI::PositiveNumber);

    auto* simulate = app.add_subcommand("simulate", "Simulate a path and write quotes.csv and meta.json");
    auto* calibrate = app.add_subcommand("calibrate", "Levenberg-Marquardt fit, writes calibration.json");
    auto* cache = app.add_subcommand("cache", "Build or inspect the forgetting cache");
    cache->require_subcommand(1);
    auto* cache_build = cache->add_subcommand("build", "Write cache.bin at the calibrated parameters");
    auto* cache_inspect = cache->add_subcommand("inspect", "Print the cache header and summary");

    auto* forget = app.add_subcommand("forget", "Forget a set of quotes");
    std::string method = "fast", ids_arg;
    double fraction = 0.0;
    forget->add_option("--method", method, "retrain, recompute or fast")
        ->check(CLI::IsMember({"retrain", "recompute", "fast"}));
    auto* ids_opt = forget->add_option("--ids", ids_arg, "Comma-separated quote ids");
    auto* frac_opt = forget->add_option("--fraction", fraction, "Forget a random fraction of quotes")
                         ->check(CLI::Range(0.0, 1.0));
    bool baseline = false;
    forget->add_flag("--baseline", baseline, "Also retrain and report the parameter distance to it");
    ids_opt->excludes(frac_opt);
    frac_opt->excludes(ids_opt);

    auto* bench = app.add_subcommand("bench", "Timing and equivalence sweep, writes bench.csv");
    BenchConfig bc;
    bench->add_option("--fractions", bc.fractions, "Forget fractions");
    bench->add_option("--repeats", bc.n_repeats, "Repeats per fraction")->check(CLI::PositiveNumber);
    bench->add_option("--bench-seed", bc.seed, "Seed for forget-set sampling");

    auto* locality = app.add_subcommand("locality", "Recompute cost against affected shards");
    LocalityConfig lc;
    locality->add_option("--shard-fraction", lc.shard_fraction, "Share of each touched shard to forget");
    locality->add_option("--repeats", lc.n_repeats, "Repeats per scenario")->check(CLI::PositiveNumber);

    auto* scaling = app.add_subcommand("scaling", "Fitted cost exponents in N, N_u and |F|");
    ScalingConfig sc;
    scaling->add_option("--repeats", sc.n_repeats, "Repeats per point")->check(CLI::PositiveNumber);

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    cache_build->fallthrough();
    cache_inspect->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) cmd_simulate(g);
        if (*calibrate) cmd_calibrate(g);
        if (*cache_build) cmd_cache_build(g);
        if (*cache_inspect) cmd_cache_inspect(g);
        if (*forget) {
            if (ids_arg.empty() && !(fraction > 0.0 && fraction < 1.0)) {
                std::cerr << "forget needs --ids or --fraction in (0, 1)\n";
                return 2;
            }
            cmd_forget(g, method, ids_arg, fraction, baseline);
        }
        if (*bench) return cmd_bench(g, bc);
        if (*locality) return cmd_locality(g, lc);
        if (*scaling) cmd_scaling(g, sc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
