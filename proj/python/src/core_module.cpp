#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hforget/bench.hpp"
#include "hforget/errors.hpp"

namespace py = pybind11;
using namespace hforget;

namespace {

ForgetRequest make_request(std::vector<QuoteId> ids, const std::string& method, double lambda) {
    return ForgetRequest(std::move(ids), forget_method_from_string(method), lambda);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Heston calibration with exact selective forgetting";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<CorruptFile>(m, "CorruptFile", base.ptr());
    py::register_exception<VersionMismatch>(m, "VersionMismatch", base.ptr());
    py::register_exception<DatasetHashMismatch>(m, "DatasetHashMismatch", base.ptr());
    py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base.ptr());
    py::register_exception<UnknownQuoteId>(m, "UnknownQuoteId", base.ptr());

    py::class_<HestonParams>(m, "HestonParams")
        .def(py::init<>())
        .def(py::init<double, double, double, double, double>(), py::arg("kappa"), py::arg("theta_v"),
             py::arg("sigma_v"), py::arg("rho"), py::arg("v0"))
        .def_readwrite("kappa", &HestonParams::kappa)
        .def_readwrite("theta_v", &HestonParams::theta_v)
        .def_readwrite("sigma_v", &HestonParams::sigma_v)
        .def_readwrite("rho", &HestonParams::rho)
        .def_readwrite("v0", &HestonParams::v0)
        .def("to_vec", &HestonParams::to_vec)
        .def_static("from_vec", &HestonParams::from_vec)
        .def("is_valid", &HestonParams::is_valid)
        .def("__eq__", [](const HestonParams& a, const HestonParams& b) { return a == b; })
        .def("__repr__", [](const HestonParams& p) {
            return "HestonParams(kappa=" + std::to_string(p.kappa) + ", theta_v=" + std::to_string(p.theta_v) +
                   ", sigma_v=" + std::to_string(p.sigma_v) + ", rho=" + std::to_string(p.rho) +
                   ", v0=" + std::to_string(p.v0) + ")";
        });

    py::class_<QuoteFeatures>(m, "QuoteFeatures")
        .def(py::init<double, double, double, double>(), py::arg("spot"), py::arg("strike"), py::arg("maturity"),
             py::arg("rate"))
        .def_readwrite("spot", &QuoteFeatures::spot)
        .def_readwrite("strike", &QuoteFeatures::strike)
        .def_readwrite("maturity", &QuoteFeatures::maturity)
        .def_readwrite("rate", &QuoteFeatures::rate);

    py::class_<QuadratureConfig>(m, "QuadratureConfig")
        .def(py::init<double, int, double>(), py::arg("u_max") = 120.0, py::arg("n_sub") = 800,
             py::arg("u_floor") = 1e-8)
        .def_readwrite("u_max", &QuadratureConfig::u_max)
        .def_readwrite("n_sub", &QuadratureConfig::n_sub)
        .def_readwrite("u_floor", &QuadratureConfig::u_floor)
        .def_static("small", &QuadratureConfig::small)
        .def_static("large", &QuadratureConfig::large);

    m.def(
        "price_call",
        [](const QuoteFeatures& x, const HestonParams& p, const QuadratureConfig& q) {
            return price_call(x, p, Quadrature(q));
        },
        py::arg("features"), py::arg("params"), py::arg("quad") = QuadratureConfig::large());
    m.def("black_scholes_call", &black_scholes_call, py::arg("spot"), py::arg("strike"), py::arg("maturity"),
          py::arg("rate"), py::arg("vol"));

    py::class_<Quote>(m, "Quote")
        .def(py::init<>())
        .def_readwrite("quote_id", &Quote::quote_id)
        .def_readwrite("day_index", &Quote::day_index)
        .def_readwrite("features", &Quote::features)
        .def_readwrite("y", &Quote::y)
        .def_readwrite("shard_id", &Quote::shard_id)
        .def_readwrite("weight", &Quote::weight);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_static("small", &ExperimentConfig::small, py::arg("seed") = 42)
        .def_static("large", &ExperimentConfig::large, py::arg("seed") = 42)
        .def_readonly("name", &ExperimentConfig::name)
        .def_readonly("quad", &ExperimentConfig::quad)
        .def_readonly("shard_days", &ExperimentConfig::shard_days)
        .def_readwrite("theta_true", &ExperimentConfig::theta_true)
        .def_readwrite("theta_init", &ExperimentConfig::theta_init);

    m.def("simulate_dataset", [](const ExperimentConfig& c, int threads) { return simulate_dataset(c, nullptr, threads); },
          py::arg("config"), py::arg("threads") = 1);
    m.def("dataset_hash", [](const std::vector<Quote>& q) { return dataset_hash(q); });
    m.def("quotes_to_csv", [](const std::vector<Quote>& q) { return quotes_to_csv(q); });

    py::class_<LmResult>(m, "LmResult")
        .def_readonly("theta_star", &LmResult::theta_star)
        .def_readonly("final_rmse", &LmResult::final_rmse)
        .def_readonly("final_loss", &LmResult::final_loss)
        .def_property_readonly("stop", [](const LmResult& r) { return to_string(r.stop); })
        .def_property_readonly("iterations", [](const LmResult& r) { return r.trace.size(); });

    m.def(
        "calibrate",
        [](const std::vector<Quote>& quotes, const HestonParams& start, const QuadratureConfig& q, int threads) {
            LmConfig cfg;
            cfg.threads = threads;
            return lm_calibrate(quotes, start, cfg, Quadrature(q), FdPolicy{});
        },
        py::arg("quotes"), py::arg("start"), py::arg("quad"), py::arg("threads") = 1);

    py::class_<UnlearnCache>(m, "UnlearnCache")
        .def_readonly("theta_ref", &UnlearnCache::theta_ref)
        .def_readonly("lambda_ridge", &UnlearnCache::lambda_ridge)
        .def_property_readonly("H", [](const UnlearnCache& c) { return Mat5(c.global.H); })
        .def_property_readonly("G", [](const UnlearnCache& c) { return Vec5(c.global.G); })
        .def_property_readonly("n_quotes", [](const UnlearnCache& c) { return c.per_quote.size(); })
        .def_property_readonly("n_shards", [](const UnlearnCache& c) { return c.per_shard.size(); })
        .def_property_readonly("dataset_hash", [](const UnlearnCache& c) { return c.meta.dataset_hash; })
        .def("serialize", [](const UnlearnCache& c) { return py::bytes(serialize_cache(c)); });

    m.def(
        "build_cache",
        [](const std::vector<Quote>& quotes, const HestonParams& theta_ref, double lambda,
           const QuadratureConfig& q, int threads) {
            return build_cache(quotes, theta_ref, lambda, Quadrature(q), FdPolicy{}, threads);
        },
        py::arg("quotes"), py::arg("theta_ref"), py::arg("lambda_ridge") = 1e-6, py::arg("quad"),
        py::arg("threads") = 1);
    m.def("deserialize_cache", [](const py::bytes& b) { return deserialize_cache(std::string(b)); });
    m.def("save_cache", &save_cache);
    m.def("load_cache", &load_cache);

    py::class_<ForgetOutcome>(m, "ForgetOutcome")
        .def_property_readonly("method", [](const ForgetOutcome& o) { return to_string(o.method); })
        .def_readonly("theta_new", &ForgetOutcome::theta_new)
        .def_readonly("delta_theta", &ForgetOutcome::delta_theta)
        .def_readonly("wall_time", &ForgetOutcome::wall_time)
        .def_readonly("n_repriced", &ForgetOutcome::n_repriced)
        .def_readonly("n_forgotten", &ForgetOutcome::n_forgotten)
        .def_readonly("n_affected_shards", &ForgetOutcome::n_affected_shards)
        .def_readonly("min_eig_Hprime", &ForgetOutcome::min_eig_Hprime)
        .def_readonly("warnings", &ForgetOutcome::warnings);

    m.def(
        "fast_refactor",
        [](const UnlearnCache& c, std::vector<QuoteId> ids) {
            return fast_refactor(c, make_request(std::move(ids), "fast", c.lambda_ridge));
        },
        py::arg("cache"), py::arg("forget_ids"));
    m.def(
        "sharded_recompute",
        [](const UnlearnCache& c, const std::vector<Quote>& quotes, std::vector<QuoteId> ids, int threads) {
            return sharded_recompute(c, QuoteStore(quotes), make_request(std::move(ids), "recompute", c.lambda_ridge),
                                     threads);
        },
        py::arg("cache"), py::arg("quotes"), py::arg("forget_ids"), py::arg("threads") = 1);
    m.def(
        "retrain",
        [](const UnlearnCache& c, const std::vector<Quote>& quotes, std::vector<QuoteId> ids, int threads) {
            if (dataset_hash(quotes) != c.meta.dataset_hash) throw DatasetHashMismatch("quotes do not match the cache");
            const ForgetRequest req = make_request(std::move(ids), "retrain", c.lambda_ridge);
            const auto kept = retained_quotes(quotes, req.forget_ids);
            return retrain_full(kept, c.theta_ref, c.lambda_ridge, Quadrature(c.meta.quad), c.meta.fd, threads);
        },
        py::arg("cache"), py::arg("quotes"), py::arg("forget_ids"), py::arg("threads") = 1);
    m.def(
        "sample_ids",
        [](const std::vector<Quote>& quotes, double fraction, std::uint64_t seed) {
            return sample_ids(quotes, forget_count(fraction, quotes.size()), seed);
        },
        py::arg("quotes"), py::arg("fraction"), py::arg("seed"));
}
