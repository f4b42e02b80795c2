#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dvhn/checkpoint.hpp"
#include "dvhn/cli.hpp"
#include "dvhn/errors.hpp"
#include "dvhn/hamming.hpp"
#include "dvhn/metrics.hpp"
#include "dvhn/selftest.hpp"
#include "dvhn/solver.hpp"

namespace py = pybind11;
using namespace dvhn;

namespace {

py::dict history_dict(const HistoryEntry& h) {
    py::dict d;
    d["t"] = h.t;
    d["triplet"] = h.losses.triplet;
    d["identity"] = h.losses.identity;
    d["quant_coupling"] = h.losses.quant_coupling;
    d["total"] = h.losses.total;
    d["recon_before_wh"] = h.recon_before_wh;
    d["recon_after_wh"] = h.recon_after_wh;
    d["recon_after_b"] = h.recon_after_b;
    d["discrete_before"] = h.discrete_before;
    d["discrete_after"] = h.discrete_after;
    return d;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["cmc"] = r.cmc;
    d["map"] = r.map;
    d["num_queries"] = r.num_queries;
    d["skipped"] = r.num_queries_skipped;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dvhn, m) {
    m.doc() = "Discrete hashing for vehicle re-identification over precomputed embeddings";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<ValidationError>(m, "ValidationError", base);
    py::register_exception<IoError>(m, "IoError", base);
    py::register_exception<ShapeError>(m, "ShapeError", base);
    py::register_exception<SamplingError>(m, "SamplingError", base);
    py::register_exception<OptimizerError>(m, "OptimizerError", base);
    py::register_exception<SingularityError>(m, "SingularityError", base);
    py::register_exception<ContractError>(m, "ContractError", base);

    py::class_<EmbeddingSet>(m, "EmbeddingSet")
        .def_property_readonly("features", [](const EmbeddingSet& s) { return s.features; })
        .def_property_readonly("labels", [](const EmbeddingSet& s) { return s.labels; })
        .def_property_readonly("identity_ids", [](const EmbeddingSet& s) { return s.identity_ids; })
        .def_property_readonly("raw_labels",
                               [](const EmbeddingSet& s) {
                                   std::vector<std::uint32_t> raw(s.size());
                                   for (std::size_t i = 0; i < s.size(); ++i) raw[i] = s.raw_label(i);
                                   return raw;
                               })
        .def("__len__", &EmbeddingSet::size)
        .def_property_readonly("dim", &EmbeddingSet::dim);

    m.def("make_embedding_set",
          [](const FeatureMatrix& features, const std::vector<std::uint32_t>& raw_labels) {
              return make_embedding_set(features, raw_labels);
          },
          py::arg("features"), py::arg("raw_labels"));
    m.def("load_embeddings", &load_embeddings, py::arg("path"));
    m.def("load_embeddings_csv", &load_embeddings_csv, py::arg("path"));
    m.def("save_embeddings", &save_embeddings, py::arg("dataset"), py::arg("path"));
    m.def("generate_synthetic", &generate_synthetic, py::arg("num_ids"), py::arg("per_id"),
          py::arg("dim"), py::arg("cluster_spread"), py::arg("seed"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("bits_K", &TrainConfig::bits_K)
        .def_readwrite("margin_alpha", &TrainConfig::margin_alpha)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("sigma", &TrainConfig::sigma)
        .def_readwrite("mu", &TrainConfig::mu)
        .def_readwrite("nu", &TrainConfig::nu)
        .def_readwrite("eta", &TrainConfig::eta)
        .def_readwrite("P", &TrainConfig::P)
        .def_readwrite("K1", &TrainConfig::K1)
        .def_readwrite("inner_iters", &TrainConfig::inner_iters)
        .def_readwrite("outer_iters_T", &TrainConfig::outer_iters_T)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("adapter_depth", &TrainConfig::adapter_depth)
        .def_readwrite("adapter_width", &TrainConfig::adapter_width)
        .def_readwrite("dcc_sweeps", &TrainConfig::dcc_sweeps)
        .def_readwrite("convergence_tol", &TrainConfig::convergence_tol)
        .def_readwrite("convergence_window", &TrainConfig::convergence_window)
        .def_readwrite("threads", &TrainConfig::threads)
        .def("validate", &TrainConfig::validate)
        .def("__str__", &format_config);
    m.def("parse_config", [](const std::string& text) { return parse_config(text); }, py::arg("text"));
    m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"));

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("bits", &ModelParams::bits)
        .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("params", &TrainResult::params)
        .def_readonly("classifier", &TrainResult::classifier)
        .def_readonly("codes", &TrainResult::codes)
        .def_readonly("converged", &TrainResult::converged)
        .def_property_readonly("history", [](const TrainResult& r) {
            py::list out;
            for (const auto& h : r.history) out.append(history_dict(h));
            return out;
        });

    m.def("train",
          [](const EmbeddingSet& dataset, const TrainConfig& cfg) {
              py::gil_scoped_release release;
              return train(dataset, cfg);
          },
          py::arg("dataset"), py::arg("config"));
    m.def("solve_wh", &solve_wh, py::arg("codes"), py::arg("targets"), py::arg("mu"), py::arg("nu"));

    m.def("save_checkpoint",
          [](const TrainResult& r, const std::filesystem::path& path) {
              save_checkpoint({r.params, r.classifier}, path);
          },
          py::arg("result"), py::arg("path"));
    m.def("load_checkpoint_params",
          [](const std::filesystem::path& path) { return load_checkpoint(path).params; },
          py::arg("path"));

    py::class_<CodeMatrix>(m, "CodeMatrix")
        .def_readonly("num_items", &CodeMatrix::num_items)
        .def_readonly("bits", &CodeMatrix::bits)
        .def_readonly("labels", &CodeMatrix::labels)
        .def("__len__", [](const CodeMatrix& c) { return c.num_items; })
        .def("__eq__", [](const CodeMatrix& a, const CodeMatrix& b) { return a == b; })
        .def("unpack", &unpack_codes)
        .def("distance", [](const CodeMatrix& c, std::size_t i, std::size_t j) {
            if (i >= c.num_items || j >= c.num_items) throw py::index_error("item index out of range");
            return hamming_distance(c.item(i), c.item(j));
        });

    m.def("pack_codes", &pack_codes, py::arg("codes"), py::arg("labels"));
    m.def("encode", &encode_set, py::arg("params"), py::arg("dataset"), py::arg("threads") = 1);
    m.def("save_codes", &save_codes, py::arg("codes"), py::arg("path"));
    m.def("load_codes", &load_codes, py::arg("path"));

    m.def("rank",
          [](const CodeMatrix& queries, std::size_t q, const CodeMatrix& gallery,
             std::optional<std::size_t> top_k) {
              if (q >= queries.num_items) throw py::index_error("query index out of range");
              if (queries.bits != gallery.bits) throw ShapeError("query and gallery code lengths differ");
              const auto r = rank_gallery(queries.item(q), gallery, top_k);
              return py::make_tuple(r.indices, r.distances);
          },
          py::arg("queries"), py::arg("query_index"), py::arg("gallery"), py::arg("top_k") = py::none());

    m.def("evaluate",
          [](const CodeMatrix& q, const CodeMatrix& g, std::size_t max_rank, bool exclude_self, int threads) {
              return report_dict(evaluate(q, g, {max_rank, exclude_self, threads}));
          },
          py::arg("queries"), py::arg("gallery"), py::arg("max_rank") = 20,
          py::arg("exclude_self") = false, py::arg("threads") = 1);

    m.def("selftest", [](const std::string& inject_fault) {
        py::list out;
        for (const auto& g : run_selftest({inject_fault})) {
            out.append(py::make_tuple(g.name, g.passed, g.detail));
        }
        return out;
    }, py::arg("inject_fault") = "");

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "dvhn");
        std::ostringstream out;
        std::ostringstream err;
        const int status = run_cli(args, out, err);
        return py::make_tuple(status, out.str(), err.str());
    }, py::arg("args"));
}
