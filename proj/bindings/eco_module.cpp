// Python bindings for the core operations: path-space arithmetic, the cost
// model, the fallback embedder, the mock judge, encoder inference, and
// runtime path selection over a build directory. Structured values cross the
// boundary as JSON strings; the eco_llm package wraps them as dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eco/bundle.hpp"
#include "eco/cca.hpp"
#include "eco/domain_context.hpp"
#include "eco/dsqe.hpp"
#include "eco/emulator.hpp"
#include "eco/jsonl.hpp"
#include "eco/rps.hpp"
#include "eco/synthetic.hpp"
#include "eco/tokenize.hpp"

namespace py = pybind11;
using namespace eco;

namespace {

Registry parse_registry(const std::string& registry_json) {
    return Registry::from_json(json::parse(registry_json));
}

class PyEncoder {
public:
    explicit PyEncoder(const std::string& path)
        : model_(EncoderModel::from_json(read_json(path))),
          embedder_(model_.dim) {}

    std::string assign(const std::string& text) {
        auto a = assign_prototype(model_, text, embedder_);
        json components = json::array();
        for (const auto& c : a.components) components.push_back(c.to_json());
        return json{{"prototype", a.degenerate ? -1 : static_cast<long>(a.index)},
                    {"similarity", a.similarity},
                    {"degenerate", a.degenerate},
                    {"components", components}}
            .dump();
    }

    std::size_t prototypes() const { return model_.params.prototypes.size(); }

private:
    EncoderModel model_;
    HashingEmbedder embedder_;
};

class PyBundle {
public:
    PyBundle(const std::string& artifact_dir, const std::string& build_id)
        : bundle_(BuildBundle::load(std::filesystem::path(artifact_dir) / build_id,
                                    build_id)) {}

    std::string select_path(const std::string& query, py::object max_latency_ms,
                            py::object max_cost, const std::string& profile, std::size_t k) {
        SloConstraint slo;
        if (!max_latency_ms.is_none()) slo.max_latency_ms = max_latency_ms.cast<double>();
        if (!max_cost.is_none()) slo.max_cost = max_cost.cast<double>();
        SelectOptions opts;
        opts.k = k;
        opts.profile = profile_from(profile);
        SelectionResult result =
            select(query, slo, bundle_.encoder, bundle_.stats, bundle_.component_stats,
                   bundle_.index, bundle_.paths_by_id, *bundle_.embedder, opts);
        return result.audit_json(slo, query).dump();
    }

    std::string build_id() const { return bundle_.build_id; }
    std::size_t path_count() const { return bundle_.paths.size(); }
    std::size_t record_count() const { return bundle_.records.size(); }

private:
    BuildBundle bundle_;
};

}  // namespace

PYBIND11_MODULE(_eco, m) {
    m.doc() = "Core operations of the eco edge-cloud LLM orchestration toolkit";

    py::register_exception<Error>(m, "EcoError");

    m.def("count_paths",
          [](const std::string& registry_json) { return count_paths(parse_registry(registry_json)); },
          py::arg("registry_json"),
          "Number of concrete resolution paths in a registry document");

    m.def("enumerate_path_ids",
          [](const std::string& registry_json) {
              std::vector<std::string> ids;
              for (const auto& p : enumerate_paths(parse_registry(registry_json)))
                  ids.push_back(p.canonical_id());
              return ids;
          },
          py::arg("registry_json"), "Canonical ids in deterministic enumeration order");

    m.def("build_id",
          [](const std::string& registry_json) { return parse_registry(registry_json).build_id(); },
          py::arg("registry_json"), "Content-addressed build identifier");

    m.def("resolve_dynamic",
          [](const std::string& registry_json, const std::string& environment_json) {
              std::map<std::string, json> env;
              json doc = json::parse(environment_json);
              for (const auto& [k, v] : doc.items()) env[k] = v;
              return resolve_dynamic(parse_registry(registry_json), env).to_json().dump();
          },
          py::arg("registry_json"), py::arg("environment_json"));

    m.def("estimate_cost",
          [](std::size_t query_tokens, double alpha, double beta, std::size_t max_tokens) {
              ModelEndpoint ep;
              ep.id = "py";
              ep.cost_alpha = alpha;
              ep.cost_beta = beta;
              return estimate_cost(query_tokens, ep, max_tokens);
          },
          py::arg("query_tokens"), py::arg("cost_alpha"), py::arg("cost_beta"),
          py::arg("max_tokens"), "alpha * |q| + beta * max_tokens");

    m.def("embed",
          [](const std::string& text, std::size_t dim, std::uint64_t seed) {
              HashingEmbedder embedder(dim, seed);
              return embedder.embed(text);
          },
          py::arg("text"), py::arg("dim") = 256, py::arg("seed") = 0x9e3779b97f4a7c15ull,
          "Deterministic fallback embedding (hashed character trigrams, L2-normalized)");

    m.def("cosine_sim",
          [](const std::vector<double>& a, const std::vector<double>& b) {
              return cosine_sim(a, b);
          },
          py::arg("a"), py::arg("b"));

    m.def("token_f1",
          [](const std::string& response, const std::string& reference) {
              TokenF1Judge judge;
              return judge.score(response, reference, "");
          },
          py::arg("response"), py::arg("reference"),
          "Mock judge: F1 over distinct normalized tokens");

    m.def("count_tokens",
          [](const std::string& text) { return count_tokens(text); }, py::arg("text"));

    m.def("chunk_markdown",
          [](const std::string& doc_id, const std::string& text) {
              auto doc = SourceDocument::from_markdown(doc_id, text);
              json arr = json::array();
              for (const auto& c : chunk_documents({doc})) arr.push_back(c.to_json());
              return arr.dump();
          },
          py::arg("doc_id"), py::arg("text"),
          "Chunk a markdown document; returns a JSON array string");

    m.def("make_world",
          [](const std::string& spec_json, const std::string& out_dir) {
              WorldSpec spec = WorldSpec::from_json(json::parse(spec_json));
              World world = make_world(spec);
              std::string id = world.registry.build_id();
              auto dir = std::filesystem::path(out_dir) / id;
              std::filesystem::create_directories(dir);
              write_json(dir / "registry.json", world.registry.to_json());
              write_json(dir / "world.json", world.to_json());
              std::ofstream out(dir / "queries.jsonl");
              for (const auto& q : world.queries) out << q.to_json().dump() << '\n';
              return id;
          },
          py::arg("spec_json"), py::arg("out_dir"),
          "Materialize a synthetic world build; returns its build id");

    py::class_<PyEncoder>(m, "Encoder")
        .def(py::init<const std::string&>(), py::arg("encoder_json_path"))
        .def("assign", &PyEncoder::assign, py::arg("text"),
             "Nearest-prototype assignment; returns a JSON object string")
        .def_property_readonly("prototypes", &PyEncoder::prototypes);

    py::class_<PyBundle>(m, "Bundle")
        .def(py::init<const std::string&, const std::string&>(), py::arg("artifact_dir"),
             py::arg("build_id"))
        .def("select", &PyBundle::select_path, py::arg("query"),
             py::arg("max_latency_ms") = py::none(), py::arg("max_cost") = py::none(),
             py::arg("profile") = "latency_first", py::arg("k") = 5,
             "SLO-aware path selection; returns the audit record as a JSON string")
        .def_property_readonly("build_id", &PyBundle::build_id)
        .def_property_readonly("path_count", &PyBundle::path_count)
        .def_property_readonly("record_count", &PyBundle::record_count);
}
