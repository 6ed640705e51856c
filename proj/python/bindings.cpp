#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <pairsem/errors.hpp>
#include <pairsem/eval.hpp>
#include <pairsem/matching.hpp>
#include <pairsem/pairgen.hpp>
#include <pairsem/pipeline.hpp>
#include <pairsem/providers.hpp>
#include <pairsem/relevance.hpp>
#include <pairsem/synth.hpp>
#include <pairsem/text.hpp>

namespace py = pybind11;
using namespace pairsem;

namespace {

std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& text)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : parse_pair_xml(text).pairs) {
        out.emplace_back(p.entity, p.aspect);
    }
    return out;
}

std::vector<std::pair<std::string, double>> fuse(
    const std::string& query_id,
    const std::vector<std::tuple<std::string, double, double, double>>& components)
{
    std::vector<ComponentScores> pool;
    for (const auto& [id, base, pair, entity] : components) {
        pool.push_back({id, base, pair, entity});
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : fuse_and_rank(query_id, std::move(pool)).entries) {
        out.emplace_back(e.doc_id, e.fused);
    }
    return out;
}

std::string run_pipeline(const std::string& workdir, const std::string& config_json)
{
    auto cfg = config_from_json(nlohmann::json::parse(config_json.empty() ? "{}" : config_json));
    std::vector<StageReport> reports;
    {
        py::gil_scoped_release release;
        Pipeline p(workdir, cfg);
        reports = p.run_all();
    }
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) {
        j.push_back(r.to_json());
    }
    return j.dump();
}

void synth(const std::string& spec_json, const std::string& out_dir)
{
    SynthSpec spec = nlohmann::json::parse(spec_json.empty() ? "{}" : spec_json).get<SynthSpec>();
    save_corpus(out_dir, spec, generate_corpus(spec));
}

}  // namespace

PYBIND11_MODULE(_pairsem, m)
{
    m.doc() = "Entity-aspect pair retrieval core";

    py::register_exception<precondition_error>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<dependency_error>(m, "DependencyError", PyExc_RuntimeError);
    py::register_exception<format_error>(m, "FormatError", PyExc_ValueError);
    py::register_exception<io_error>(m, "IoError", PyExc_OSError);
    py::register_exception<provider_error>(m, "ProviderError", PyExc_RuntimeError);

    m.def("normalize_surface", &normalize_surface);
    m.def("tokenize", [](const std::string& s) { return tokenize(s); });
    m.def("embed", [](const std::vector<std::string>& texts, std::size_t dim, std::uint64_t seed) {
        TokenHashEmbedder e(dim, seed);
        return e.embed(texts);
    }, py::arg("texts"), py::arg("dim") = 384, py::arg("seed") = 0x5eedULL);
    m.def("parse_pair_xml", &parse_pairs);
    m.def("distinctiveness", [](double own, const std::vector<double>& neighbors) {
        return distinctiveness_from_scores(own, neighbors);
    });
    m.def("fuse_and_rank", &fuse, py::arg("query_id"), py::arg("components"));
    m.def("ndcg_at_k", [](const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                          std::size_t k) { return ndcg_at_k(ranking, rel, k); });
    m.def("recall_at_k", [](const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                            std::size_t k) { return recall_at_k(ranking, rel, k); });
    m.def("synth", &synth, py::arg("spec_json"), py::arg("out_dir"));
    m.def("run_pipeline", &run_pipeline, py::arg("workdir"), py::arg("config_json") = "");
}
