#include "pairsem/jsonl.hpp"

#include <cstdio>
#include <sstream>

namespace pairsem {

namespace {

void put_embedding(json& j, const std::optional<Vector>& e)
{
    if (e) {
        j["embedding"] = *e;
    }
}

std::optional<Vector> get_embedding(const json& j)
{
    if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
        return it->get<Vector>();
    }
    return std::nullopt;
}

}  // namespace

const char* to_string(PairStage s) { return s == PairStage::initial ? "initial" : "final"; }

PairStage parse_pair_stage(const std::string& s)
{
    if (s == "initial") {
        return PairStage::initial;
    }
    if (s == "final") {
        return PairStage::final;
    }
    throw format_error("unknown pair stage '" + s + "'");
}

void to_json(json& j, const Document& d)
{
    j = json{{"doc_id", d.doc_id}, {"text", d.text}};
    put_embedding(j, d.embedding);
}

void from_json(const json& j, Document& d)
{
    d.doc_id = j.at("doc_id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    d.embedding = get_embedding(j);
}

void to_json(json& j, const Query& q)
{
    j = json{{"query_id", q.query_id}, {"text", q.text}};
    put_embedding(j, q.embedding);
}

void from_json(const json& j, Query& q)
{
    q.query_id = j.at("query_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.embedding = get_embedding(j);
}

void to_json(json& j, const SemanticPair& p) { j = json{{"entity", p.entity}, {"aspect", p.aspect}}; }

void from_json(const json& j, SemanticPair& p)
{
    p.entity = j.at("entity").get<std::string>();
    p.aspect = j.at("aspect").get<std::string>();
    if (p.entity.empty() || p.aspect.empty()) {
        throw format_error("semantic pair with empty entity or aspect");
    }
}

void to_json(json& j, const PairSet& p)
{
    j = json::object();
    j[p.owner_kind() == OwnerKind::document ? "doc_id" : "query_id"] = p.owner_id();
    j["stage"] = to_string(p.stage());
    j["pairs"] = p.pairs();
}

void from_json(const json& j, PairSet& p)
{
    OwnerKind kind = j.contains("doc_id") ? OwnerKind::document : OwnerKind::query;
    std::string owner = j.at(kind == OwnerKind::document ? "doc_id" : "query_id").get<std::string>();
    PairSet out(owner, parse_pair_stage(j.at("stage").get<std::string>()), kind);
    for (const auto& pj : j.at("pairs")) {
        if (!out.add(pj.get<SemanticPair>())) {
            throw format_error("duplicate pair in pair set '" + owner + "'");
        }
    }
    p = std::move(out);
}

void to_json(json& j, const Vocabulary& v)
{
    j = json{{"entities", v.entities()},
             {"aspects", v.aspects()},
             {"entity_map", v.entity_map()},
             {"aspect_map", v.aspect_map()}};
}

void from_json(const json& j, Vocabulary& v)
{
    v = Vocabulary(j.at("entities").get<std::vector<std::string>>(),
                   j.at("aspects").get<std::vector<std::string>>(),
                   j.at("entity_map").get<std::map<std::string, std::string>>(),
                   j.at("aspect_map").get<std::map<std::string, std::string>>());
}

void to_json(json& j, const CandidateSets& c)
{
    j = json{{"doc_id", c.doc_id},
             {"candidate_entities", c.candidate_entities},
             {"candidate_aspects", c.candidate_aspects}};
}

void from_json(const json& j, CandidateSets& c)
{
    c.doc_id = j.at("doc_id").get<std::string>();
    c.candidate_entities = j.at("candidate_entities").get<std::vector<std::string>>();
    c.candidate_aspects = j.at("candidate_aspects").get<std::vector<std::string>>();
}

void to_json(json& j, const RelevanceVector& r)
{
    json values = json::object();
    if (r.keys) {
        for (std::size_t i = 0; i < r.keys->size(); ++i) {
            values[(*r.keys)[i]] = r.values.at(i);
        }
    }
    j = json{{"doc_id", r.owner_id}, {"values", std::move(values)}};
}

void from_json(const json& j, RelevanceVector& r)
{
    r.owner_id = j.contains("doc_id") ? j.at("doc_id").get<std::string>()
                                      : j.at("query_id").get<std::string>();
    std::vector<std::string> keys;
    r.values.clear();
    // json objects iterate in sorted key order.
    for (const auto& [k, v] : j.at("values").items()) {
        keys.push_back(k);
        double p = v.get<double>();
        if (!(p > 0.0 && p < 1.0)) {
            throw format_error("relevance value for '" + k + "' outside (0,1)");
        }
        r.values.push_back(p);
    }
    r.keys = std::make_shared<const std::vector<std::string>>(std::move(keys));
}

void to_json(json& j, const SoftLabels& s) { j = json{{"doc_id", s.doc_id}, {"labels", s.labels}}; }

void from_json(const json& j, SoftLabels& s)
{
    s.doc_id = j.at("doc_id").get<std::string>();
    s.labels = j.at("labels").get<std::map<std::string, double>>();
}

void to_json(json& j, const EmbeddingRecord& e) { j = json{{"id", e.id}, {"embedding", e.embedding}}; }

void from_json(const json& j, EmbeddingRecord& e)
{
    e.id = j.at("id").get<std::string>();
    e.embedding = j.at("embedding").get<Vector>();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw io_error("cannot write " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            throw io_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw io_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                       ec.message());
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_json(const std::filesystem::path& path, const json& j)
{
    write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": " + e.what());
    }
}

std::vector<RelevanceVector> load_relevance_jsonl(const std::filesystem::path& path)
{
    auto records = load_jsonl<RelevanceVector>(path);
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (*records[i].keys == *records[i - 1].keys) {
            records[i].keys = records[i - 1].keys;
        }
    }
    return records;
}

}  // namespace pairsem
