#include "pairsem/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"
#include "pairsem/vocab.hpp"

namespace pairsem {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

// --- config ---------------------------------------------------------------------

std::string interpolate_env(const std::string& s)
{
    static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    std::string out;
    auto begin = std::sregex_iterator(s.begin(), s.end(), var);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        out += s.substr(last, static_cast<std::size_t>(it->position()) - last);
        const char* v = std::getenv((*it)[1].str().c_str());
        out += v ? v : "";
        last = static_cast<std::size_t>(it->position() + it->length());
    }
    out += s.substr(last);
    return out;
}

namespace {

const char* to_string(FrequencyMode m)
{
    return m == FrequencyMode::source_count ? "source_count" : "occurrences";
}

FrequencyMode parse_frequency(const std::string& s)
{
    if (s == "source_count") {
        return FrequencyMode::source_count;
    }
    if (s == "occurrences") {
        return FrequencyMode::occurrences;
    }
    throw format_error("unknown frequency mode '" + s + "'");
}

const char* to_string(LabelNormalization n)
{
    return n == LabelNormalization::all_entities ? "all_entities" : "positives";
}

LabelNormalization parse_normalization(const std::string& s)
{
    if (s == "all_entities") {
        return LabelNormalization::all_entities;
    }
    if (s == "positives") {
        return LabelNormalization::positives;
    }
    throw format_error("unknown label normalization '" + s + "'");
}

json train_to_json(const TrainConfig& t)
{
    return {{"layers", t.layers},
            {"learning_rate", t.learning_rate},
            {"weight_decay", t.weight_decay},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"seed", t.seed},
            {"negatives", t.negatives},
            {"full_negatives_limit", t.full_negatives_limit},
            {"sampled_negatives", t.sampled_negatives},
            {"patience", t.patience},
            {"min_rel_improvement", t.min_rel_improvement},
            {"backtrack", t.backtrack}};
}

/// Reads known keys of one JSON object and rejects the rest.
class Reader {
  public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) {
            throw format_error("config section '" + where_ + "' must be an object");
        }
    }
    ~Reader() noexcept(false)
    {
        if (std::uncaught_exceptions()) {
            return;
        }
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) {
                throw format_error("unknown config field '" + where_ + "." + k + "'");
            }
        }
    }
    template <typename T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        if (j_.contains(key)) {
            try {
                j_.at(key).get_to(out);
            } catch (const json::exception& e) {
                throw format_error("config field '" + where_ + "." + key + "': " + e.what());
            }
        }
    }
    const json* section(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

  private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void train_from_json(const json& j, TrainConfig& t, const std::string& where)
{
    Reader r(j, where);
    r.get("layers", t.layers);
    r.get("learning_rate", t.learning_rate);
    r.get("weight_decay", t.weight_decay);
    r.get("epochs", t.epochs);
    r.get("batch_size", t.batch_size);
    r.get("seed", t.seed);
    r.get("negatives", t.negatives);
    r.get("full_negatives_limit", t.full_negatives_limit);
    r.get("sampled_negatives", t.sampled_negatives);
    r.get("patience", t.patience);
    r.get("min_rel_improvement", t.min_rel_improvement);
    r.get("backtrack", t.backtrack);
    if (t.layers == 0 || t.epochs == 0 || t.batch_size == 0) {
        throw format_error("config section '" + where + "': layers, epochs and batch_size must be positive");
    }
}

}  // namespace

nlohmann::json config_to_json(const PipelineConfig& c)
{
    const auto& p = c.provider;
    return {{"provider",
             {{"llm", p.llm},
              {"embedder", p.embedder},
              {"api_base", p.api_base},
              {"api_key", p.api_key},
              {"model", p.model},
              {"embedding_model", p.embedding_model},
              {"fixtures_dir", p.fixtures_dir},
              {"lexicon", p.lexicon},
              {"dim", p.dim},
              {"embed_seed", p.embed_seed},
              {"parallelism", p.parallelism},
              {"max_attempts", p.max_attempts},
              {"timeout_s", p.timeout_s},
              {"temperature", p.temperature},
              {"max_tokens", p.max_tokens},
              {"cost_per_1k_prompt", p.cost_per_1k_prompt},
              {"cost_per_1k_completion", p.cost_per_1k_completion}}},
            {"candidates", {{"M", c.M}, {"knn", c.knn}, {"frequency", to_string(c.frequency)}}},
            {"vocab", {{"max_cluster_size", c.max_cluster_size}}},
            {"labels", {{"normalization", to_string(c.label_normalization)}}},
            {"train", {{"entity", train_to_json(c.entity_train)}, {"aspect", train_to_json(c.aspect_train)}}},
            {"inference",
             {{"mode", to_string(c.inference.mode)},
              {"N_e", c.inference.n_entities},
              {"N_a", c.inference.n_aspects},
              {"pool", c.inference.rerank_pool_size},
              {"normalize_entity", c.inference.normalize_entity_scores},
              {"query_candidates", c.inference.query_candidates},
              {"k", c.k}}},
            {"threads", c.threads},
            {"paths", {{"documents", c.documents}, {"queries", c.queries}, {"qrels", c.qrels}}},
            {"metrics", c.metrics}};
}

PipelineConfig config_from_json(const nlohmann::json& j)
{
    PipelineConfig c;
    Reader top(j, "config");
    if (const json* s = top.section("provider")) {
        Reader r(*s, "provider");
        auto& p = c.provider;
        r.get("llm", p.llm);
        r.get("embedder", p.embedder);
        r.get("api_base", p.api_base);
        r.get("api_key", p.api_key);
        r.get("model", p.model);
        r.get("embedding_model", p.embedding_model);
        r.get("fixtures_dir", p.fixtures_dir);
        r.get("lexicon", p.lexicon);
        r.get("dim", p.dim);
        r.get("embed_seed", p.embed_seed);
        r.get("parallelism", p.parallelism);
        r.get("max_attempts", p.max_attempts);
        r.get("timeout_s", p.timeout_s);
        r.get("temperature", p.temperature);
        r.get("max_tokens", p.max_tokens);
        r.get("cost_per_1k_prompt", p.cost_per_1k_prompt);
        r.get("cost_per_1k_completion", p.cost_per_1k_completion);
        static const std::set<std::string> llms = {"oracle", "replay", "http", "record"};
        if (!llms.count(p.llm)) {
            throw format_error("unknown llm provider '" + p.llm + "'");
        }
        if (p.embedder != "token-hash" && p.embedder != "http") {
            throw format_error("unknown embedder '" + p.embedder + "'");
        }
    }
    if (const json* s = top.section("candidates")) {
        Reader r(*s, "candidates");
        std::string freq = to_string(c.frequency);
        r.get("M", c.M);
        r.get("knn", c.knn);
        r.get("frequency", freq);
        c.frequency = parse_frequency(freq);
    }
    if (const json* s = top.section("vocab")) {
        Reader r(*s, "vocab");
        r.get("max_cluster_size", c.max_cluster_size);
    }
    if (const json* s = top.section("labels")) {
        Reader r(*s, "labels");
        std::string norm = to_string(c.label_normalization);
        r.get("normalization", norm);
        c.label_normalization = parse_normalization(norm);
    }
    if (const json* s = top.section("train")) {
        Reader r(*s, "train");
        if (const json* e = r.section("entity")) {
            train_from_json(*e, c.entity_train, "train.entity");
        }
        if (const json* a = r.section("aspect")) {
            train_from_json(*a, c.aspect_train, "train.aspect");
        }
    }
    if (const json* s = top.section("inference")) {
        Reader r(*s, "inference");
        std::string mode = to_string(c.inference.mode);
        r.get("mode", mode);
        c.inference.mode = parse_inference_mode(mode);
        r.get("N_e", c.inference.n_entities);
        r.get("N_a", c.inference.n_aspects);
        r.get("pool", c.inference.rerank_pool_size);
        r.get("normalize_entity", c.inference.normalize_entity_scores);
        r.get("query_candidates", c.inference.query_candidates);
        r.get("k", c.k);
    }
    top.get("threads", c.threads);
    if (const json* s = top.section("paths")) {
        Reader r(*s, "paths");
        r.get("documents", c.documents);
        r.get("queries", c.queries);
        r.get("qrels", c.qrels);
    }
    top.get("metrics", c.metrics);
    if (c.M == 0 || c.knn == 0 || c.max_cluster_size == 0 || c.k == 0 || c.threads == 0) {
        throw format_error("M, knn, max_cluster_size, k and threads must be positive");
    }
    c.inference.validate(c.k > c.inference.rerank_pool_size ? 0 : c.k);
    return c;
}

PipelineConfig load_config(const fs::path& path)
{
    json j = load_json(path);
    std::function<void(json&)> walk = [&](json& node) {
        if (node.is_string()) {
            node = interpolate_env(node.get<std::string>());
        } else if (node.is_structured()) {
            for (auto& child : node) {
                walk(child);
            }
        }
    };
    walk(j);
    return config_from_json(j);
}

// --- reports --------------------------------------------------------------------

namespace {

json usage_json(const UsageTotals& u)
{
    return {{"calls", u.calls},
            {"prompt_tokens", u.prompt_tokens},
            {"completion_tokens", u.completion_tokens},
            {"latency_ms", u.latency_ms}};
}

UsageTotals usage_from_json(const json& j)
{
    UsageTotals u;
    u.calls = j.value("calls", std::size_t{0});
    u.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
    u.completion_tokens = j.value("completion_tokens", std::size_t{0});
    u.latency_ms = j.value("latency_ms", 0.0);
    return u;
}

UsageTotals minus(const UsageTotals& a, const UsageTotals& b)
{
    return {a.calls - b.calls, a.prompt_tokens - b.prompt_tokens,
            a.completion_tokens - b.completion_tokens, a.latency_ms - b.latency_ms};
}

std::string file_digest(const fs::path& p) { return sha256_hex(read_file(p)); }

/// Stage that produces each artifact.
const std::map<std::string, std::string>& producers()
{
    static const std::map<std::string, std::string> m = {
        {artifacts::doc_embeddings, "embed"},
        {artifacts::pairs_init, "gen-pairs-zero-shot"},
        {artifacts::vocab, "build-vocab"},
        {artifacts::entity_embeddings, "build-vocab"},
        {artifacts::aspect_embeddings, "build-vocab"},
        {artifacts::candidates, "gen-candidates"},
        {artifacts::pairs_final, "gen-pairs-candidate"},
        {artifacts::labels, "soft-labels"},
        {artifacts::entity_model, "train-entity"},
        {artifacts::relevance, "train-entity"},
        {artifacts::aspect_model, "train-aspect"},
    };
    return m;
}

std::string command_for(const std::string& stage)
{
    if (stage == "gen-pairs-zero-shot") {
        return "gen-pairs --mode zero-shot";
    }
    if (stage == "gen-pairs-candidate") {
        return "gen-pairs --mode candidate";
    }
    if (stage == "train-entity") {
        return "train --target entity";
    }
    if (stage == "train-aspect") {
        return "train --target aspect";
    }
    return stage;
}

template <typename T>
void save_records(const std::vector<T>& v, const fs::path& p)
{
    save_jsonl(v, p);
}

std::vector<PairSet> ordered_pairs(const std::vector<Document>& docs, const PairSetMap& m)
{
    std::vector<PairSet> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        out.push_back(m.at(d.doc_id));
    }
    return out;
}

PairSetMap load_pair_map(const fs::path& p)
{
    PairSetMap m;
    for (auto& ps : load_jsonl<PairSet>(p)) {
        std::string id = ps.owner_id();
        if (!m.emplace(id, std::move(ps)).second) {
            throw format_error("duplicate pair set for '" + id + "' in " + p.string());
        }
    }
    return m;
}

EmbeddingTable load_table(const fs::path& p)
{
    auto records = load_jsonl<EmbeddingRecord>(p);
    std::vector<std::string> ids;
    std::vector<Vector> vecs;
    ids.reserve(records.size());
    vecs.reserve(records.size());
    for (auto& r : records) {
        ids.push_back(std::move(r.id));
        vecs.push_back(std::move(r.embedding));
    }
    return EmbeddingTable(std::move(ids), vecs);
}

std::vector<EmbeddingRecord> to_records(const std::vector<std::string>& ids,
                                        std::vector<Vector> vecs)
{
    std::vector<EmbeddingRecord> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.push_back({ids[i], std::move(vecs[i])});
    }
    return out;
}

json stats_json(const GenerationStats& s)
{
    return {{"documents", s.documents},
            {"total_pairs", s.total_pairs},
            {"pairs_per_doc", s.pairs_per_doc()},
            {"retries", s.retries},
            {"empty_documents", s.empty_documents},
            {"malformed_fragments", s.malformed_fragments},
            {"unknown_dropped", s.unknown_dropped},
            {"outside_candidates", s.outside_candidates},
            {"truncated_prompts", s.truncated_prompts},
            {"failed_doc_ids", s.failed_doc_ids}};
}

json side_json(const SideReport& s)
{
    json hist = json::object();
    for (const auto& [size, count] : s.cluster_size_histogram) {
        hist[std::to_string(size)] = count;
    }
    return {{"initial", s.initial},
            {"final", s.final},
            {"clusters", s.clusters},
            {"cluster_size_histogram", hist},
            {"llm_calls", s.llm_calls},
            {"fail_open_clusters", s.fail_open_clusters},
            {"representative_collisions", s.representative_collisions}};
}

}  // namespace

nlohmann::json StageReport::to_json() const
{
    return {{"stage", stage},
            {"up_to_date", up_to_date},
            {"seconds", seconds},
            {"llm", usage_json(llm)},
            {"embedding", usage_json(embedding)},
            {"cost_usd", cost_usd},
            {"warnings", warnings},
            {"details", details}};
}

nlohmann::json SweepReport::to_json() const
{
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"value", r.value}, {"metrics", r.metrics}});
    }
    return {{"parameter", parameter}, {"base", base_metrics}, {"rows", rows_j}};
}

std::string SweepReport::table() const
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(10) << parameter;
    for (const auto& [label, v] : base_metrics) {
        out << std::setw(12) << label;
    }
    out << '\n' << std::setw(10) << "base";
    for (const auto& [label, v] : base_metrics) {
        out << std::setw(12) << v;
    }
    out << '\n';
    for (const auto& r : rows) {
        out << std::setw(10) << r.value;
        for (const auto& [label, v] : base_metrics) {
            auto it = r.metrics.find(label);
            out << std::setw(12) << (it == r.metrics.end() ? 0.0 : it->second);
        }
        out << '\n';
    }
    return out.str();
}

// --- pipeline -------------------------------------------------------------------

class Pipeline::Lock {
  public:
    explicit Lock(fs::path path) : path_(std::move(path))
    {
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw error("working directory is locked by another stage (" + path_.string() +
                        "); remove the file if no stage is running");
        }
        std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~Lock()
    {
        std::error_code ec;
        fs::remove(path_, ec);
    }

  private:
    fs::path path_;
};

Pipeline::Pipeline(fs::path workdir, PipelineConfig cfg, RunOptions opts)
    : dir_(std::move(workdir)), cfg_(std::move(cfg)), opts_(opts)
{
    fs::create_directories(dir_);
    fs::create_directories(dir_ / "reports");
    lock_ = std::make_unique<Lock>(dir_ / ".pairsem.lock");
}

Pipeline::~Pipeline() = default;

LlmProvider& Pipeline::llm()
{
    if (llm_) {
        return *llm_;
    }
    const auto& p = cfg_.provider;
    auto http = [&] {
        HttpProviderConfig h;
        h.api_base = interpolate_env(p.api_base);
        h.api_key = interpolate_env(p.api_key);
        h.model = p.model;
        h.max_attempts = p.max_attempts;
        h.timeout_s = p.timeout_s;
        h.parallelism = p.parallelism;
        if (h.api_base.empty()) {
            throw precondition_error("http provider needs api_base (set PAIRSEM_API_BASE)");
        }
        return std::make_shared<HttpLlm>(h);
    };
    if (p.llm == "oracle") {
        std::map<std::string, std::string> lexicon;
        fs::path lex = path(p.lexicon);
        if (fs::exists(lex)) {
            lexicon = load_json(lex).get<std::map<std::string, std::string>>();
        }
        llm_ = std::make_shared<OracleExtractorLlm>(std::move(lexicon));
    } else if (p.llm == "replay") {
        llm_ = std::make_shared<ReplayLlm>(path(p.fixtures_dir));
    } else if (p.llm == "http") {
        llm_ = http();
    } else if (p.llm == "record") {
        llm_ = std::make_shared<RecordingLlm>(http(), path(p.fixtures_dir));
    } else {
        throw precondition_error("unknown llm provider '" + p.llm + "'");
    }
    return *llm_;
}

EmbeddingProvider& Pipeline::embedder()
{
    if (embedder_) {
        return *embedder_;
    }
    const auto& p = cfg_.provider;
    if (p.embedder == "token-hash") {
        embedder_ = std::make_shared<TokenHashEmbedder>(p.dim, p.embed_seed);
    } else if (p.embedder == "http") {
        HttpProviderConfig h;
        h.api_base = interpolate_env(p.api_base);
        h.api_key = interpolate_env(p.api_key);
        h.model = p.embedding_model;
        h.max_attempts = p.max_attempts;
        h.timeout_s = p.timeout_s;
        h.parallelism = p.parallelism;
        if (h.api_base.empty()) {
            throw precondition_error("http embedder needs api_base (set PAIRSEM_API_BASE)");
        }
        embedder_ = std::make_shared<HttpEmbedder>(h, p.dim);
    } else {
        throw precondition_error("unknown embedder '" + p.embedder + "'");
    }
    return *embedder_;
}

PromptOptions Pipeline::prompt_options() const
{
    return {cfg_.provider.temperature, cfg_.provider.max_tokens};
}

void Pipeline::check_inputs(const std::string& stage, const std::vector<std::string>& inputs) const
{
    for (const auto& in : inputs) {
        auto prod = producers().find(in);
        if (!fs::exists(path(in))) {
            if (prod != producers().end()) {
                throw dependency_error(stage + " needs " + in + "; run `pairsem " +
                                       command_for(prod->second) + "` first");
            }
            throw dependency_error(stage + " needs " + in + " in " + dir_.string());
        }
        if (opts_.force || prod == producers().end()) {
            continue;
        }
        fs::path stamp = dir_ / "reports" / (prod->second + ".json");
        if (!fs::exists(stamp)) {
            continue;
        }
        json s = load_json(stamp);
        const json& outs = s.at("outputs");
        if (outs.contains(in) && outs.at(in) != file_digest(path(in))) {
            throw dependency_error(in + " changed after `pairsem " + command_for(prod->second) +
                                   "` wrote it; re-run that stage or pass --force");
        }
        for (const auto& [name, digest] : s.at("inputs").items()) {
            if (!fs::exists(path(name)) || digest != file_digest(path(name))) {
                throw dependency_error(in + " is stale: its input " + name + " changed; re-run `pairsem " +
                                       command_for(prod->second) + "` or pass --force");
            }
        }
    }
}

bool Pipeline::up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs, const json& params) const
{
    if (opts_.force) {
        return false;
    }
    fs::path stamp = dir_ / "reports" / (stage + ".json");
    if (!fs::exists(stamp)) {
        return false;
    }
    json s;
    try {
        s = load_json(stamp);
    } catch (const error&) {
        return false;
    }
    if (!s.contains("params") || s.at("params") != params) {
        return false;
    }
    for (const auto& in : inputs) {
        if (!s.at("inputs").contains(in) || s.at("inputs").at(in) != file_digest(path(in))) {
            return false;
        }
    }
    for (const auto& out : outputs) {
        if (!fs::exists(path(out)) || !s.at("outputs").contains(out) ||
            s.at("outputs").at(out) != file_digest(path(out))) {
            return false;
        }
    }
    return true;
}

StageReport Pipeline::skipped(const std::string& stage) const
{
    StageReport r;
    r.stage = stage;
    r.up_to_date = true;
    json s = load_json(dir_ / "reports" / (stage + ".json"));
    if (s.contains("report")) {
        r.details = s.at("report").value("details", json::object());
    }
    return r;
}

StageReport Pipeline::finish(StageReport report, const std::vector<std::string>& inputs,
                             const std::vector<std::string>& outputs, const json& params,
                             clock_type::time_point start, const UsageTotals& llm_before,
                             const UsageTotals& embed_before)
{
    report.seconds = std::chrono::duration<double>(clock_type::now() - start).count();
    if (llm_) {
        report.llm = minus(llm_->log().totals(), llm_before);
    }
    if (embedder_) {
        report.embedding = minus(embedder_->log().totals(), embed_before);
    }
    const auto& p = cfg_.provider;
    report.cost_usd = (static_cast<double>(report.llm.prompt_tokens + report.embedding.prompt_tokens) *
                           p.cost_per_1k_prompt +
                       static_cast<double>(report.llm.completion_tokens) * p.cost_per_1k_completion) /
                      1000.0;
    json in = json::object(), out = json::object();
    for (const auto& i : inputs) {
        in[i] = file_digest(path(i));
    }
    for (const auto& o : outputs) {
        out[o] = file_digest(path(o));
    }
    json stamp = {{"stage", report.stage},
                  {"inputs", in},
                  {"outputs", out},
                  {"params", params},
                  {"report", report.to_json()}};
    save_json(dir_ / "reports" / (report.stage + ".json"), stamp);
    return report;
}

namespace {

struct UsageMark {
    UsageTotals llm, embed;
};

}  // namespace

#define PAIRSEM_STAGE_BEGIN(name, inputs, outputs, params)                                    \
    const std::string stage_name = (name);                                                     \
    check_inputs(stage_name, inputs);                                                          \
    if (up_to_date(stage_name, inputs, outputs, params)) {                                     \
        return skipped(stage_name);                                                            \
    }                                                                                          \
    auto stage_start = clock_type::now();                                                      \
    UsageMark mark{llm_ ? llm_->log().totals() : UsageTotals{},                                \
                   embedder_ ? embedder_->log().totals() : UsageTotals{}};                     \
    StageReport report;                                                                        \
    report.stage = stage_name

#define PAIRSEM_STAGE_END(inputs, outputs, params) \
    return finish(std::move(report), inputs, outputs, params, stage_start, mark.llm, mark.embed)

std::vector<Document> Pipeline::load_documents(bool with_embeddings) const
{
    auto docs = load_jsonl<Document>(path(cfg_.documents));
    if (docs.empty()) {
        throw precondition_error(cfg_.documents + " has no documents");
    }
    if (with_embeddings) {
        auto table = load_table(path(artifacts::doc_embeddings));
        for (auto& d : docs) {
            auto i = table.index(d.doc_id);
            if (!i) {
                throw dependency_error("no embedding for document '" + d.doc_id +
                                       "'; run `pairsem embed`");
            }
            auto row = table.row(*i);
            d.embedding = Vector(row.begin(), row.end());
        }
    }
    return docs;
}

StageReport Pipeline::embed_documents()
{
    const std::vector<std::string> inputs = {cfg_.documents};
    const std::vector<std::string> outputs = {artifacts::doc_embeddings};
    const json params = {{"embedder", cfg_.provider.embedder},
                         {"dim", cfg_.provider.dim},
                         {"seed", cfg_.provider.embed_seed},
                         {"model", cfg_.provider.embedding_model}};
    PAIRSEM_STAGE_BEGIN("embed", inputs, outputs, params);
    auto docs = load_documents(false);
    std::vector<std::string> ids, texts;
    for (const auto& d : docs) {
        ids.push_back(d.doc_id);
        texts.push_back(d.text);
    }
    auto vecs = embedder().embed(texts);
    save_records(to_records(ids, std::move(vecs)), path(artifacts::doc_embeddings));
    report.details = {{"documents", docs.size()}, {"dim", embedder().dim()}};
    if (auto* th = dynamic_cast<TokenHashEmbedder*>(embedder_.get())) {
        report.details["fallback_embeddings"] = th->fallback_count();
    }
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::gen_pairs(GenerationMode mode)
{
    const bool cand = mode == GenerationMode::candidate_augmented;
    std::vector<std::string> inputs = {cfg_.documents};
    if (cand) {
        inputs.push_back(artifacts::candidates);
        inputs.push_back(artifacts::vocab);
    }
    const std::vector<std::string> outputs = {cand ? artifacts::pairs_final : artifacts::pairs_init};
    const json params = {{"llm", cfg_.provider.llm},
                         {"model", cfg_.provider.model},
                         {"temperature", cfg_.provider.temperature},
                         {"max_tokens", cfg_.provider.max_tokens}};
    PAIRSEM_STAGE_BEGIN(cand ? "gen-pairs-candidate" : "gen-pairs-zero-shot", inputs, outputs, params);
    auto docs = load_documents(false);
    std::map<std::string, CandidateSets> candidates;
    std::optional<Vocabulary> vocab;
    if (cand) {
        for (auto& c : load_jsonl<CandidateSets>(path(artifacts::candidates))) {
            std::string id = c.doc_id;
            candidates.emplace(id, std::move(c));
        }
        vocab = load_json(path(artifacts::vocab)).get<Vocabulary>();
    }
    GenerationOptions gopts{prompt_options(), static_cast<std::size_t>(std::max(1, cfg_.provider.parallelism))};
    auto result = generate_pairs_for_corpus(docs, mode, llm(), cand ? &candidates : nullptr,
                                            vocab ? &*vocab : nullptr, gopts);
    save_records(ordered_pairs(docs, result.pairs), path(outputs.front()));
    report.details = stats_json(result.stats);
    report.warnings = result.stats.failed_doc_ids.size();
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::build_vocab()
{
    const std::vector<std::string> inputs = {artifacts::pairs_init};
    const std::vector<std::string> outputs = {artifacts::vocab, artifacts::entity_embeddings,
                                              artifacts::aspect_embeddings};
    const json params = {{"max_cluster_size", cfg_.max_cluster_size},
                         {"llm", cfg_.provider.llm},
                         {"model", cfg_.provider.model},
                         {"embedder", cfg_.provider.embedder},
                         {"dim", cfg_.provider.dim},
                         {"seed", cfg_.provider.embed_seed}};
    PAIRSEM_STAGE_BEGIN("build-vocab", inputs, outputs, params);
    auto initial = collect_initial_sets(load_pair_map(path(artifacts::pairs_init)));
    VocabularyOptions vopts{cfg_.max_cluster_size,
                            static_cast<std::size_t>(std::max(1, cfg_.provider.parallelism)),
                            prompt_options()};
    auto built = build_vocabulary(initial, embedder(), llm(), vopts);
    save_json(path(artifacts::vocab), json(built.vocab));
    const auto& ents = built.vocab.entities();
    const auto& asps = built.vocab.aspects();
    save_records(to_records(ents, embedder().embed(ents)), path(artifacts::entity_embeddings));
    save_records(to_records(asps, embedder().embed(asps)), path(artifacts::aspect_embeddings));
    report.details = {{"entities", side_json(built.entities)}, {"aspects", side_json(built.aspects)}};
    report.warnings = built.entities.fail_open_clusters + built.aspects.fail_open_clusters;
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::gen_candidates()
{
    embed_documents();
    const std::vector<std::string> inputs = {cfg_.documents, artifacts::doc_embeddings,
                                             artifacts::pairs_init, artifacts::vocab};
    const std::vector<std::string> outputs = {artifacts::candidates};
    const json params = {{"M", cfg_.M}, {"knn", cfg_.knn}, {"frequency", to_string(cfg_.frequency)}};
    PAIRSEM_STAGE_BEGIN("gen-candidates", inputs, outputs, params);
    auto docs = load_documents(true);
    auto init = load_pair_map(path(artifacts::pairs_init));
    auto vocab = load_json(path(artifacts::vocab)).get<Vocabulary>();
    auto index = build_neighbor_index(docs, cfg_.knn);
    CandidateOptions copts;
    copts.max_candidates = cfg_.M;
    copts.frequency = cfg_.frequency;
    auto built = build_candidates(docs, init, vocab, index, copts, cfg_.threads);
    save_records(built.sets, path(artifacts::candidates));
    double mean_e = 0.0, mean_a = 0.0;
    for (const auto& c : built.sets) {
        mean_e += static_cast<double>(c.candidate_entities.size());
        mean_a += static_cast<double>(c.candidate_aspects.size());
    }
    double n = static_cast<double>(std::max<std::size_t>(1, built.sets.size()));
    report.details = {{"documents", built.sets.size()},
                      {"mean_candidate_entities", mean_e / n},
                      {"mean_candidate_aspects", mean_a / n},
                      {"empty_entity_lists", built.empty_entity_lists},
                      {"empty_aspect_lists", built.empty_aspect_lists}};
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::soft_labels()
{
    const std::vector<std::string> inputs = {cfg_.documents, artifacts::doc_embeddings,
                                             artifacts::pairs_final, artifacts::vocab};
    const std::vector<std::string> outputs = {artifacts::labels};
    const json params = {{"knn", cfg_.knn}, {"normalization", to_string(cfg_.label_normalization)}};
    PAIRSEM_STAGE_BEGIN("soft-labels", inputs, outputs, params);
    auto docs = load_documents(true);
    auto final_pairs = load_pair_map(path(artifacts::pairs_final));
    auto vocab = load_json(path(artifacts::vocab)).get<Vocabulary>();
    auto index = build_neighbor_index(docs, cfg_.knn);
    auto labels = build_soft_labels(docs, final_pairs, vocab, index, cfg_.label_normalization,
                                    cfg_.threads);
    save_records(labels, path(artifacts::labels));
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& l : labels) {
        for (const auto& [e, y] : l.labels) {
            sum += y;
            ++n;
        }
    }
    report.details = {{"documents", labels.size()},
                      {"labels", n},
                      {"mean_label", n ? sum / static_cast<double>(n) : 0.0}};
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::train(TrainTarget target)
{
    const bool entity = target == TrainTarget::entity;
    std::vector<std::string> inputs = {artifacts::doc_embeddings, artifacts::pairs_final,
                                       artifacts::entity_embeddings};
    std::vector<std::string> outputs;
    if (entity) {
        inputs.push_back(artifacts::labels);
        outputs = {artifacts::entity_model, artifacts::relevance};
    } else {
        inputs.push_back(artifacts::aspect_embeddings);
        outputs = {artifacts::aspect_model};
    }
    const TrainConfig& tc = entity ? cfg_.entity_train : cfg_.aspect_train;
    const json params = train_to_json(tc);
    PAIRSEM_STAGE_BEGIN(entity ? "train-entity" : "train-aspect", inputs, outputs, params);
    auto docs_table = load_table(path(artifacts::doc_embeddings));
    auto final_pairs = load_pair_map(path(artifacts::pairs_final));
    auto entities = load_table(path(artifacts::entity_embeddings));
    const auto& doc_ids = docs_table.ids();
    TrainingReport tr;
    Mlp model;
    double p10 = 0.0;
    if (entity) {
        std::map<std::string, SoftLabels> labels;
        for (auto& l : load_jsonl<SoftLabels>(path(artifacts::labels))) {
            std::string id = l.doc_id;
            labels.emplace(id, std::move(l));
        }
        auto data = entity_training_set(doc_ids, docs_table, final_pairs, labels, entities);
        model = train_entity_predictor(data, tc, &tr);
        model.save(path(artifacts::entity_model).string());
        std::vector<RelevanceVector> rel;
        rel.reserve(doc_ids.size());
        for (std::size_t i = 0; i < doc_ids.size(); ++i) {
            rel.push_back(relevance_vector(model, doc_ids[i], docs_table.row(i), entities));
        }
        save_records(rel, path(artifacts::relevance));
        p10 = entity_precision_at_k(model, doc_ids, docs_table, final_pairs, entities, 10);
    } else {
        auto aspects = load_table(path(artifacts::aspect_embeddings));
        auto data = aspect_training_set(doc_ids, docs_table, final_pairs, entities, aspects);
        model = train_aspect_predictor(data, tc, &tr);
        model.save(path(artifacts::aspect_model).string());
        p10 = aspect_precision_at_k(model, doc_ids, docs_table, final_pairs, entities, aspects, 10);
    }
    report.details = {{"epoch_losses", tr.epoch_losses},
                      {"epochs_run", tr.epochs_run},
                      {"rejected_epochs", tr.rejected_epochs},
                      {"final_learning_rate", tr.final_learning_rate},
                      {"early_stopped", tr.early_stopped},
                      {"negatives_per_example", tr.negatives_per_example},
                      {"p_at_10", p10}};
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::eval_predictors()
{
    const std::vector<std::string> inputs = {artifacts::doc_embeddings, artifacts::pairs_final,
                                             artifacts::entity_embeddings, artifacts::aspect_embeddings,
                                             artifacts::entity_model, artifacts::aspect_model};
    check_inputs("eval-predictors", inputs);
    auto start = clock_type::now();
    UsageMark mark{llm_ ? llm_->log().totals() : UsageTotals{},
                   embedder_ ? embedder_->log().totals() : UsageTotals{}};
    StageReport report;
    report.stage = "eval-predictors";
    auto docs_table = load_table(path(artifacts::doc_embeddings));
    auto final_pairs = load_pair_map(path(artifacts::pairs_final));
    auto entities = load_table(path(artifacts::entity_embeddings));
    auto aspects = load_table(path(artifacts::aspect_embeddings));
    auto f = Mlp::load(path(artifacts::entity_model).string());
    auto g = Mlp::load(path(artifacts::aspect_model).string());
    report.details = {
        {"entity_p_at_10",
         entity_precision_at_k(f, docs_table.ids(), docs_table, final_pairs, entities, 10)},
        {"aspect_p_at_10", aspect_precision_at_k(g, docs_table.ids(), docs_table, final_pairs,
                                                 entities, aspects, 10)},
        {"documents", docs_table.size()}};
    return finish(std::move(report), inputs, {}, json::object(), start, mark.llm, mark.embed);
}

std::map<std::string, double> Pipeline::score_queries(const InferenceConfig& inference, std::size_t k,
                                                      Run* fused_run, Run* base_run,
                                                      std::vector<PairSet>* query_pairs,
                                                      std::vector<ScoredRanking>* rankings)
{
    inference.validate(std::min(k, inference.rerank_pool_size));
    auto queries = load_jsonl<Query>(path(cfg_.queries));
    if (queries.empty()) {
        throw precondition_error(cfg_.queries + " has no queries");
    }
    std::vector<std::string> texts;
    for (const auto& q : queries) {
        validate(q);
        texts.push_back(q.text);
    }
    auto qvecs = embedder().embed(texts);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        queries[i].embedding = std::move(qvecs[i]);
    }
    auto docs_table = load_table(path(artifacts::doc_embeddings));
    auto final_pairs = load_pair_map(path(artifacts::pairs_final));
    auto entities = load_table(path(artifacts::entity_embeddings));
    auto aspects = load_table(path(artifacts::aspect_embeddings));
    std::map<std::string, RelevanceVector> doc_rel;
    for (auto& r : load_relevance_jsonl(path(artifacts::relevance))) {
        std::string id = r.owner_id;
        doc_rel.emplace(id, std::move(r));
    }
    auto f = Mlp::load(path(artifacts::entity_model).string());
    std::optional<Mlp> g;
    if (fs::exists(path(artifacts::aspect_model))) {
        g = Mlp::load(path(artifacts::aspect_model).string());
    }
    std::optional<Vocabulary> vocab;
    if (fs::exists(path(artifacts::vocab))) {
        vocab = load_json(path(artifacts::vocab)).get<Vocabulary>();
    }
    RetrievalContext ctx;
    ctx.docs = &docs_table;
    ctx.doc_pairs = &final_pairs;
    ctx.doc_relevance = &doc_rel;
    ctx.entities = &entities;
    ctx.aspects = &aspects;
    ctx.entity_model = &f;
    ctx.aspect_model = g ? &*g : nullptr;
    ctx.vocab = vocab ? &*vocab : nullptr;
    ctx.prompt = prompt_options();
    if (inference.mode == InferenceMode::pairsem) {
        ctx.llm = &llm();
    }
    Run fused, base;
    std::size_t failures = 0;
    for (const auto& q : queries) {
        auto result = retrieve(q, ctx, inference);
        failures += result.provider_failed;
        auto& fr = fused[q.query_id];
        for (std::size_t i = 0; i < std::min(k, result.ranking.entries.size()); ++i) {
            fr.push_back({result.ranking.entries[i].doc_id, result.ranking.entries[i].fused});
        }
        auto pool = base_pool(*q.embedding, docs_table, std::max(k, inference.rerank_pool_size));
        auto& br = base[q.query_id];
        for (std::size_t i = 0; i < std::min(k, pool.size()); ++i) {
            br.push_back({pool[i].first, pool[i].second});
        }
        if (query_pairs) {
            query_pairs->push_back(std::move(result.query_pairs));
        }
        if (rankings) {
            rankings->push_back(std::move(result.ranking));
        }
    }
    std::map<std::string, double> metrics;
    metrics["provider_failures"] = static_cast<double>(failures);
    if (fs::exists(path(cfg_.qrels))) {
        auto qrels = load_qrels(path(cfg_.qrels).string());
        auto specs = parse_metrics(cfg_.metrics);
        for (const auto& [label, v] : pairsem::evaluate(fused, qrels, specs).means) {
            metrics[label] = v;
        }
        for (const auto& [label, v] : pairsem::evaluate(base, qrels, specs).means) {
            metrics["base_" + label] = v;
        }
    }
    if (fused_run) {
        *fused_run = std::move(fused);
    }
    if (base_run) {
        *base_run = std::move(base);
    }
    return metrics;
}

StageReport Pipeline::query(const QueryOptions& qopts)
{
    InferenceConfig inference = cfg_.inference;
    if (qopts.mode) {
        inference.mode = *qopts.mode;
    }
    if (qopts.pool) {
        inference.rerank_pool_size = *qopts.pool;
    }
    if (qopts.n_entities) {
        inference.n_entities = *qopts.n_entities;
    }
    if (qopts.n_aspects) {
        inference.n_aspects = *qopts.n_aspects;
    }
    const std::size_t k = qopts.k.value_or(cfg_.k);
    std::vector<std::string> inputs = {cfg_.queries,          artifacts::doc_embeddings,
                                       artifacts::pairs_final, artifacts::relevance,
                                       artifacts::entity_embeddings, artifacts::aspect_embeddings,
                                       artifacts::entity_model};
    if (inference.mode == InferenceMode::pairsem_fast) {
        inputs.push_back(artifacts::aspect_model);
    } else {
        inputs.push_back(artifacts::vocab);
        if (fs::exists(path(artifacts::aspect_model))) {
            inputs.push_back(artifacts::aspect_model);
        }
    }
    std::vector<std::string> outputs = {qopts.run_file, artifacts::base_run, artifacts::query_pairs};
    if (qopts.json_output) {
        outputs.push_back("rankings.json");
    }
    if (fs::exists(path(cfg_.qrels))) {
        inputs.push_back(cfg_.qrels);
    }
    const json params = {{"mode", to_string(inference.mode)},
                         {"N_e", inference.n_entities},
                         {"N_a", inference.n_aspects},
                         {"pool", inference.rerank_pool_size},
                         {"normalize_entity", inference.normalize_entity_scores},
                         {"query_candidates", inference.query_candidates},
                         {"k", k},
                         {"metrics", cfg_.metrics},
                         {"embedder", cfg_.provider.embedder},
                         {"llm", inference.mode == InferenceMode::pairsem ? cfg_.provider.llm : ""}};
    PAIRSEM_STAGE_BEGIN("query", inputs, outputs, params);
    Run fused, base;
    std::vector<PairSet> qpairs;
    std::vector<ScoredRanking> rankings;
    auto metrics = score_queries(inference, k, &fused, &base, &qpairs,
                                 qopts.json_output ? &rankings : nullptr);
    write_file_atomic(path(qopts.run_file), format_run(fused));
    write_file_atomic(path(artifacts::base_run), format_run(base));
    save_records(qpairs, path(artifacts::query_pairs));
    if (qopts.json_output) {
        json arr = json::array();
        for (const auto& r : rankings) {
            json entries = json::array();
            for (std::size_t i = 0; i < std::min(k, r.entries.size()); ++i) {
                const auto& e = r.entries[i];
                entries.push_back({{"doc_id", e.doc_id},
                                   {"sim_base", e.sim_base},
                                   {"sim_pair", e.sim_pair},
                                   {"sim_entity", e.sim_entity},
                                   {"fused", e.fused}});
            }
            arr.push_back({{"query_id", r.query_id}, {"entries", entries}});
        }
        save_json(path("rankings.json"), arr);
    }
    std::size_t total_pairs = 0;
    for (const auto& p : qpairs) {
        total_pairs += p.size();
    }
    report.warnings = static_cast<std::size_t>(metrics["provider_failures"]);
    metrics.erase("provider_failures");
    report.details = {{"queries", qpairs.size()},
                      {"mode", to_string(inference.mode)},
                      {"pairs_per_query", qpairs.empty() ? 0.0 : static_cast<double>(total_pairs) /
                                                                   static_cast<double>(qpairs.size())},
                      {"metrics", metrics}};
    PAIRSEM_STAGE_END(inputs, outputs, params);
}

StageReport Pipeline::evaluate(const fs::path& qrels, const fs::path& run, const std::string& metrics)
{
    auto start = clock_type::now();
    fs::path qp = qrels.is_absolute() ? qrels : dir_ / qrels;
    fs::path rp = run.is_absolute() ? run : dir_ / run;
    for (const auto& p : {qp, rp}) {
        if (!fs::exists(p)) {
            throw dependency_error("eval needs " + p.string());
        }
    }
    auto rep = pairsem::evaluate(load_run(rp.string()), load_qrels(qp.string()), parse_metrics(metrics));
    StageReport report;
    report.stage = "eval";
    report.details = {{"run", rp.string()},
                      {"qrels", qp.string()},
                      {"metrics", rep.means},
                      {"evaluated_queries", rep.evaluated_queries},
                      {"excluded_queries", rep.excluded_queries},
                      {"missing_queries", rep.missing_queries}};
    write_file_atomic(dir_ / "reports" / "eval_per_query.csv", per_query_csv(rep));
    report.seconds = std::chrono::duration<double>(clock_type::now() - start).count();
    save_json(dir_ / "reports" / "eval.json",
              {{"stage", "eval"}, {"inputs", json::object()}, {"outputs", json::object()},
               {"params", json::object()}, {"report", report.to_json()}});
    return report;
}

std::vector<StageReport> Pipeline::run_all()
{
    std::vector<StageReport> out;
    out.push_back(embed_documents());
    out.push_back(gen_pairs(GenerationMode::zero_shot));
    out.push_back(build_vocab());
    out.push_back(gen_candidates());
    out.push_back(gen_pairs(GenerationMode::candidate_augmented));
    out.push_back(soft_labels());
    out.push_back(train(TrainTarget::entity));
    out.push_back(train(TrainTarget::aspect));
    out.push_back(eval_predictors());
    if (fs::exists(path(cfg_.queries))) {
        out.push_back(query());
        if (fs::exists(path(cfg_.qrels))) {
            out.push_back(evaluate(cfg_.qrels, "run.tsv", cfg_.metrics));
        }
    }
    return out;
}

SweepReport Pipeline::sweep(const std::string& parameter, const std::vector<std::size_t>& values)
{
    if (values.empty()) {
        throw precondition_error("sweep needs at least one value");
    }
    if (parameter != "M" && parameter != "N_e" && parameter != "N_a") {
        throw precondition_error("unknown sweep parameter '" + parameter + "' (expected M, N_e or N_a)");
    }
    if (!fs::exists(path(cfg_.qrels))) {
        throw dependency_error("sweep needs " + cfg_.qrels);
    }
    SweepReport rep;
    rep.parameter = parameter;
    auto split = [&](const std::map<std::string, double>& m, std::map<std::string, double>& fused) {
        for (const auto& [label, v] : m) {
            if (label.starts_with("base_")) {
                rep.base_metrics[label.substr(5)] = v;
            } else if (label != "provider_failures") {
                fused[label] = v;
            }
        }
    };
    if (parameter == "N_e" || parameter == "N_a") {
        for (const auto& in : {artifacts::doc_embeddings, artifacts::pairs_final, artifacts::relevance,
                               artifacts::entity_embeddings, artifacts::aspect_embeddings,
                               artifacts::entity_model, artifacts::aspect_model}) {
            check_inputs("sweep", {in});
        }
        for (auto v : values) {
            InferenceConfig inf = cfg_.inference;
            (parameter == "N_e" ? inf.n_entities : inf.n_aspects) = v;
            SweepRow row{std::to_string(v), {}};
            split(score_queries(inf, cfg_.k, nullptr, nullptr, nullptr, nullptr), row.metrics);
            rep.rows.push_back(std::move(row));
        }
    } else {
        const std::vector<std::string> shared = {cfg_.documents,          cfg_.queries,
                                                 cfg_.qrels,              cfg_.provider.lexicon,
                                                 artifacts::doc_embeddings, artifacts::pairs_init,
                                                 artifacts::vocab,        artifacts::entity_embeddings,
                                                 artifacts::aspect_embeddings};
        check_inputs("sweep", {artifacts::doc_embeddings, artifacts::pairs_init, artifacts::vocab});
        for (auto v : values) {
            fs::path sub = dir_ / "sweep" / ("M=" + std::to_string(v));
            fs::create_directories(sub / "reports");
            for (const auto& name : shared) {
                if (fs::exists(path(name))) {
                    fs::copy_file(path(name), sub / name, fs::copy_options::overwrite_existing);
                }
            }
            for (const auto* stage : {"embed", "gen-pairs-zero-shot", "build-vocab"}) {
                fs::path s = dir_ / "reports" / (std::string(stage) + ".json");
                if (fs::exists(s)) {
                    fs::copy_file(s, sub / "reports" / s.filename(), fs::copy_options::overwrite_existing);
                }
            }
            PipelineConfig sub_cfg = cfg_;
            sub_cfg.M = v;
            Pipeline p(sub, sub_cfg, opts_);
            p.set_llm(std::shared_ptr<LlmProvider>(&llm(), [](LlmProvider*) {}));
            p.set_embedder(std::shared_ptr<EmbeddingProvider>(&embedder(), [](EmbeddingProvider*) {}));
            p.gen_candidates();
            p.gen_pairs(GenerationMode::candidate_augmented);
            p.soft_labels();
            p.train(TrainTarget::entity);
            p.train(TrainTarget::aspect);
            SweepRow row{std::to_string(v), {}};
            split(p.score_queries(p.cfg_.inference, p.cfg_.k, nullptr, nullptr, nullptr, nullptr),
                  row.metrics);
            rep.rows.push_back(std::move(row));
        }
    }
    save_json(dir_ / "reports" / ("sweep-" + parameter + ".json"), rep.to_json());
    return rep;
}

nlohmann::json Pipeline::report() const
{
    json stages = json::array();
    UsageTotals llm_total, embed_total;
    double seconds = 0.0, cost = 0.0;
    std::vector<fs::path> files;
    if (fs::exists(dir_ / "reports")) {
        for (const auto& e : fs::directory_iterator(dir_ / "reports")) {
            if (e.path().extension() == ".json" && e.path().filename() != "summary.json") {
                files.push_back(e.path());
            }
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        json s = load_json(f);
        if (!s.contains("report")) {
            continue;
        }
        const json& r = s.at("report");
        UsageTotals l = usage_from_json(r.value("llm", json::object()));
        UsageTotals e = usage_from_json(r.value("embedding", json::object()));
        llm_total.calls += l.calls;
        llm_total.prompt_tokens += l.prompt_tokens;
        llm_total.completion_tokens += l.completion_tokens;
        embed_total.calls += e.calls;
        embed_total.prompt_tokens += e.prompt_tokens;
        seconds += r.value("seconds", 0.0);
        cost += r.value("cost_usd", 0.0);
        stages.push_back({{"stage", r.value("stage", f.stem().string())},
                          {"seconds", r.value("seconds", 0.0)},
                          {"llm_calls", l.calls},
                          {"prompt_tokens", l.prompt_tokens},
                          {"completion_tokens", l.completion_tokens},
                          {"cost_usd", r.value("cost_usd", 0.0)},
                          {"warnings", r.value("warnings", 0)},
                          {"details", r.value("details", json::object())}});
    }
    return {{"stages", stages},
            {"total",
             {{"seconds", seconds},
              {"llm", usage_json(llm_total)},
              {"embedding", usage_json(embed_total)},
              {"cost_usd", cost}}}};
}

}  // namespace pairsem
