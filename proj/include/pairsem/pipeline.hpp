#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairsem/candidates.hpp"
#include "pairsem/eval.hpp"
#include "pairsem/matching.hpp"
#include "pairsem/pairgen.hpp"
#include "pairsem/predictors.hpp"
#include "pairsem/providers.hpp"
#include "pairsem/relevance.hpp"

namespace pairsem {

struct ProviderSettings {
    /// "oracle", "replay", "http" or "record" (http, saving replay fixtures).
    std::string llm = "oracle";
    /// "token-hash" or "http".
    std::string embedder = "token-hash";
    std::string api_base = "${PAIRSEM_API_BASE}";
    std::string api_key = "${PAIRSEM_API_KEY}";
    std::string model = "gpt-4.1-mini";
    std::string embedding_model = "text-embedding-3-small";
    /// Replay fixtures, relative to the working directory.
    std::string fixtures_dir = "fixtures/llm";
    /// Oracle synonym knowledge (surface -> representative), relative to the working directory.
    std::string lexicon = "lexicon.json";
    std::size_t dim = 384;
    std::uint64_t embed_seed = 0x5eedULL;
    int parallelism = 4;
    int max_attempts = 3;
    int timeout_s = 120;
    double temperature = 0.0;
    int max_tokens = 2048;
    /// USD per 1000 tokens, for stage cost reports.
    double cost_per_1k_prompt = 0.0004;
    double cost_per_1k_completion = 0.0016;
};

struct PipelineConfig {
    ProviderSettings provider;
    std::size_t M = 50;
    std::size_t knn = 10;
    std::size_t max_cluster_size = 20;
    FrequencyMode frequency = FrequencyMode::source_count;
    LabelNormalization label_normalization = LabelNormalization::all_entities;
    TrainConfig entity_train;
    TrainConfig aspect_train;
    InferenceConfig inference;
    /// Run depth written per query.
    std::size_t k = 100;
    std::size_t threads = 1;
    std::string documents = "documents.jsonl";
    std::string queries = "queries.jsonl";
    std::string qrels = "qrels.tsv";
    std::string metrics = "ndcg@10,ndcg@20,recall@20,recall@50";
};

/// Replaces ${NAME} with the environment value (empty when unset).
std::string interpolate_env(const std::string& s);

nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Missing fields keep their defaults; unknown fields are errors.
PipelineConfig config_from_json(const nlohmann::json& j);
/// Reads a JSON config and interpolates environment variables in its strings.
PipelineConfig load_config(const std::filesystem::path& path);

struct StageReport {
    std::string stage;
    bool up_to_date = false;
    double seconds = 0.0;
    UsageTotals llm;
    UsageTotals embedding;
    double cost_usd = 0.0;
    std::size_t warnings = 0;
    nlohmann::json details = nlohmann::json::object();

    nlohmann::json to_json() const;
};

struct RunOptions {
    bool force = false;
    bool strict = false;
};

enum class TrainTarget { entity, aspect };

struct QueryOptions {
    std::optional<InferenceMode> mode;
    std::optional<std::size_t> k;
    std::optional<std::size_t> pool;
    std::optional<std::size_t> n_entities;
    std::optional<std::size_t> n_aspects;
    bool json_output = false;
    std::string run_file = "run.tsv";
};

struct SweepRow {
    std::string value;
    std::map<std::string, double> metrics;
};

struct SweepReport {
    std::string parameter;
    std::map<std::string, double> base_metrics;
    std::vector<SweepRow> rows;

    nlohmann::json to_json() const;
    std::string table() const;
};

/// Stage runner over one working directory. Stage artifacts are written
/// atomically; every stage stamps reports/<stage>.json with the digests of
/// its inputs, outputs and parameters.
class Pipeline {
  public:
    Pipeline(std::filesystem::path workdir, PipelineConfig cfg, RunOptions opts = {});
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    const PipelineConfig& config() const { return cfg_; }
    PipelineConfig& config() { return cfg_; }
    const std::filesystem::path& workdir() const { return dir_; }

    /// Overrides the configured providers.
    void set_llm(std::shared_ptr<LlmProvider> llm) { llm_ = std::move(llm); }
    void set_embedder(std::shared_ptr<EmbeddingProvider> e) { embedder_ = std::move(e); }

    StageReport embed_documents();
    StageReport gen_pairs(GenerationMode mode);
    StageReport build_vocab();
    StageReport gen_candidates();
    StageReport soft_labels();
    StageReport train(TrainTarget target);
    StageReport eval_predictors();
    StageReport query(const QueryOptions& opts = {});
    StageReport evaluate(const std::filesystem::path& qrels, const std::filesystem::path& run,
                         const std::string& metrics);
    /// Every offline stage in dependency order, then query and eval when
    /// queries (and qrels) exist.
    std::vector<StageReport> run_all();
    /// "M" re-runs candidates and everything downstream in sweep/M=<v>/;
    /// "N_e" and "N_a" only re-score queries.
    SweepReport sweep(const std::string& parameter, const std::vector<std::size_t>& values);
    /// Table of every stamped stage with timing, token and cost totals.
    nlohmann::json report() const;

  private:
    struct Stamp;
    class Lock;

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }
    LlmProvider& llm();
    EmbeddingProvider& embedder();
    PromptOptions prompt_options() const;

    bool up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const nlohmann::json& params) const;
    void check_inputs(const std::string& stage, const std::vector<std::string>& inputs) const;
    StageReport finish(StageReport report, const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs, const nlohmann::json& params,
                       std::chrono::steady_clock::time_point start, const UsageTotals& llm_before,
                       const UsageTotals& embed_before);
    StageReport skipped(const std::string& stage) const;

    std::vector<Document> load_documents(bool with_embeddings) const;
    std::map<std::string, double> score_queries(const InferenceConfig& inference, std::size_t k,
                                                Run* fused_run, Run* base_run,
                                                std::vector<PairSet>* query_pairs,
                                                std::vector<ScoredRanking>* rankings);

    std::filesystem::path dir_;
    PipelineConfig cfg_;
    RunOptions opts_;
    std::shared_ptr<LlmProvider> llm_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::unique_ptr<Lock> lock_;
};

/// Artifact file names inside a working directory.
namespace artifacts {
inline constexpr const char* doc_embeddings = "doc_embeddings.jsonl";
inline constexpr const char* pairs_init = "pairs_init.jsonl";
inline constexpr const char* vocab = "vocab.json";
inline constexpr const char* entity_embeddings = "entity_embeddings.jsonl";
inline constexpr const char* aspect_embeddings = "aspect_embeddings.jsonl";
inline constexpr const char* candidates = "candidates.jsonl";
inline constexpr const char* pairs_final = "pairs_final.jsonl";
inline constexpr const char* labels = "labels.jsonl";
inline constexpr const char* entity_model = "entity_model.json";
inline constexpr const char* aspect_model = "aspect_model.json";
inline constexpr const char* relevance = "relevance.jsonl";
inline constexpr const char* query_pairs = "query_pairs.jsonl";
inline constexpr const char* base_run = "base_run.tsv";
}  // namespace artifacts

}  // namespace pairsem
