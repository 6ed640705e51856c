#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pairsem/candidates.hpp"
#include "pairsem/pairgen.hpp"
#include "pairsem/predictors.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

enum class InferenceMode { pairsem, pairsem_fast };

std::string to_string(InferenceMode m);
InferenceMode parse_inference_mode(const std::string& s);

struct InferenceConfig {
    InferenceMode mode = InferenceMode::pairsem_fast;
    std::size_t n_entities = 10;
    std::size_t n_aspects = 5;
    std::size_t rerank_pool_size = 1000;
    /// Normalize ŷ_q and ŷ_d to sum to one before the entity score.
    bool normalize_entity_scores = false;
    /// Query-side candidate list length for LLM mode.
    std::size_t query_candidates = 50;

    /// Throws precondition_error unless N_e, N_a >= 1 and pool >= k.
    void validate(std::size_t k) const;
};

struct ScoredEntry {
    std::string doc_id;
    double sim_base = 0.0;
    double sim_pair = 0.0;
    double sim_entity = 0.0;
    double fused = 0.0;
};

struct ScoredRanking {
    std::string query_id;
    std::vector<ScoredEntry> entries;

    std::vector<std::string> doc_ids() const;
};

/// Top N_e entities by ŷ_{q,e}, then for each the top N_a aspects by
/// ŷ_{q,a|e}. Score ties go to the smaller canonical name.
PairSet query_pairs_fast(const std::string& query_id, std::span<const double> query_embedding,
                         const Mlp& entity_model, const Mlp& aspect_model,
                         const EmbeddingTable& entities, const EmbeddingTable& aspects,
                         std::size_t n_entities, std::size_t n_aspects);

/// Top-M entities by ŷ_{q,e} and top-M aspects by the best ŷ_{q,a|e} over
/// those entities.
CandidateSets query_candidates_from_predictors(const std::string& query_id,
                                               std::span<const double> query_embedding,
                                               const Mlp& entity_model, const Mlp& aspect_model,
                                               const EmbeddingTable& entities,
                                               const EmbeddingTable& aspects, std::size_t m);

/// The M most frequent entities and aspects over a corpus's pair sets; ties
/// by name.
CandidateSets global_candidates(const std::string& query_id, const PairSetMap& corpus_pairs,
                                std::size_t m);

struct QueryPairsOutcome {
    PairSet pairs;
    std::size_t unknown_dropped = 0;
    std::size_t malformed = 0;
    bool provider_failed = false;
};

/// Candidate-augmented generation on the query text, canonicalized through
/// `vocab`. A provider failure yields an empty set.
QueryPairsOutcome query_pairs_llm(const Query& query, const Vocabulary& vocab, LlmProvider& llm,
                                  const CandidateSets& candidates, const PromptOptions& opts = {});

/// (1/|P_q|) sum over query pairs of the max over document pairs of
/// 1[e = e'] cos(a, a'). Zero when either side is empty.
double sim_pair(const PairSet& query_pairs, const PairSet& doc_pairs, const EmbeddingTable& aspects);

/// sum_e ŷ_q log ŷ_d over identical key lists.
double sim_entity(const RelevanceVector& yq, const RelevanceVector& yd, bool normalize = false);

struct ComponentScores {
    std::string doc_id;
    double sim_base = 0.0;
    double sim_pair = 0.0;
    double sim_entity = 0.0;
};

/// 1-based ranks under one component, ties by doc_id.
std::vector<std::size_t> component_ranks(const std::vector<ComponentScores>& pool,
                                         double ComponentScores::*field);

/// h(base) + (h(pair) + h(entity)) / 2 with h = 1/(1 + rank).
ScoredRanking fuse_and_rank(const std::string& query_id, std::vector<ComponentScores> pool);

/// Top `pool_size` documents by cosine with the query, ties by doc_id.
std::vector<std::pair<std::string, double>> base_pool(std::span<const double> query_embedding,
                                                      const EmbeddingTable& docs,
                                                      std::size_t pool_size);

/// Offline artifacts consulted by retrieve().
struct RetrievalContext {
    const EmbeddingTable* docs = nullptr;
    const PairSetMap* doc_pairs = nullptr;
    const std::map<std::string, RelevanceVector>* doc_relevance = nullptr;
    const EmbeddingTable* entities = nullptr;
    const EmbeddingTable* aspects = nullptr;
    const Mlp* entity_model = nullptr;
    const Mlp* aspect_model = nullptr;
    /// LLM mode only.
    LlmProvider* llm = nullptr;
    const Vocabulary* vocab = nullptr;
    PromptOptions prompt;
};

struct RetrievalResult {
    ScoredRanking ranking;
    PairSet query_pairs;
    bool provider_failed = false;
};

/// Embeds nothing: the query must carry its embedding.
RetrievalResult retrieve(const Query& query, const RetrievalContext& ctx,
                         const InferenceConfig& cfg);

/// Same flow with a caller-supplied query pair set.
ScoredRanking score_with_pairs(const Query& query, const PairSet& query_pairs,
                               const RetrievalContext& ctx, const InferenceConfig& cfg);

}  // namespace pairsem
