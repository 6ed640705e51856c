#include "pairsem/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairsem/errors.hpp"
#include "pairsem/vector_ops.hpp"

namespace pairsem {

std::string to_string(InferenceMode m) { return m == InferenceMode::pairsem ? "llm" : "fast"; }

InferenceMode parse_inference_mode(const std::string& s)
{
    if (s == "llm" || s == "pairsem") {
        return InferenceMode::pairsem;
    }
    if (s == "fast" || s == "pairsem_fast") {
        return InferenceMode::pairsem_fast;
    }
    throw precondition_error("unknown inference mode '" + s + "'");
}

void InferenceConfig::validate(std::size_t k) const
{
    if (n_entities == 0 || n_aspects == 0) {
        throw precondition_error("N_e and N_a must be at least 1");
    }
    if (rerank_pool_size < k) {
        throw precondition_error("rerank pool (" + std::to_string(rerank_pool_size) +
                                 ") is smaller than k (" + std::to_string(k) + ")");
    }
}

std::vector<std::string> ScoredRanking::doc_ids() const
{
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) {
        ids.push_back(e.doc_id);
    }
    return ids;
}

namespace {

/// Indices of the n best scores; ties by name.
std::vector<std::size_t> best_by_score(const std::vector<double>& scores,
                                       const std::vector<std::string>& names, std::size_t n)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    n = std::min(n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) {
                              return scores[a] > scores[b];
                          }
                          return names[a] < names[b];
                      });
    idx.resize(n);
    return idx;
}

}  // namespace

PairSet query_pairs_fast(const std::string& query_id, std::span<const double> query_embedding,
                         const Mlp& entity_model, const Mlp& aspect_model,
                         const EmbeddingTable& entities, const EmbeddingTable& aspects,
                         std::size_t n_entities, std::size_t n_aspects)
{
    PairSet out(query_id, PairStage::final, OwnerKind::query);
    auto ye = relevance_vector(entity_model, query_id, query_embedding, entities);
    for (std::size_t ei : best_by_score(ye.values, entities.ids(), n_entities)) {
        auto ya = aspect_relevance(aspect_model, query_embedding, entities.row(ei), aspects);
        for (std::size_t ai : best_by_score(ya, aspects.ids(), n_aspects)) {
            out.add({entities.ids()[ei], aspects.ids()[ai]});
        }
    }
    return out;
}

CandidateSets query_candidates_from_predictors(const std::string& query_id,
                                               std::span<const double> query_embedding,
                                               const Mlp& entity_model, const Mlp& aspect_model,
                                               const EmbeddingTable& entities,
                                               const EmbeddingTable& aspects, std::size_t m)
{
    CandidateSets out{query_id, {}, {}};
    auto ye = relevance_vector(entity_model, query_id, query_embedding, entities);
    auto top_e = best_by_score(ye.values, entities.ids(), m);
    std::vector<double> best(aspects.size(), 0.0);
    for (std::size_t ei : top_e) {
        out.candidate_entities.push_back(entities.ids()[ei]);
        auto ya = aspect_relevance(aspect_model, query_embedding, entities.row(ei), aspects);
        for (std::size_t i = 0; i < ya.size(); ++i) {
            best[i] = std::max(best[i], ya[i]);
        }
    }
    for (std::size_t ai : best_by_score(best, aspects.ids(), m)) {
        out.candidate_aspects.push_back(aspects.ids()[ai]);
    }
    return out;
}

CandidateSets global_candidates(const std::string& query_id, const PairSetMap& corpus_pairs,
                                std::size_t m)
{
    std::map<std::string, std::size_t> ef, af;
    for (const auto& [id, ps] : corpus_pairs) {
        for (const auto& e : ps.entities()) {
            ++ef[e];
        }
        for (const auto& a : ps.aspects()) {
            ++af[a];
        }
    }
    CandidateSets out{query_id, top_candidates(ef, m), top_candidates(af, m)};
    return out;
}

QueryPairsOutcome query_pairs_llm(const Query& query, const Vocabulary& vocab, LlmProvider& llm,
                                  const CandidateSets& candidates, const PromptOptions& opts)
{
    validate(query);
    QueryPairsOutcome out;
    out.pairs = PairSet(query.query_id, PairStage::final, OwnerKind::query);
    Document as_doc{query.query_id, query.text, std::nullopt};
    std::optional<CandidateSets> cand;
    if (!candidates.candidate_entities.empty() && !candidates.candidate_aspects.empty()) {
        cand = candidates;
    }
    auto prompt = render_pair_prompt(as_doc, cand, opts);
    ParsedPairs parsed;
    try {
        parsed = parse_pair_xml(llm.generate(prompt.request));
        out.malformed += parsed.malformed;
        if (parsed.empty_extraction) {
            parsed = parse_pair_xml(llm.generate(prompt.request));
            out.malformed += parsed.malformed;
        }
    } catch (const provider_error&) {
        out.provider_failed = true;
        return out;
    }
    out.pairs = canonicalize_pairs(parsed.pairs, vocab, query.query_id, OwnerKind::query,
                                   &out.unknown_dropped);
    return out;
}

double sim_pair(const PairSet& query_pairs, const PairSet& doc_pairs, const EmbeddingTable& aspects)
{
    if (query_pairs.empty() || doc_pairs.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& qp : query_pairs.pairs()) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& dp : doc_pairs.pairs()) {
            double term = 0.0;
            if (qp.entity == dp.entity) {
                term = cosine(aspects.row(qp.aspect), aspects.row(dp.aspect));
            }
            best = std::max(best, term);
        }
        total += best;
    }
    return total / static_cast<double>(query_pairs.size());
}

double sim_entity(const RelevanceVector& yq, const RelevanceVector& yd, bool normalize)
{
    if (!yq.keys || !yd.keys || (yq.keys != yd.keys && *yq.keys != *yd.keys)) {
        throw precondition_error("relevance vectors of '" + yq.owner_id + "' and '" + yd.owner_id +
                                 "' have different keys");
    }
    if (yq.values.size() != yd.values.size()) {
        throw precondition_error("relevance vectors differ in length");
    }
    for (double v : yd.values) {
        if (!(v > 0.0 && v < 1.0)) {
            throw precondition_error("relevance of '" + yd.owner_id + "' outside (0, 1)");
        }
    }
    double zq = 1.0, zd = 1.0;
    if (normalize) {
        zq = std::accumulate(yq.values.begin(), yq.values.end(), 0.0);
        zd = std::accumulate(yd.values.begin(), yd.values.end(), 0.0);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < yq.values.size(); ++i) {
        s += (yq.values[i] / zq) * std::log(yd.values[i] / zd);
    }
    return s;
}

std::vector<std::size_t> component_ranks(const std::vector<ComponentScores>& pool,
                                         double ComponentScores::*field)
{
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double x = pool[a].*field, y = pool[b].*field;
        if (x != y) {
            return x > y;
        }
        return pool[a].doc_id < pool[b].doc_id;
    });
    std::vector<std::size_t> rank(pool.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank[order[r]] = r + 1;
    }
    return rank;
}

ScoredRanking fuse_and_rank(const std::string& query_id, std::vector<ComponentScores> pool)
{
    for (const auto& c : pool) {
        if (!std::isfinite(c.sim_base) || !std::isfinite(c.sim_pair) || !std::isfinite(c.sim_entity)) {
            throw precondition_error("non-finite component score for '" + c.doc_id + "'");
        }
    }
    auto rb = component_ranks(pool, &ComponentScores::sim_base);
    auto rp = component_ranks(pool, &ComponentScores::sim_pair);
    auto re = component_ranks(pool, &ComponentScores::sim_entity);

    // fused = N / D exactly, with N = 2(1+rp)(1+re) + (1+rb)(1+re) + (1+rb)(1+rp)
    // and D = 2(1+rb)(1+rp)(1+re).
    struct Fraction {
        __int128 num, den;
    };
    std::vector<Fraction> exact(pool.size());
    ScoredRanking out{query_id, {}};
    out.entries.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        __int128 b = 1 + static_cast<__int128>(rb[i]);
        __int128 p = 1 + static_cast<__int128>(rp[i]);
        __int128 e = 1 + static_cast<__int128>(re[i]);
        exact[i] = {2 * p * e + b * e + b * p, 2 * b * p * e};
        double fused = 1.0 / static_cast<double>(b) +
                       (1.0 / static_cast<double>(p) + 1.0 / static_cast<double>(e)) / 2.0;
        out.entries.push_back({pool[i].doc_id, pool[i].sim_base, pool[i].sim_pair,
                               pool[i].sim_entity, fused});
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        __int128 lhs = exact[a].num * exact[b].den;
        __int128 rhs = exact[b].num * exact[a].den;
        if (lhs != rhs) {
            return lhs > rhs;
        }
        if (pool[a].sim_base != pool[b].sim_base) {
            return pool[a].sim_base > pool[b].sim_base;
        }
        return pool[a].doc_id < pool[b].doc_id;
    });
    std::vector<ScoredEntry> sorted;
    sorted.reserve(order.size());
    for (auto i : order) {
        sorted.push_back(std::move(out.entries[i]));
    }
    out.entries = std::move(sorted);
    return out;
}

std::vector<std::pair<std::string, double>> base_pool(std::span<const double> query_embedding,
                                                      const EmbeddingTable& docs,
                                                      std::size_t pool_size)
{
    if (query_embedding.size() != docs.dim()) {
        throw precondition_error("query embedding has dimension " +
                                 std::to_string(query_embedding.size()) + ", corpus has " +
                                 std::to_string(docs.dim()));
    }
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        scored.emplace_back(docs.ids()[i], cosine(query_embedding, docs.row(i)));
    }
    std::size_t n = std::min(pool_size, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                      [](const auto& a, const auto& b) {
                          return a.second != b.second ? a.second > b.second : a.first < b.first;
                      });
    scored.resize(n);
    return scored;
}

namespace {

void require(const void* p, const char* what)
{
    if (!p) {
        throw dependency_error(std::string("missing offline artifact: ") + what);
    }
}

}  // namespace

ScoredRanking score_with_pairs(const Query& query, const PairSet& query_pairs,
                               const RetrievalContext& ctx, const InferenceConfig& cfg)
{
    require(ctx.docs, "document embeddings (embed stage)");
    require(ctx.doc_pairs, "final pairs (gen-pairs --mode candidate)");
    require(ctx.doc_relevance, "document relevance vectors (train --target entity)");
    require(ctx.entities, "entity embeddings (build-vocab)");
    require(ctx.aspects, "aspect embeddings (build-vocab)");
    require(ctx.entity_model, "entity predictor (train --target entity)");
    if (!query.embedding) {
        throw precondition_error("query '" + query.query_id + "' has no embedding");
    }
    auto yq = relevance_vector(*ctx.entity_model, query.query_id, *query.embedding, *ctx.entities);
    auto pool = base_pool(*query.embedding, *ctx.docs, cfg.rerank_pool_size);
    static const PairSet empty_pairs;
    std::vector<ComponentScores> comps;
    comps.reserve(pool.size());
    for (const auto& [doc_id, base] : pool) {
        auto pit = ctx.doc_pairs->find(doc_id);
        const PairSet& dp = pit == ctx.doc_pairs->end() ? empty_pairs : pit->second;
        auto rit = ctx.doc_relevance->find(doc_id);
        if (rit == ctx.doc_relevance->end()) {
            throw dependency_error("no relevance vector for document '" + doc_id + "'");
        }
        comps.push_back({doc_id, base, sim_pair(query_pairs, dp, *ctx.aspects),
                         sim_entity(yq, rit->second, cfg.normalize_entity_scores)});
    }
    return fuse_and_rank(query.query_id, std::move(comps));
}

RetrievalResult retrieve(const Query& query, const RetrievalContext& ctx, const InferenceConfig& cfg)
{
    validate(query);
    require(ctx.entities, "entity embeddings (build-vocab)");
    require(ctx.aspects, "aspect embeddings (build-vocab)");
    require(ctx.entity_model, "entity predictor (train --target entity)");
    if (!query.embedding) {
        throw precondition_error("query '" + query.query_id + "' has no embedding");
    }
    RetrievalResult result;
    if (cfg.mode == InferenceMode::pairsem_fast) {
        require(ctx.aspect_model, "aspect predictor (train --target aspect)");
        result.query_pairs = query_pairs_fast(query.query_id, *query.embedding, *ctx.entity_model,
                                              *ctx.aspect_model, *ctx.entities, *ctx.aspects,
                                              cfg.n_entities, cfg.n_aspects);
    } else {
        require(ctx.llm, "LLM provider");
        require(ctx.vocab, "vocabulary (build-vocab)");
        CandidateSets cand;
        if (ctx.aspect_model) {
            cand = query_candidates_from_predictors(query.query_id, *query.embedding,
                                                    *ctx.entity_model, *ctx.aspect_model,
                                                    *ctx.entities, *ctx.aspects, cfg.query_candidates);
        } else {
            require(ctx.doc_pairs, "final pairs (gen-pairs --mode candidate)");
            cand = global_candidates(query.query_id, *ctx.doc_pairs, cfg.query_candidates);
        }
        auto qp = query_pairs_llm(query, *ctx.vocab, *ctx.llm, cand, ctx.prompt);
        result.query_pairs = std::move(qp.pairs);
        result.provider_failed = qp.provider_failed;
    }
    result.ranking = score_with_pairs(query, result.query_pairs, ctx, cfg);
    return result;
}

}  // namespace pairsem
