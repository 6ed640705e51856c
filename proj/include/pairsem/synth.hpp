#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairsem/eval.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

struct IntRange {
    std::size_t min = 1;
    std::size_t max = 1;
};

/// Parameters of a generated benchmark. Generation is a pure function of it.
struct SynthSpec {
    std::uint64_t seed = 7;
    std::size_t n_docs = 200;
    std::size_t n_entities = 60;
    std::size_t n_aspects = 45;
    /// Entities and aspects are split round-robin into topics; a document
    /// draws from one topic.
    std::size_t n_topics = 1;
    /// Allowed aspects per entity: 1 + Binomial(pool - 1, p) with p set so the
    /// mean is this value.
    double aspects_per_entity = 6.75;
    IntRange entities_per_doc{10, 13};
    /// Aspects paired with each entity of a document.
    IntRange aspects_per_doc_entity{1, 3};
    /// Entities and aspects that also appear under an alternative surface.
    std::size_t entity_synonym_groups = 10;
    std::size_t aspect_synonym_groups = 8;
    /// Queries per document; 0.5 gives one query for every other document.
    double queries_per_doc = 0.5;
    IntRange query_pairs{2, 3};
    /// Documents sharing at least this many planted pairs with a query are relevant.
    std::size_t relevance_threshold = 1;
    std::size_t distractor_vocabulary = 300;
    IntRange distractor_sentences{3, 6};
    IntRange distractor_words{4, 9};

    /// Throws precondition_error for an infeasible or empty spec.
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct SynthCorpus {
    std::vector<Document> docs;
    std::vector<Query> queries;
    /// Canonical planted pairs per document (stage final).
    PairSetMap gold_pairs;
    /// Planted pairs as written in the text (stage initial).
    PairSetMap gold_surface_pairs;
    /// Canonical planted pairs per query.
    PairSetMap gold_query_pairs;
    Qrels qrels;
    /// Every written surface -> canonical name, entities and aspects together.
    std::map<std::string, std::string> lexicon;
    std::vector<std::string> entities;
    std::vector<std::string> aspects;
};

SynthCorpus generate_corpus(const SynthSpec& spec);

/// Mean number of distinct aspects paired with each entity across the corpus.
double mean_aspects_per_entity(const PairSetMap& pairs);

/// Writes documents.jsonl, queries.jsonl, gold_pairs.jsonl, gold_surface_pairs.jsonl,
/// gold_query_pairs.jsonl, qrels.tsv, lexicon.json and spec.json into `dir`.
void save_corpus(const std::string& dir, const SynthSpec& spec, const SynthCorpus& corpus);

}  // namespace pairsem
