#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairsem/types.hpp"

namespace pairsem {

/// Exact k nearest documents by cosine similarity of their embeddings.
struct NeighborIndex {
    std::size_t k = 10;
    std::map<std::string, std::vector<std::string>> neighbors;

    const std::vector<std::string>& of(const std::string& doc_id) const;
};

/// Brute-force top-k per document, never including the document itself, ties
/// broken by doc_id ascending. Every document must carry an embedding.
NeighborIndex build_neighbor_index(const std::vector<Document>& docs, std::size_t k = 10);

/// Finds vocabulary surfaces inside free text as whole token sequences, so a
/// match is case-insensitive and respects word boundaries.
class LexicalMatcher {
  public:
    explicit LexicalMatcher(const std::vector<std::string>& surfaces);

    /// Surface -> number of occurrences in `text`.
    std::map<std::string, std::size_t> matches(std::string_view text) const;

  private:
    std::unordered_map<std::string, std::vector<std::pair<std::vector<std::string>, std::string>>>
        by_first_token_;
};

enum class FrequencyMode {
    /// Each source (initial pairs, lexical, pseudo-relevant) counts a candidate once.
    source_count,
    /// Raw occurrence counts summed over the three sources.
    occurrences,
};

struct CandidateOptions {
    std::size_t max_candidates = 50;  // M
    FrequencyMode frequency = FrequencyMode::source_count;
    bool use_initial = true;
    bool use_lexical = true;
    bool use_pseudo_relevant = true;
};

enum class Side { entity, aspect };

/// Frequency of every canonical candidate for one document, before top-M selection.
std::map<std::string, std::size_t> candidate_frequencies(Side side, const Document& doc,
                                                         const PairSetMap& initial_pairs,
                                                         const Vocabulary& vocab,
                                                         const NeighborIndex& index,
                                                         const LexicalMatcher& matcher,
                                                         const CandidateOptions& opts = {});

/// Top-M by frequency, ties by canonical name ascending.
std::vector<std::string> top_candidates(const std::map<std::string, std::size_t>& freq,
                                        std::size_t max_candidates);

std::vector<std::string> candidate_entities(const Document& doc, const PairSetMap& initial_pairs,
                                            const Vocabulary& vocab, const NeighborIndex& index,
                                            const LexicalMatcher& matcher,
                                            const CandidateOptions& opts = {});
std::vector<std::string> candidate_aspects(const Document& doc, const PairSetMap& initial_pairs,
                                           const Vocabulary& vocab, const NeighborIndex& index,
                                           const LexicalMatcher& matcher,
                                           const CandidateOptions& opts = {});

struct CandidateBuild {
    std::vector<CandidateSets> sets;
    std::size_t empty_entity_lists = 0;
    std::size_t empty_aspect_lists = 0;
};

CandidateBuild build_candidates(const std::vector<Document>& docs, const PairSetMap& initial_pairs,
                                const Vocabulary& vocab, const NeighborIndex& index,
                                const CandidateOptions& opts = {}, std::size_t parallelism = 1);

}  // namespace pairsem
