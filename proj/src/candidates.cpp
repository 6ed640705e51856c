#include "pairsem/candidates.hpp"

#include <algorithm>
#include <numeric>

#include "pairsem/errors.hpp"
#include "pairsem/parallel.hpp"
#include "pairsem/text.hpp"
#include "pairsem/vector_ops.hpp"

namespace pairsem {

const std::vector<std::string>& NeighborIndex::of(const std::string& doc_id) const
{
    static const std::vector<std::string> none;
    auto it = neighbors.find(doc_id);
    return it == neighbors.end() ? none : it->second;
}

NeighborIndex build_neighbor_index(const std::vector<Document>& docs, std::size_t k)
{
    NeighborIndex index;
    index.k = k;
    std::vector<Vector> unit;
    unit.reserve(docs.size());
    for (const auto& d : docs) {
        if (!d.embedding) {
            throw precondition_error("document '" + d.doc_id + "' has no embedding");
        }
        unit.push_back(*d.embedding);
        l2_normalize(unit.back());
    }
    const std::size_t n = docs.size();
    std::vector<std::size_t> order(n);
    std::vector<double> sim(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> others;
        others.reserve(n ? n - 1 : 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sim[j] = dot(unit[i], unit[j]);
                others.push_back(j);
            }
        }
        std::size_t take = std::min(k, others.size());
        std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take),
                          others.end(), [&](std::size_t a, std::size_t b) {
                              if (sim[a] != sim[b]) {
                                  return sim[a] > sim[b];
                              }
                              return docs[a].doc_id < docs[b].doc_id;
                          });
        auto& list = index.neighbors[docs[i].doc_id];
        for (std::size_t t = 0; t < take; ++t) {
            list.push_back(docs[others[t]].doc_id);
        }
    }
    return index;
}

LexicalMatcher::LexicalMatcher(const std::vector<std::string>& surfaces)
{
    for (const auto& s : surfaces) {
        auto tokens = tokenize(s);
        if (tokens.empty()) {
            continue;
        }
        auto first = tokens.front();
        by_first_token_[first].emplace_back(std::move(tokens), s);
    }
}

std::map<std::string, std::size_t> LexicalMatcher::matches(std::string_view text) const
{
    std::map<std::string, std::size_t> found;
    auto tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = by_first_token_.find(tokens[i]);
        if (it == by_first_token_.end()) {
            continue;
        }
        for (const auto& [seq, surface] : it->second) {
            if (i + seq.size() <= tokens.size() &&
                std::equal(seq.begin(), seq.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                ++found[surface];
            }
        }
    }
    return found;
}

std::map<std::string, std::size_t> candidate_frequencies(Side side, const Document& doc,
                                                         const PairSetMap& initial_pairs,
                                                         const Vocabulary& vocab,
                                                         const NeighborIndex& index,
                                                         const LexicalMatcher& matcher,
                                                         const CandidateOptions& opts)
{
    auto canonical = [&](const std::string& s) {
        return side == Side::entity ? vocab.canonical_entity(s) : vocab.canonical_aspect(s);
    };
    auto member = [&](const SemanticPair& p) -> const std::string& {
        return side == Side::entity ? p.entity : p.aspect;
    };
    const bool by_source = opts.frequency == FrequencyMode::source_count;

    // Counts from one source, collapsed to 0/1 in source-count mode.
    auto merge = [&](std::map<std::string, std::size_t>& total,
                     const std::map<std::string, std::size_t>& source) {
        for (const auto& [c, n] : source) {
            total[c] += by_source ? 1 : n;
        }
    };
    auto initial_counts = [&](const std::string& doc_id) {
        std::map<std::string, std::size_t> counts;
        auto it = initial_pairs.find(doc_id);
        if (it == initial_pairs.end()) {
            return counts;
        }
        for (const auto& p : it->second.pairs()) {
            if (auto c = canonical(member(p))) {
                ++counts[*c];
            }
        }
        return counts;
    };

    std::map<std::string, std::size_t> total;
    if (opts.use_initial) {
        merge(total, initial_counts(doc.doc_id));
    }
    if (opts.use_lexical) {
        std::map<std::string, std::size_t> lexical;
        for (const auto& [surface, n] : matcher.matches(doc.text)) {
            if (auto c = canonical(surface)) {
                lexical[*c] += n;
            }
        }
        merge(total, lexical);
    }
    if (opts.use_pseudo_relevant) {
        std::map<std::string, std::size_t> pr;
        for (const auto& nb : index.of(doc.doc_id)) {
            for (const auto& [c, n] : initial_counts(nb)) {
                pr[c] += n;
            }
        }
        merge(total, pr);
    }
    return total;
}

std::vector<std::string> top_candidates(const std::map<std::string, std::size_t>& freq,
                                        std::size_t max_candidates)
{
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < items.size() && i < max_candidates; ++i) {
        out.push_back(items[i].first);
    }
    return out;
}

std::vector<std::string> candidate_entities(const Document& doc, const PairSetMap& initial_pairs,
                                            const Vocabulary& vocab, const NeighborIndex& index,
                                            const LexicalMatcher& matcher,
                                            const CandidateOptions& opts)
{
    return top_candidates(
        candidate_frequencies(Side::entity, doc, initial_pairs, vocab, index, matcher, opts),
        opts.max_candidates);
}

std::vector<std::string> candidate_aspects(const Document& doc, const PairSetMap& initial_pairs,
                                           const Vocabulary& vocab, const NeighborIndex& index,
                                           const LexicalMatcher& matcher,
                                           const CandidateOptions& opts)
{
    return top_candidates(
        candidate_frequencies(Side::aspect, doc, initial_pairs, vocab, index, matcher, opts),
        opts.max_candidates);
}

CandidateBuild build_candidates(const std::vector<Document>& docs, const PairSetMap& initial_pairs,
                                const Vocabulary& vocab, const NeighborIndex& index,
                                const CandidateOptions& opts, std::size_t parallelism)
{
    std::vector<std::string> entity_surfaces;
    for (const auto& [surface, _] : vocab.entity_map()) {
        entity_surfaces.push_back(surface);
    }
    std::vector<std::string> aspect_surfaces;
    for (const auto& [surface, _] : vocab.aspect_map()) {
        aspect_surfaces.push_back(surface);
    }
    LexicalMatcher entity_matcher(entity_surfaces);
    LexicalMatcher aspect_matcher(aspect_surfaces);

    CandidateBuild out;
    out.sets.resize(docs.size());
    parallel_for(docs.size(), parallelism, [&](std::size_t i) {
        const auto& d = docs[i];
        out.sets[i] = {d.doc_id,
                       candidate_entities(d, initial_pairs, vocab, index, entity_matcher, opts),
                       candidate_aspects(d, initial_pairs, vocab, index, aspect_matcher, opts)};
    });
    for (const auto& s : out.sets) {
        out.empty_entity_lists += s.candidate_entities.empty() ? 1 : 0;
        out.empty_aspect_lists += s.candidate_aspects.empty() ? 1 : 0;
    }
    return out;
}

}  // namespace pairsem
