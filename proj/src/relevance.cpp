#include "pairsem/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pairsem/errors.hpp"
#include "pairsem/parallel.hpp"
#include "pairsem/text.hpp"

namespace pairsem {

Bm25Index::Bm25Index(const std::vector<Document>& docs, Bm25Params params) : params_(params)
{
    std::size_t total = 0;
    for (const auto& d : docs) {
        if (!ids_.emplace(d.doc_id, tf_.size()).second) {
            throw precondition_error("duplicate doc_id '" + d.doc_id + "'");
        }
        auto tokens = tokenize(d.text);
        auto& tf = tf_.emplace_back();
        for (auto& t : tokens) {
            ++tf[t];
        }
        for (const auto& [t, _] : tf) {
            ++df_[t];
        }
        lengths_.push_back(tokens.size());
        total += tokens.size();
    }
    if (docs.empty() || total == 0) {
        throw precondition_error("BM25 index needs at least one non-empty document");
    }
    avg_len_ = static_cast<double>(total) / static_cast<double>(docs.size());
}

std::size_t Bm25Index::document_frequency(const std::string& token) const
{
    auto it = df_.find(token);
    return it == df_.end() ? 0 : it->second;
}

std::optional<std::size_t> Bm25Index::doc_index(const std::string& doc_id) const
{
    auto it = ids_.find(doc_id);
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

double Bm25Index::idf(const std::string& token) const
{
    double n = static_cast<double>(document_count());
    double df = static_cast<double>(document_frequency(token));
    return std::max(0.0, std::log(1.0 + (n - df + 0.5) / (df + 0.5)));
}

double Bm25Index::score_tokens(std::size_t doc, const std::vector<std::string>& tokens) const
{
    const auto& tf = tf_.at(doc);
    double norm = params_.k1 * (1.0 - params_.b +
                                params_.b * static_cast<double>(lengths_[doc]) / avg_len_);
    double s = 0.0;
    for (const auto& t : tokens) {
        auto it = tf.find(t);
        if (it == tf.end()) {
            continue;
        }
        double f = it->second;
        s += idf(t) * f * (params_.k1 + 1.0) / (f + norm);
    }
    return s;
}

double Bm25Index::score(const std::string& doc_id, std::string_view entity) const
{
    auto idx = doc_index(doc_id);
    if (!idx) {
        return 0.0;
    }
    return score_tokens(*idx, tokenize(entity));
}

double distinctiveness_from_scores(double own, std::span<const double> neighbors)
{
    double m = std::max(0.0, own);
    for (double s : neighbors) {
        m = std::max(m, s);
    }
    double denom = std::exp(-m);
    for (double s : neighbors) {
        denom += std::exp(s - m);
    }
    return std::exp(own - m) / denom;
}

DistinctivenessScorer::DistinctivenessScorer(const Bm25Index& bm25, const NeighborIndex& neighbors,
                                             std::vector<std::string> entities)
    : bm25_(bm25), neighbors_(neighbors), entities_(std::move(entities))
{
    for (std::size_t i = 0; i < entities_.size(); ++i) {
        entity_tokens_.push_back(tokenize(entities_[i]));
        std::set<std::string> uniq(entity_tokens_.back().begin(), entity_tokens_.back().end());
        for (const auto& t : uniq) {
            entities_by_token_[t].push_back(i);
        }
    }
}

double DistinctivenessScorer::dst_tokens(std::size_t doc, const std::vector<std::string>& neighbor_ids,
                                         const std::vector<std::string>& tokens) const
{
    double own = bm25_.score_tokens(doc, tokens);
    std::vector<double> nb;
    nb.reserve(neighbor_ids.size());
    for (const auto& id : neighbor_ids) {
        auto idx = bm25_.doc_index(id);
        nb.push_back(idx ? bm25_.score_tokens(*idx, tokens) : 0.0);
    }
    return distinctiveness_from_scores(own, nb);
}

double DistinctivenessScorer::dst(const std::string& doc_id, const std::string& entity) const
{
    auto idx = bm25_.doc_index(doc_id);
    if (!idx) {
        throw precondition_error("document '" + doc_id + "' is not in the BM25 index");
    }
    return dst_tokens(*idx, neighbors_.of(doc_id), tokenize(entity));
}

double DistinctivenessScorer::max_dst(const std::string& doc_id) const
{
    auto idx = bm25_.doc_index(doc_id);
    if (!idx) {
        throw precondition_error("document '" + doc_id + "' is not in the BM25 index");
    }
    const auto& nbs = neighbors_.of(doc_id);
    std::vector<bool> overlapping(entities_.size(), false);
    auto mark = [&](std::size_t doc) {
        for (const auto& [t, _] : bm25_.term_frequencies(doc)) {
            if (auto it = entities_by_token_.find(t); it != entities_by_token_.end()) {
                for (std::size_t e : it->second) {
                    overlapping[e] = true;
                }
            }
        }
    };
    mark(*idx);
    for (const auto& id : nbs) {
        if (auto n = bm25_.doc_index(id)) {
            mark(*n);
        }
    }
    double best = 0.0;
    bool any_disjoint = false;
    for (std::size_t e = 0; e < entities_.size(); ++e) {
        if (overlapping[e]) {
            best = std::max(best, dst_tokens(*idx, nbs, entity_tokens_[e]));
        } else {
            any_disjoint = true;
        }
    }
    if (any_disjoint) {
        best = std::max(best, 1.0 / (1.0 + static_cast<double>(nbs.size())));
    }
    return best;
}

SoftLabels DistinctivenessScorer::soft_labels(const std::string& doc_id,
                                              const std::vector<std::string>& positives,
                                              LabelNormalization norm) const
{
    SoftLabels out{doc_id, {}};
    if (positives.empty()) {
        return out;
    }
    std::map<std::string, double> raw;
    for (const auto& e : positives) {
        raw[e] = dst(doc_id, e);
    }
    double denom = 0.0;
    if (norm == LabelNormalization::all_entities) {
        denom = max_dst(doc_id);
        // Positives outside the entity set still bound the maximum.
        for (const auto& [_, v] : raw) {
            denom = std::max(denom, v);
        }
    } else {
        for (const auto& [_, v] : raw) {
            denom = std::max(denom, v);
        }
    }
    for (const auto& [e, v] : raw) {
        out.labels[e] = v / denom;
    }
    return out;
}

std::vector<SoftLabels> build_soft_labels(const std::vector<Document>& docs,
                                          const PairSetMap& final_pairs, const Vocabulary& vocab,
                                          const NeighborIndex& neighbors, LabelNormalization norm,
                                          std::size_t parallelism)
{
    Bm25Index bm25(docs);
    DistinctivenessScorer scorer(bm25, neighbors, vocab.entities());
    std::vector<SoftLabels> out(docs.size());
    parallel_for(docs.size(), parallelism, [&](std::size_t i) {
        const auto& id = docs[i].doc_id;
        auto it = final_pairs.find(id);
        std::vector<std::string> positives;
        if (it != final_pairs.end()) {
            positives = it->second.entities();
        }
        out[i] = scorer.soft_labels(id, positives, norm);
    });
    return out;
}

}  // namespace pairsem
