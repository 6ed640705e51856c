#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairsem/candidates.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// In-memory Okapi BM25 statistics over a tokenized corpus.
class Bm25Index {
  public:
    explicit Bm25Index(const std::vector<Document>& docs, Bm25Params params = {});

    /// BM25(d, e): the entity string is tokenized and scored as a query.
    /// Unknown documents and unseen tokens score 0.
    double score(const std::string& doc_id, std::string_view entity) const;
    double score_tokens(std::size_t doc, const std::vector<std::string>& tokens) const;

    /// ln(1 + (N - df + 0.5) / (df + 0.5)).
    double idf(const std::string& token) const;

    std::size_t document_count() const { return lengths_.size(); }
    double average_length() const { return avg_len_; }
    std::size_t document_frequency(const std::string& token) const;
    std::optional<std::size_t> doc_index(const std::string& doc_id) const;
    const std::unordered_map<std::string, std::uint32_t>& term_frequencies(std::size_t doc) const
    {
        return tf_[doc];
    }
    const Bm25Params& params() const { return params_; }

  private:
    Bm25Params params_;
    std::vector<std::unordered_map<std::string, std::uint32_t>> tf_;
    std::vector<std::size_t> lengths_;
    std::unordered_map<std::string, std::size_t> df_;
    std::unordered_map<std::string, std::size_t> ids_;
    double avg_len_ = 0.0;
};

/// exp(own) / (1 + sum_i exp(neighbor_i)), evaluated with the largest
/// exponent factored out so large BM25 scores do not overflow.
double distinctiveness_from_scores(double own, std::span<const double> neighbors);

enum class LabelNormalization {
    /// Divide by the maximum distinctiveness over the whole entity set.
    all_entities,
    /// Divide by the maximum over the document's positive entities only.
    positives,
};

/// DST(d, e) against each document's nearest neighbours, plus soft labels.
class DistinctivenessScorer {
  public:
    DistinctivenessScorer(const Bm25Index& bm25, const NeighborIndex& neighbors,
                          std::vector<std::string> entities);

    double dst(const std::string& doc_id, const std::string& entity) const;

    /// Exact max of DST(d, e') over the entity set. Entities sharing no token
    /// with d or its neighbours all take the value 1 / (1 + |D_d|), so only
    /// overlapping entities are scored individually.
    double max_dst(const std::string& doc_id) const;

    /// y_{d,e} = DST(d,e) / max DST, for e in `positives`.
    SoftLabels soft_labels(const std::string& doc_id, const std::vector<std::string>& positives,
                           LabelNormalization norm = LabelNormalization::all_entities) const;

  private:
    double dst_tokens(std::size_t doc, const std::vector<std::string>& neighbor_ids,
                      const std::vector<std::string>& tokens) const;

    const Bm25Index& bm25_;
    const NeighborIndex& neighbors_;
    std::vector<std::string> entities_;
    std::vector<std::vector<std::string>> entity_tokens_;
    std::unordered_map<std::string, std::vector<std::size_t>> entities_by_token_;
};

/// Soft labels for every document's final-pair entities.
std::vector<SoftLabels> build_soft_labels(const std::vector<Document>& docs,
                                          const PairSetMap& final_pairs, const Vocabulary& vocab,
                                          const NeighborIndex& neighbors,
                                          LabelNormalization norm = LabelNormalization::all_entities,
                                          std::size_t parallelism = 1);

}  // namespace pairsem
