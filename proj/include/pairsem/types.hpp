#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pairsem {

using Vector = std::vector<double>;

struct Document {
    std::string doc_id;
    std::string text;
    std::optional<Vector> embedding;

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string query_id;
    std::string text;
    std::optional<Vector> embedding;

    bool operator==(const Query&) const = default;
};

/// Throws precondition_error when the id or text is empty or the embedding
/// has a wrong dimension or non-finite components. `dim == 0` skips the
/// dimension check.
void validate(const Document& doc, std::size_t dim = 0);
void validate(const Query& query, std::size_t dim = 0);

struct SemanticPair {
    std::string entity;
    std::string aspect;

    auto operator<=>(const SemanticPair&) const = default;
};

/// Builds a pair from raw surfaces, normalizing both. Returns nullopt when
/// either side is empty after normalization.
std::optional<SemanticPair> make_semantic_pair(std::string_view entity, std::string_view aspect);

enum class PairStage { initial, final };
enum class OwnerKind { document, query };

/// Insertion-ordered set of semantic pairs owned by one document or query.
class PairSet {
  public:
    PairSet() = default;
    PairSet(std::string owner_id, PairStage stage, OwnerKind kind = OwnerKind::document)
        : owner_id_(std::move(owner_id)), stage_(stage), kind_(kind)
    {}

    /// Adds the pair unless already present. Returns true when inserted.
    bool add(SemanticPair pair);
    bool contains(const SemanticPair& pair) const;

    const std::string& owner_id() const { return owner_id_; }
    PairStage stage() const { return stage_; }
    OwnerKind owner_kind() const { return kind_; }
    const std::vector<SemanticPair>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    /// Distinct entities in first-occurrence order.
    std::vector<std::string> entities() const;
    std::vector<std::string> aspects() const;

    bool operator==(const PairSet& o) const
    {
        return owner_id_ == o.owner_id_ && stage_ == o.stage_ && kind_ == o.kind_ &&
               pairs_ == o.pairs_;
    }

  private:
    std::string owner_id_;
    PairStage stage_ = PairStage::initial;
    OwnerKind kind_ = OwnerKind::document;
    std::vector<SemanticPair> pairs_;
};

/// Merged entity/aspect sets with their surface-to-representative maps.
class Vocabulary {
  public:
    Vocabulary() = default;
    /// Validates: non-empty sets, map values inside their set, maps
    /// idempotent. Representatives are added to the maps as fixed points.
    Vocabulary(std::vector<std::string> entities, std::vector<std::string> aspects,
               std::map<std::string, std::string> entity_map,
               std::map<std::string, std::string> aspect_map);

    /// Sorted canonical entities. Index order is used by relevance vectors.
    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<std::string>& aspects() const { return aspects_; }
    const std::map<std::string, std::string>& entity_map() const { return entity_map_; }
    const std::map<std::string, std::string>& aspect_map() const { return aspect_map_; }

    /// Normalizes then maps. nullopt for surfaces outside the vocabulary.
    std::optional<std::string> canonical_entity(std::string_view surface) const;
    std::optional<std::string> canonical_aspect(std::string_view surface) const;

    std::optional<std::size_t> entity_index(const std::string& canonical) const;
    std::optional<std::size_t> aspect_index(const std::string& canonical) const;

    bool operator==(const Vocabulary& o) const
    {
        return entities_ == o.entities_ && aspects_ == o.aspects_ &&
               entity_map_ == o.entity_map_ && aspect_map_ == o.aspect_map_;
    }

  private:
    std::vector<std::string> entities_;
    std::vector<std::string> aspects_;
    std::map<std::string, std::string> entity_map_;
    std::map<std::string, std::string> aspect_map_;
    std::unordered_map<std::string, std::size_t> entity_pos_;
    std::unordered_map<std::string, std::size_t> aspect_pos_;
};

struct CandidateSets {
    std::string doc_id;
    std::vector<std::string> candidate_entities;
    std::vector<std::string> candidate_aspects;

    bool operator==(const CandidateSets&) const = default;
};

/// Sigmoid relevance of one owner to every key (canonical entity). Keys are
/// shared between vectors built against the same vocabulary.
struct RelevanceVector {
    std::string owner_id;
    std::shared_ptr<const std::vector<std::string>> keys;
    std::vector<double> values;

    std::optional<double> at(const std::string& key) const;

    bool operator==(const RelevanceVector& o) const
    {
        return owner_id == o.owner_id && values == o.values &&
               ((keys && o.keys && *keys == *o.keys) || (!keys && !o.keys));
    }
};

/// Soft labels for one document's positive entities.
struct SoftLabels {
    std::string doc_id;
    std::map<std::string, double> labels;

    bool operator==(const SoftLabels&) const = default;
};

/// Dense vector sidecar record keyed by document, query, entity or aspect id.
struct EmbeddingRecord {
    std::string id;
    Vector embedding;

    bool operator==(const EmbeddingRecord&) const = default;
};

using PairSetMap = std::map<std::string, PairSet>;

}  // namespace pairsem
