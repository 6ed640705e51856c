#include "pairsem/types.hpp"

#include <algorithm>
#include <cmath>

#include "pairsem/errors.hpp"
#include "pairsem/text.hpp"

namespace pairsem {

namespace {

void validate_unit(const std::string& id, const std::string& text,
                   const std::optional<Vector>& embedding, std::size_t dim, const char* what)
{
    if (id.empty()) {
        throw precondition_error(std::string(what) + " id is empty");
    }
    if (text.empty()) {
        throw precondition_error(std::string(what) + " '" + id + "' has empty text");
    }
    if (!embedding) {
        return;
    }
    if (dim != 0 && embedding->size() != dim) {
        throw precondition_error(std::string(what) + " '" + id + "' embedding has dimension " +
                                 std::to_string(embedding->size()) + ", expected " +
                                 std::to_string(dim));
    }
    for (double v : *embedding) {
        if (!std::isfinite(v)) {
            throw precondition_error(std::string(what) + " '" + id +
                                     "' embedding has a non-finite component");
        }
    }
}

std::unordered_map<std::string, std::size_t> positions(const std::vector<std::string>& items)
{
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < items.size(); ++i) {
        pos.emplace(items[i], i);
    }
    return pos;
}

void check_map(std::vector<std::string>& set, std::map<std::string, std::string>& map,
               const char* what)
{
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    if (set.empty()) {
        throw format_error(std::string("vocabulary has no ") + what);
    }
    for (const auto& [surface, canonical] : map) {
        if (!std::binary_search(set.begin(), set.end(), canonical)) {
            throw format_error(std::string("vocabulary ") + what + " map sends '" + surface +
                               "' to '" + canonical + "', which is not in the set");
        }
    }
    for (const auto& canonical : set) {
        auto [it, inserted] = map.emplace(canonical, canonical);
        if (!inserted && it->second != canonical) {
            throw format_error(std::string("vocabulary ") + what + " map is not idempotent at '" +
                               canonical + "'");
        }
    }
}

}  // namespace

void validate(const Document& doc, std::size_t dim)
{
    validate_unit(doc.doc_id, doc.text, doc.embedding, dim, "document");
}

void validate(const Query& query, std::size_t dim)
{
    validate_unit(query.query_id, query.text, query.embedding, dim, "query");
}

std::optional<SemanticPair> make_semantic_pair(std::string_view entity, std::string_view aspect)
{
    SemanticPair p{normalize_surface(entity), normalize_surface(aspect)};
    if (p.entity.empty() || p.aspect.empty()) {
        return std::nullopt;
    }
    return p;
}

bool PairSet::add(SemanticPair pair)
{
    if (contains(pair)) {
        return false;
    }
    pairs_.push_back(std::move(pair));
    return true;
}

bool PairSet::contains(const SemanticPair& pair) const
{
    return std::find(pairs_.begin(), pairs_.end(), pair) != pairs_.end();
}

std::vector<std::string> PairSet::entities() const
{
    std::vector<std::string> out;
    for (const auto& p : pairs_) {
        if (std::find(out.begin(), out.end(), p.entity) == out.end()) {
            out.push_back(p.entity);
        }
    }
    return out;
}

std::vector<std::string> PairSet::aspects() const
{
    std::vector<std::string> out;
    for (const auto& p : pairs_) {
        if (std::find(out.begin(), out.end(), p.aspect) == out.end()) {
            out.push_back(p.aspect);
        }
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> entities, std::vector<std::string> aspects,
                       std::map<std::string, std::string> entity_map,
                       std::map<std::string, std::string> aspect_map)
    : entities_(std::move(entities)),
      aspects_(std::move(aspects)),
      entity_map_(std::move(entity_map)),
      aspect_map_(std::move(aspect_map))
{
    check_map(entities_, entity_map_, "entities");
    check_map(aspects_, aspect_map_, "aspects");
    entity_pos_ = positions(entities_);
    aspect_pos_ = positions(aspects_);
}

std::optional<std::string> Vocabulary::canonical_entity(std::string_view surface) const
{
    auto it = entity_map_.find(normalize_surface(surface));
    if (it == entity_map_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::string> Vocabulary::canonical_aspect(std::string_view surface) const
{
    auto it = aspect_map_.find(normalize_surface(surface));
    if (it == aspect_map_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::size_t> Vocabulary::entity_index(const std::string& canonical) const
{
    auto it = entity_pos_.find(canonical);
    if (it == entity_pos_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::size_t> Vocabulary::aspect_index(const std::string& canonical) const
{
    auto it = aspect_pos_.find(canonical);
    if (it == aspect_pos_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<double> RelevanceVector::at(const std::string& key) const
{
    if (!keys) {
        return std::nullopt;
    }
    auto it = std::lower_bound(keys->begin(), keys->end(), key);
    if (it == keys->end() || *it != key) {
        // Keys built from a vocabulary are sorted; fall back for ad-hoc ones.
        it = std::find(keys->begin(), keys->end(), key);
        if (it == keys->end()) {
            return std::nullopt;
        }
    }
    return values.at(static_cast<std::size_t>(it - keys->begin()));
}

}  // namespace pairsem
