#include "pairsem/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"
#include "pairsem/random.hpp"

namespace pairsem {

namespace {

void check_range(const IntRange& r, const char* name)
{
    if (r.min < 1 || r.max < r.min) {
        throw precondition_error(std::string("synth spec: ") + name + " must satisfy 1 <= min <= max");
    }
}

/// Round-robin topic share: items i with i % topics == t.
std::vector<std::size_t> topic_members(std::size_t n, std::size_t topics, std::size_t t)
{
    std::vector<std::size_t> out;
    for (std::size_t i = t; i < n; i += topics) {
        out.push_back(i);
    }
    return out;
}

std::size_t smallest_topic(std::size_t n, std::size_t topics) { return n / topics; }

/// Lowercase consonant-vowel pseudo-words, unique across one generator.
class WordMaker {
  public:
    explicit WordMaker(Rng& rng) : rng_(rng) {}

    std::string next(std::size_t syllables)
    {
        static constexpr std::string_view consonants = "bdfgklmnprstvz";
        static constexpr std::string_view vowels = "aeiou";
        for (;;) {
            std::string w;
            for (std::size_t s = 0; s < syllables; ++s) {
                w += consonants[uniform_below(rng_, consonants.size())];
                w += vowels[uniform_below(rng_, vowels.size())];
            }
            if (used_.insert(w).second) {
                return w;
            }
        }
    }

  private:
    Rng& rng_;
    std::set<std::string> used_;
};

std::size_t binomial(Rng& rng, std::size_t n, double p)
{
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        k += uniform_unit(rng) < p;
    }
    return k;
}

std::string pair_sentence(const std::string& e, const std::string& a)
{
    return "ENTITY: " + e + " | ASPECT: " + a + ".";
}

}  // namespace

void SynthSpec::validate() const
{
    if (n_docs < 1 || n_entities < 1 || n_aspects < 1 || n_topics < 1) {
        throw precondition_error("synth spec: counts must be at least 1");
    }
    check_range(entities_per_doc, "entities_per_doc");
    check_range(aspects_per_doc_entity, "aspects_per_doc_entity");
    check_range(query_pairs, "query_pairs");
    check_range(distractor_words, "distractor_words");
    if (distractor_sentences.max < distractor_sentences.min) {
        throw precondition_error("synth spec: distractor_sentences must satisfy min <= max");
    }
    if (n_topics > n_entities || n_topics > n_aspects) {
        throw precondition_error("synth spec: more topics than entities or aspects");
    }
    std::size_t topic_entities = smallest_topic(n_entities, n_topics);
    std::size_t topic_aspects = smallest_topic(n_aspects, n_topics);
    if (entities_per_doc.max > topic_entities) {
        throw precondition_error("synth spec infeasible: " + std::to_string(entities_per_doc.max) +
                                 " entities per document but only " +
                                 std::to_string(topic_entities) + " per topic");
    }
    if (!(aspects_per_entity >= 1.0) || aspects_per_entity > static_cast<double>(topic_aspects)) {
        throw precondition_error("synth spec infeasible: aspects_per_entity must lie in [1, " +
                                 std::to_string(topic_aspects) + "]");
    }
    if (aspects_per_doc_entity.max > topic_aspects) {
        throw precondition_error(
            "synth spec infeasible: more pairs per entity than the entity x aspect grid allows");
    }
    if (query_pairs.min > entities_per_doc.min * aspects_per_doc_entity.min) {
        throw precondition_error("synth spec infeasible: queries need more pairs than a document has");
    }
    if (entity_synonym_groups > n_entities || aspect_synonym_groups > n_aspects) {
        throw precondition_error("synth spec: more synonym groups than names");
    }
    if (!(queries_per_doc > 0.0)) {
        throw precondition_error("synth spec: queries_per_doc must be positive");
    }
    if (relevance_threshold < 1) {
        throw precondition_error("synth spec: relevance_threshold must be at least 1");
    }
    if (distractor_vocabulary < 1) {
        throw precondition_error("synth spec: distractor_vocabulary must be at least 1");
    }
}

void to_json(nlohmann::json& j, const SynthSpec& s)
{
    auto range = [](const IntRange& r) { return nlohmann::json{{"min", r.min}, {"max", r.max}}; };
    j = {{"seed", s.seed},
         {"n_docs", s.n_docs},
         {"n_entities", s.n_entities},
         {"n_aspects", s.n_aspects},
         {"n_topics", s.n_topics},
         {"aspects_per_entity", s.aspects_per_entity},
         {"entities_per_doc", range(s.entities_per_doc)},
         {"aspects_per_doc_entity", range(s.aspects_per_doc_entity)},
         {"entity_synonym_groups", s.entity_synonym_groups},
         {"aspect_synonym_groups", s.aspect_synonym_groups},
         {"queries_per_doc", s.queries_per_doc},
         {"query_pairs", range(s.query_pairs)},
         {"relevance_threshold", s.relevance_threshold},
         {"distractor_vocabulary", s.distractor_vocabulary},
         {"distractor_sentences", range(s.distractor_sentences)},
         {"distractor_words", range(s.distractor_words)}};
}

void from_json(const nlohmann::json& j, SynthSpec& s)
{
    try {
        auto range = [&](const char* key, IntRange& r) {
            if (j.contains(key)) {
                r.min = j.at(key).at("min");
                r.max = j.at(key).at("max");
            }
        };
        auto get = [&](const char* key, auto& v) {
            if (j.contains(key)) {
                j.at(key).get_to(v);
            }
        };
        static const std::set<std::string> known = {
            "seed", "n_docs", "n_entities", "n_aspects", "n_topics", "aspects_per_entity",
            "entities_per_doc", "aspects_per_doc_entity", "entity_synonym_groups",
            "aspect_synonym_groups", "queries_per_doc", "query_pairs", "relevance_threshold",
            "distractor_vocabulary", "distractor_sentences", "distractor_words"};
        for (const auto& [k, v] : j.items()) {
            if (!known.count(k)) {
                throw format_error("unknown synth spec field '" + k + "'");
            }
        }
        get("seed", s.seed);
        get("n_docs", s.n_docs);
        get("n_entities", s.n_entities);
        get("n_aspects", s.n_aspects);
        get("n_topics", s.n_topics);
        get("aspects_per_entity", s.aspects_per_entity);
        range("entities_per_doc", s.entities_per_doc);
        range("aspects_per_doc_entity", s.aspects_per_doc_entity);
        get("entity_synonym_groups", s.entity_synonym_groups);
        get("aspect_synonym_groups", s.aspect_synonym_groups);
        get("queries_per_doc", s.queries_per_doc);
        range("query_pairs", s.query_pairs);
        get("relevance_threshold", s.relevance_threshold);
        get("distractor_vocabulary", s.distractor_vocabulary);
        range("distractor_sentences", s.distractor_sentences);
        range("distractor_words", s.distractor_words);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bad synth spec: ") + e.what());
    }
}

SynthCorpus generate_corpus(const SynthSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    WordMaker words(rng);
    SynthCorpus c;

    // Names: two pseudo-words each; an alternative surface shares no word with its canonical.
    struct Name {
        std::string canonical;
        std::string alternative;  // empty when the name has no synonym
    };
    auto make_names = [&](std::size_t n, std::size_t synonyms) {
        std::vector<Name> names(n);
        for (auto& nm : names) {
            std::string a = words.next(2), b = words.next(3);
            nm.canonical = a + " " + b;
        }
        for (std::size_t i : sample_without_replacement(rng, n, synonyms)) {
            std::string a = words.next(2), b = words.next(3);
            names[i].alternative = a + " " + b;
        }
        return names;
    };
    std::vector<Name> entities = make_names(spec.n_entities, spec.entity_synonym_groups);
    std::vector<Name> aspects = make_names(spec.n_aspects, spec.aspect_synonym_groups);
    std::vector<std::string> distractors;
    for (std::size_t i = 0; i < spec.distractor_vocabulary; ++i) {
        distractors.push_back(words.next(2 + i % 2));
    }
    for (const auto* list : {&entities, &aspects}) {
        for (const auto& nm : *list) {
            c.lexicon[nm.canonical] = nm.canonical;
            if (!nm.alternative.empty()) {
                c.lexicon[nm.alternative] = nm.canonical;
            }
        }
    }
    for (const auto& nm : entities) {
        c.entities.push_back(nm.canonical);
    }
    for (const auto& nm : aspects) {
        c.aspects.push_back(nm.canonical);
    }
    std::sort(c.entities.begin(), c.entities.end());
    std::sort(c.aspects.begin(), c.aspects.end());

    auto surface = [&](const Name& nm) {
        if (nm.alternative.empty() || uniform_below(rng, 2) == 0) {
            return nm.canonical;
        }
        return nm.alternative;
    };

    // Allowed aspects per entity, drawn from the entity's topic.
    std::vector<std::vector<std::size_t>> allowed(spec.n_entities);
    for (std::size_t e = 0; e < spec.n_entities; ++e) {
        auto pool = topic_members(spec.n_aspects, spec.n_topics, e % spec.n_topics);
        std::size_t trials = pool.size() - 1;
        double p = trials ? (spec.aspects_per_entity - 1.0) / static_cast<double>(trials) : 0.0;
        std::size_t k = 1 + binomial(rng, trials, p);
        k = std::max(k, spec.aspects_per_doc_entity.max);
        for (std::size_t i : sample_without_replacement(rng, pool.size(), k)) {
            allowed[e].push_back(pool[i]);
        }
        std::sort(allowed[e].begin(), allowed[e].end());
    }

    const std::size_t id_width = std::to_string(spec.n_docs).size();
    auto pad = [&](std::size_t i) {
        std::string s = std::to_string(i);
        return std::string(id_width - std::min(id_width, s.size()), '0') + s;
    };

    struct Planted {
        std::size_t e, a;
        std::string es, as;
    };
    std::vector<std::vector<Planted>> doc_pairs(spec.n_docs);
    for (std::size_t d = 0; d < spec.n_docs; ++d) {
        std::string id = "d" + pad(d);
        auto topic_e = topic_members(spec.n_entities, spec.n_topics, d % spec.n_topics);
        std::size_t ne = uniform_int(rng, spec.entities_per_doc.min, spec.entities_per_doc.max);
        std::vector<std::string> sentences;
        PairSet gold(id, PairStage::final), surf(id, PairStage::initial);
        for (std::size_t ei : sample_without_replacement(rng, topic_e.size(), ne)) {
            std::size_t e = topic_e[ei];
            std::size_t na = uniform_int(rng, spec.aspects_per_doc_entity.min,
                                         std::min(spec.aspects_per_doc_entity.max, allowed[e].size()));
            for (std::size_t ai : sample_without_replacement(rng, allowed[e].size(), na)) {
                std::size_t a = allowed[e][ai];
                Planted p{e, a, surface(entities[e]), surface(aspects[a])};
                gold.add({entities[e].canonical, aspects[a].canonical});
                surf.add({p.es, p.as});
                sentences.push_back(pair_sentence(p.es, p.as));
                doc_pairs[d].push_back(std::move(p));
            }
        }
        std::size_t nd = uniform_int(rng, spec.distractor_sentences.min, spec.distractor_sentences.max);
        for (std::size_t s = 0; s < nd; ++s) {
            std::size_t nw = uniform_int(rng, spec.distractor_words.min, spec.distractor_words.max);
            std::string sentence;
            for (std::size_t w = 0; w < nw; ++w) {
                sentence += (w ? " " : "") + distractors[uniform_below(rng, distractors.size())];
            }
            sentence += ".";
            std::size_t at = uniform_below(rng, sentences.size() + 1);
            sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), sentence);
        }
        std::string text;
        for (const auto& s : sentences) {
            text += (text.empty() ? "" : " ") + s;
        }
        c.docs.push_back({id, text, std::nullopt});
        c.gold_pairs.emplace(id, std::move(gold));
        c.gold_surface_pairs.emplace(id, std::move(surf));
    }

    std::size_t n_queries = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(spec.queries_per_doc * static_cast<double>(spec.n_docs))));
    std::vector<std::size_t> sources;
    while (sources.size() < n_queries) {
        std::vector<std::size_t> order(spec.n_docs);
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        shuffle(order, rng);
        for (std::size_t i = 0; i < order.size() && sources.size() < n_queries; ++i) {
            sources.push_back(order[i]);
        }
    }
    const std::size_t qid_width = std::to_string(n_queries).size();
    for (std::size_t q = 0; q < n_queries; ++q) {
        std::string qs = std::to_string(q);
        std::string id = "q" + std::string(qid_width - std::min(qid_width, qs.size()), '0') + qs;
        const auto& planted = doc_pairs[sources[q]];
        std::size_t np = std::min(planted.size(), uniform_int(rng, spec.query_pairs.min, spec.query_pairs.max));
        PairSet gold(id, PairStage::final, OwnerKind::query);
        std::string text;
        for (std::size_t i : sample_without_replacement(rng, planted.size(), np)) {
            const auto& p = planted[i];
            gold.add({entities[p.e].canonical, aspects[p.a].canonical});
            text += (text.empty() ? "" : " ") +
                    pair_sentence(surface(entities[p.e]), surface(aspects[p.a]));
        }
        auto& rel = c.qrels[id];
        for (const auto& [doc_id, pairs] : c.gold_pairs) {
            std::size_t shared = 0;
            for (const auto& p : gold.pairs()) {
                shared += pairs.contains(p);
            }
            if (shared >= spec.relevance_threshold) {
                rel.insert(doc_id);
            }
        }
        c.queries.push_back({id, text, std::nullopt});
        c.gold_query_pairs.emplace(id, std::move(gold));
    }
    return c;
}

double mean_aspects_per_entity(const PairSetMap& pairs)
{
    std::map<std::string, std::set<std::string>> per_entity;
    for (const auto& [id, ps] : pairs) {
        for (const auto& p : ps.pairs()) {
            per_entity[p.entity].insert(p.aspect);
        }
    }
    if (per_entity.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& [e, as] : per_entity) {
        total += static_cast<double>(as.size());
    }
    return total / static_cast<double>(per_entity.size());
}

void save_corpus(const std::string& dir, const SynthSpec& spec, const SynthCorpus& corpus)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::path root(dir);
    auto values = [](const PairSetMap& m) {
        std::vector<PairSet> v;
        for (const auto& [id, ps] : m) {
            v.push_back(ps);
        }
        return v;
    };
    save_jsonl(corpus.docs, root / "documents.jsonl");
    save_jsonl(corpus.queries, root / "queries.jsonl");
    save_jsonl(values(corpus.gold_pairs), root / "gold_pairs.jsonl");
    save_jsonl(values(corpus.gold_surface_pairs), root / "gold_surface_pairs.jsonl");
    save_jsonl(values(corpus.gold_query_pairs), root / "gold_query_pairs.jsonl");
    save_qrels((root / "qrels.tsv").string(), corpus.qrels);
    save_json(root / "lexicon.json", nlohmann::json(corpus.lexicon));
    save_json(root / "spec.json", nlohmann::json(spec));
}

}  // namespace pairsem
