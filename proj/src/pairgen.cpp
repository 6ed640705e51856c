#include "pairsem/pairgen.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "pairsem/errors.hpp"
#include "pairsem/parallel.hpp"
#include "pairsem/text.hpp"

namespace pairsem {

namespace prompts {
const char* const pair_instruction =
    "Given a scientific document, identify all scientific entities. Then, for each entity, find "
    "all associated aspects and generate (entity, aspect) pairs";
const char* const pair_format =
    "Output only (entity, aspect) pairs using the following XML structure for each pair: "
    "<pair><entity>entity name</entity><aspect>aspect phrase</aspect></pair>";
const char* const candidate_pair_instruction =
    "Given a scientific document, find all relevant entities from [{candidate_entities}]. Then, "
    "for each entity, find all associated aspects from [{candidate_aspects}], and generate "
    "relevant (entity, aspect) pairs";
const char* const cluster_instruction =
    "Given a list of scientific entities, find sets of synonyms that describe the same academic "
    "concept. Then, for each synonym set, generate a representative entity.";
const char* const cluster_format =
    "Output synonyms and representatives using the following XML structure for each set: "
    "<set><entities>entity1, entity2,...</entities><rep>representative entity</rep></set>";
}  // namespace prompts

namespace {

std::size_t count_occurrences(std::string_view hay, std::string_view needle)
{
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos;
         pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

/// Single left-to-right pass so substituted values are never re-expanded.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string ascii_lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

/// Content between <tag> and </tag> inside `body`; `lower` is its lowercase copy.
std::optional<std::string_view> inner(std::string_view body, std::string_view lower,
                                      std::string_view tag)
{
    std::string open = "<" + std::string(tag) + ">";
    std::string close = "</" + std::string(tag) + ">";
    auto a = lower.find(open);
    if (a == std::string_view::npos) {
        return std::nullopt;
    }
    a += open.size();
    auto b = lower.find(close, a);
    if (b == std::string_view::npos) {
        return std::nullopt;
    }
    return body.substr(a, b - a);
}

}  // namespace

std::vector<std::string> PromptTemplate::required_placeholders() const
{
    switch (kind) {
    case PromptKind::pair:
        return {"document"};
    case PromptKind::pair_with_candidates:
        return {"document", "candidate_entities", "candidate_aspects"};
    case PromptKind::cluster_merge:
        return {"cluster_items"};
    }
    return {};
}

LlmRequest PromptTemplate::render(const std::map<std::string, std::string>& values) const
{
    for (const auto& name : required_placeholders()) {
        std::string ph = "{" + name + "}";
        auto n = count_occurrences(system, ph) + count_occurrences(user, ph);
        if (n != 1) {
            throw precondition_error("prompt placeholder " + ph + " occurs " + std::to_string(n) +
                                     " times");
        }
        if (!values.count(name)) {
            throw precondition_error("no value for prompt placeholder " + ph);
        }
    }
    LlmRequest req;
    req.system_prompt = substitute(system, values);
    req.user_content = substitute(user, values);
    return req;
}

PromptTemplate PromptTemplate::pair()
{
    return {PromptKind::pair,
            std::string(prompts::pair_instruction) + ".\n\n" + prompts::pair_format,
            "Document:\n{document}"};
}

PromptTemplate PromptTemplate::pair_with_candidates()
{
    return {PromptKind::pair_with_candidates,
            std::string(prompts::candidate_pair_instruction) + ".\n\n" + prompts::pair_format,
            "Document:\n{document}"};
}

PromptTemplate PromptTemplate::cluster_merge()
{
    return {PromptKind::cluster_merge,
            std::string(prompts::cluster_instruction) + "\n\n" + prompts::cluster_format,
            "{cluster_items}"};
}

RenderedPrompt render_pair_prompt(const Document& doc,
                                  const std::optional<CandidateSets>& candidates,
                                  const PromptOptions& opts)
{
    if (doc.text.empty()) {
        throw precondition_error("document '" + doc.doc_id + "' has empty text");
    }
    RenderedPrompt out;
    if (!candidates) {
        out.request = PromptTemplate::pair().render({{"document", doc.text}});
    } else {
        if (candidates->candidate_entities.empty() || candidates->candidate_aspects.empty()) {
            throw precondition_error("candidate lists for '" + doc.doc_id + "' are empty");
        }
        auto ents = candidates->candidate_entities;
        auto asps = candidates->candidate_aspects;
        auto budget = static_cast<std::size_t>(std::max(1, opts.max_tokens));
        while (estimate_tokens(join(ents, ", ")) + estimate_tokens(join(asps, ", ")) > budget &&
               (ents.size() > 1 || asps.size() > 1)) {
            if (ents.size() >= asps.size() && ents.size() > 1) {
                ents.pop_back();
                ++out.truncated_entities;
            } else {
                asps.pop_back();
                ++out.truncated_aspects;
            }
        }
        out.request = PromptTemplate::pair_with_candidates().render(
            {{"document", doc.text},
             {"candidate_entities", join(ents, ", ")},
             {"candidate_aspects", join(asps, ", ")}});
    }
    out.request.temperature = opts.temperature;
    out.request.max_tokens = opts.max_tokens;
    return out;
}

std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string xml_unescape(std::string_view s)
{
    static const std::pair<std::string_view, char> entities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        bool matched = false;
        if (s[i] == '&') {
            for (const auto& [name, ch] : entities) {
                if (s.substr(i, name.size()) == name) {
                    out.push_back(ch);
                    i += name.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            out.push_back(s[i++]);
        }
    }
    return out;
}

ParsedPairs parse_pair_xml(std::string_view text)
{
    ParsedPairs out;
    const std::string lower = ascii_lower(text);
    constexpr std::string_view open = "<pair>";
    constexpr std::string_view close = "</pair>";
    std::set<SemanticPair> seen;
    std::size_t pos = 0;
    while ((pos = lower.find(open, pos)) != std::string::npos) {
        std::size_t start = pos + open.size();
        auto end = lower.find(close, start);
        auto next = lower.find(open, start);
        if (end == std::string::npos || (next != std::string::npos && next < end)) {
            ++out.malformed;
            pos = start;
            continue;
        }
        auto body = text.substr(start, end - start);
        auto body_lower = std::string_view(lower).substr(start, end - start);
        auto entity = inner(body, body_lower, "entity");
        auto aspect = inner(body, body_lower, "aspect");
        std::optional<SemanticPair> pair;
        if (entity && aspect) {
            pair = make_semantic_pair(xml_unescape(*entity), xml_unescape(*aspect));
        }
        if (!pair) {
            ++out.malformed;
        } else if (seen.insert(*pair).second) {
            out.pairs.push_back(std::move(*pair));
        }
        pos = end + close.size();
    }
    out.empty_extraction = out.pairs.empty();
    return out;
}

std::string serialize_pair_xml(const std::vector<SemanticPair>& pairs)
{
    std::string out;
    for (const auto& p : pairs) {
        out += "<pair><entity>" + xml_escape(p.entity) + "</entity><aspect>" +
               xml_escape(p.aspect) + "</aspect></pair>\n";
    }
    return out;
}

PairSet canonicalize_pairs(const std::vector<SemanticPair>& raw, const Vocabulary& vocab,
                           std::string owner_id, OwnerKind kind, std::size_t* dropped)
{
    PairSet out(std::move(owner_id), PairStage::final, kind);
    for (const auto& p : raw) {
        auto e = vocab.canonical_entity(p.entity);
        auto a = vocab.canonical_aspect(p.aspect);
        if (!e || !a) {
            if (dropped) {
                ++*dropped;
            }
            continue;
        }
        out.add({*e, *a});
    }
    return out;
}

GenerationResult generate_pairs_for_corpus(const std::vector<Document>& docs, GenerationMode mode,
                                           LlmProvider& llm,
                                           const std::map<std::string, CandidateSets>* candidates,
                                           const Vocabulary* vocab, const GenerationOptions& opts)
{
    std::set<std::string> ids;
    for (const auto& d : docs) {
        validate(d);
        if (!ids.insert(d.doc_id).second) {
            throw precondition_error("duplicate doc_id '" + d.doc_id + "'");
        }
    }
    const bool augmented = mode == GenerationMode::candidate_augmented;
    if (augmented) {
        if (!candidates || !vocab) {
            throw precondition_error("candidate-augmented generation needs candidates and a vocabulary");
        }
        for (const auto& d : docs) {
            if (!candidates->count(d.doc_id)) {
                throw precondition_error("no candidate sets for document '" + d.doc_id + "'");
            }
        }
    }

    struct Outcome {
        PairSet pairs;
        std::size_t retries = 0;
        std::size_t malformed = 0;
        std::size_t dropped = 0;
        std::size_t outside = 0;
        bool truncated = false;
        bool failed = false;
    };
    std::vector<Outcome> outcomes(docs.size());

    parallel_for(docs.size(), opts.parallelism, [&](std::size_t i) {
        const auto& doc = docs[i];
        Outcome& o = outcomes[i];
        std::optional<CandidateSets> cand;
        if (augmented) {
            const auto& c = candidates->at(doc.doc_id);
            if (!c.candidate_entities.empty() && !c.candidate_aspects.empty()) {
                cand = c;
            }
        }
        auto prompt = render_pair_prompt(doc, cand, opts.prompt);
        o.truncated = prompt.truncated_entities + prompt.truncated_aspects > 0;
        ParsedPairs parsed;
        try {
            parsed = parse_pair_xml(llm.generate(prompt.request));
            o.malformed += parsed.malformed;
            if (parsed.empty_extraction) {
                ++o.retries;
                parsed = parse_pair_xml(llm.generate(prompt.request));
                o.malformed += parsed.malformed;
            }
        } catch (const provider_error&) {
            o.failed = true;
            parsed = {};
        }
        if (!augmented) {
            o.pairs = PairSet(doc.doc_id, PairStage::initial);
            for (auto& p : parsed.pairs) {
                o.pairs.add(std::move(p));
            }
            return;
        }
        o.pairs = canonicalize_pairs(parsed.pairs, *vocab, doc.doc_id, OwnerKind::document,
                                     &o.dropped);
        const auto& c = candidates->at(doc.doc_id);
        for (const auto& p : o.pairs.pairs()) {
            bool in_e = std::find(c.candidate_entities.begin(), c.candidate_entities.end(),
                                  p.entity) != c.candidate_entities.end();
            bool in_a = std::find(c.candidate_aspects.begin(), c.candidate_aspects.end(),
                                  p.aspect) != c.candidate_aspects.end();
            if (!in_e || !in_a) {
                ++o.outside;
            }
        }
    });

    GenerationResult result;
    auto& st = result.stats;
    st.documents = docs.size();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& o = outcomes[i];
        st.total_pairs += o.pairs.size();
        st.retries += o.retries;
        st.malformed_fragments += o.malformed;
        st.unknown_dropped += o.dropped;
        st.outside_candidates += o.outside;
        st.truncated_prompts += o.truncated ? 1 : 0;
        if (o.pairs.empty()) {
            ++st.empty_documents;
        }
        if (o.failed) {
            st.failed_doc_ids.push_back(docs[i].doc_id);
        }
        result.pairs.emplace(docs[i].doc_id, std::move(o.pairs));
    }
    return result;
}

}  // namespace pairsem
