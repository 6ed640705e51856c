#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pairsem/providers.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

enum class PromptKind { pair, pair_with_candidates, cluster_merge };

/// Instruction/format text plus a user-content template with {placeholders}.
struct PromptTemplate {
    PromptKind kind;
    std::string system;
    std::string user;

    /// Placeholders that must each occur exactly once across system + user.
    std::vector<std::string> required_placeholders() const;

    /// Substitutes every placeholder. Throws precondition_error if a required
    /// placeholder is missing, duplicated, or has no value.
    LlmRequest render(const std::map<std::string, std::string>& values) const;

    static PromptTemplate pair();
    static PromptTemplate pair_with_candidates();
    static PromptTemplate cluster_merge();
};

namespace prompts {
extern const char* const pair_instruction;
extern const char* const pair_format;
extern const char* const candidate_pair_instruction;
extern const char* const cluster_instruction;
extern const char* const cluster_format;
}  // namespace prompts

struct PromptOptions {
    double temperature = 0.0;
    int max_tokens = 2048;
};

struct RenderedPrompt {
    LlmRequest request;
    /// Candidates dropped from the end of each list to fit the token budget.
    std::size_t truncated_entities = 0;
    std::size_t truncated_aspects = 0;
};

/// Zero-shot prompt when `candidates` is empty, candidate-augmented otherwise.
/// Candidate lists are rendered comma-separated in stored order and truncated
/// to a prefix when their estimated size exceeds `opts.max_tokens`.
RenderedPrompt render_pair_prompt(const Document& doc,
                                  const std::optional<CandidateSets>& candidates,
                                  const PromptOptions& opts = {});

struct ParsedPairs {
    std::vector<SemanticPair> pairs;
    std::size_t malformed = 0;
    /// No well-formed pair was found. Callers may retry once.
    bool empty_extraction = false;
};

/// Extracts every well-formed <pair><entity>..</entity><aspect>..</aspect></pair>
/// element from free text. Never throws.
ParsedPairs parse_pair_xml(std::string_view text);

/// Inverse of parse_pair_xml for a list of normalized pairs.
std::string serialize_pair_xml(const std::vector<SemanticPair>& pairs);

std::string xml_escape(std::string_view s);
std::string xml_unescape(std::string_view s);

enum class GenerationMode { zero_shot, candidate_augmented };

struct GenerationOptions {
    PromptOptions prompt;
    std::size_t parallelism = 4;
};

struct GenerationStats {
    std::size_t documents = 0;
    std::size_t total_pairs = 0;
    std::size_t retries = 0;
    std::size_t empty_documents = 0;
    std::size_t malformed_fragments = 0;
    /// Candidate-augmented mode: pairs dropped because a side stayed unknown
    /// after canonicalization.
    std::size_t unknown_dropped = 0;
    /// Candidate-augmented mode: kept pairs whose entity or aspect is outside
    /// the document's candidate lists.
    std::size_t outside_candidates = 0;
    std::size_t truncated_prompts = 0;
    std::vector<std::string> failed_doc_ids;

    double pairs_per_doc() const
    {
        return documents ? static_cast<double>(total_pairs) / static_cast<double>(documents) : 0.0;
    }
};

struct GenerationResult {
    PairSetMap pairs;
    GenerationStats stats;
};

/// One pair set per document. Zero-shot output is stage=initial. Candidate
/// output is stage=final, mapped through the vocabulary with unknown surfaces
/// dropped; it requires a candidate set for every document and a vocabulary.
GenerationResult generate_pairs_for_corpus(const std::vector<Document>& docs, GenerationMode mode,
                                           LlmProvider& llm,
                                           const std::map<std::string, CandidateSets>* candidates,
                                           const Vocabulary* vocab,
                                           const GenerationOptions& opts = {});

/// Maps raw pairs into the vocabulary. Pairs with an unknown side are counted
/// in `dropped` and skipped.
PairSet canonicalize_pairs(const std::vector<SemanticPair>& raw, const Vocabulary& vocab,
                           std::string owner_id, OwnerKind kind, std::size_t* dropped);

}  // namespace pairsem
