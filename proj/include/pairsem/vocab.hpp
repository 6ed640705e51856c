#pragma once

#include <map>
#include <string>
#include <vector>

#include "pairsem/pairgen.hpp"
#include "pairsem/providers.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

struct InitialSets {
    std::vector<std::string> entities;  // sorted, unique, normalized
    std::vector<std::string> aspects;
};

/// Union of surfaces over all pair sets. Throws precondition_error when every
/// pair set is empty.
InitialSets collect_initial_sets(const PairSetMap& pairs);

struct Cluster {
    std::vector<std::string> members;
    Vector centroid;
};

/// Ward-linkage agglomerative clustering on L2-normalized embeddings with a
/// hard size cap: the merge tree is cut top-down, splitting every subtree
/// larger than `max_size`. The result partitions `items`. Items must be unique.
std::vector<Cluster> agglomerative_cluster(const std::vector<std::string>& items,
                                           const std::vector<Vector>& embeddings,
                                           std::size_t max_size);
std::vector<Cluster> agglomerative_cluster(const std::vector<std::string>& items,
                                           EmbeddingProvider& embedder, std::size_t max_size);

struct SynonymSet {
    std::vector<std::string> surfaces;
    std::string representative;

    bool operator==(const SynonymSet&) const = default;
};

struct ParsedSynonymSets {
    std::vector<SynonymSet> sets;
    std::size_t malformed = 0;
};

/// Extracts <set><entities>a, b</entities><rep>r</rep></set> elements. Never throws.
ParsedSynonymSets parse_synonym_xml(std::string_view text);

struct MergeOutcome {
    std::vector<SynonymSet> sets;
    bool llm_called = false;
    /// The model failed or produced nothing parseable; every member became a singleton.
    bool fail_open = false;
};

/// Asks the model for synonym sets inside one cluster. Members the model does
/// not place in any set become singletons. Singleton clusters skip the model.
MergeOutcome merge_cluster_synonyms(const Cluster& cluster, LlmProvider& llm,
                                    const PromptOptions& opts = {});

struct VocabularyOptions {
    std::size_t max_cluster_size = 20;
    std::size_t parallelism = 4;
    PromptOptions prompt;
};

struct SideReport {
    std::size_t initial = 0;
    std::size_t final = 0;
    std::size_t clusters = 0;
    std::map<std::size_t, std::size_t> cluster_size_histogram;
    std::size_t llm_calls = 0;
    std::size_t fail_open_clusters = 0;
    /// Groups of synonym sets that produced the same representative and were merged.
    std::size_t representative_collisions = 0;
};

struct VocabularyBuild {
    Vocabulary vocab;
    SideReport entities;
    SideReport aspects;
};

/// Resolved synonyms for one side: canonical set plus surface map.
struct MergedSide {
    std::vector<std::string> canonical;
    std::map<std::string, std::string> surface_map;
    std::size_t collisions = 0;
};

/// Folds synonym sets into a function from every surface (and every
/// representative) to one canonical string. Sets linked through a shared
/// representative or surface collapse into one entry whose canonical name is
/// the smallest representative among them.
MergedSide resolve_synonym_sets(const std::vector<std::string>& initial,
                                const std::vector<SynonymSet>& sets);

VocabularyBuild build_vocabulary(const InitialSets& initial, EmbeddingProvider& embedder,
                                 LlmProvider& llm, const VocabularyOptions& opts = {});

}  // namespace pairsem
