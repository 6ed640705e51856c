#include "pairsem/vocab.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "pairsem/errors.hpp"
#include "pairsem/parallel.hpp"
#include "pairsem/text.hpp"
#include "pairsem/vector_ops.hpp"

namespace pairsem {

InitialSets collect_initial_sets(const PairSetMap& pairs)
{
    std::set<std::string> entities;
    std::set<std::string> aspects;
    for (const auto& [id, ps] : pairs) {
        for (const auto& p : ps.pairs()) {
            entities.insert(normalize_surface(p.entity));
            aspects.insert(normalize_surface(p.aspect));
        }
    }
    entities.erase("");
    aspects.erase("");
    if (entities.empty() || aspects.empty()) {
        throw precondition_error("no semantic pairs in the corpus; cannot build a vocabulary");
    }
    return {{entities.begin(), entities.end()}, {aspects.begin(), aspects.end()}};
}

// --- Ward clustering ---------------------------------------------------------

namespace {

struct Node {
    std::size_t size = 1;
    Vector centroid;
    std::string min_member;
    std::size_t left = 0;
    std::size_t right = 0;
    bool leaf = true;
};

double ward_distance(const Node& a, const Node& b)
{
    double sq = 0.0;
    for (std::size_t i = 0; i < a.centroid.size(); ++i) {
        double d = a.centroid[i] - b.centroid[i];
        sq += d * d;
    }
    double na = static_cast<double>(a.size);
    double nb = static_cast<double>(b.size);
    return na * nb / (na + nb) * sq;
}

}  // namespace

std::vector<Cluster> agglomerative_cluster(const std::vector<std::string>& items,
                                           const std::vector<Vector>& embeddings,
                                           std::size_t max_size)
{
    if (items.empty()) {
        throw precondition_error("clustering needs at least one item");
    }
    if (embeddings.size() != items.size()) {
        throw precondition_error("one embedding per clustered item is required");
    }
    if (max_size == 0) {
        throw precondition_error("max cluster size must be positive");
    }
    if (std::set<std::string>(items.begin(), items.end()).size() != items.size()) {
        throw precondition_error("clustered items must be unique");
    }

    const std::size_t n = items.size();
    std::vector<Node> nodes;
    nodes.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        Node leaf;
        leaf.centroid = embeddings[i];
        l2_normalize(leaf.centroid);
        leaf.min_member = items[i];
        nodes.push_back(std::move(leaf));
    }
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);

    // Nearest-neighbour chain. Ties prefer the previous chain element (needed
    // for termination), then the lexicographically smallest member.
    std::vector<std::size_t> chain;
    while (active.size() > 1) {
        if (chain.empty()) {
            chain.push_back(*std::min_element(active.begin(), active.end(),
                                              [&](std::size_t x, std::size_t y) {
                                                  return nodes[x].min_member < nodes[y].min_member;
                                              }));
        }
        std::size_t a = chain.back();
        std::size_t best = a;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c : active) {
            if (c == a) {
                continue;
            }
            double d = ward_distance(nodes[a], nodes[c]);
            if (d < best_d || (d == best_d && nodes[c].min_member < nodes[best].min_member)) {
                best_d = d;
                best = c;
            }
        }
        if (chain.size() >= 2) {
            std::size_t prev = chain[chain.size() - 2];
            if (ward_distance(nodes[a], nodes[prev]) <= best_d) {
                best = prev;
            }
        }
        if (chain.size() >= 2 && best == chain[chain.size() - 2]) {
            chain.pop_back();
            chain.pop_back();
            const Node& x = nodes[a];
            const Node& y = nodes[best];
            Node merged;
            merged.leaf = false;
            merged.size = x.size + y.size;
            bool x_first = x.min_member < y.min_member;
            merged.left = x_first ? a : best;
            merged.right = x_first ? best : a;
            merged.min_member = std::min(x.min_member, y.min_member);
            merged.centroid.resize(x.centroid.size());
            double wx = static_cast<double>(x.size) / static_cast<double>(merged.size);
            double wy = static_cast<double>(y.size) / static_cast<double>(merged.size);
            for (std::size_t i = 0; i < merged.centroid.size(); ++i) {
                merged.centroid[i] = wx * x.centroid[i] + wy * y.centroid[i];
            }
            std::erase(active, a);
            std::erase(active, best);
            active.push_back(nodes.size());
            nodes.push_back(std::move(merged));
        } else {
            chain.push_back(best);
        }
    }

    // Cut: emit every maximal subtree within the size cap.
    std::vector<Cluster> clusters;
    std::vector<std::size_t> stack{active.front()};
    while (!stack.empty()) {
        std::size_t id = stack.back();
        stack.pop_back();
        const Node& node = nodes[id];
        if (node.size > max_size) {
            stack.push_back(node.right);
            stack.push_back(node.left);
            continue;
        }
        Cluster c;
        c.centroid = node.centroid;
        std::vector<std::size_t> walk{id};
        while (!walk.empty()) {
            std::size_t w = walk.back();
            walk.pop_back();
            if (nodes[w].leaf) {
                c.members.push_back(items[w]);
            } else {
                walk.push_back(nodes[w].right);
                walk.push_back(nodes[w].left);
            }
        }
        std::sort(c.members.begin(), c.members.end());
        clusters.push_back(std::move(c));
    }
    return clusters;
}

std::vector<Cluster> agglomerative_cluster(const std::vector<std::string>& items,
                                           EmbeddingProvider& embedder, std::size_t max_size)
{
    if (items.empty()) {
        throw precondition_error("clustering needs at least one item");
    }
    return agglomerative_cluster(items, embedder.embed(items), max_size);
}

// --- synonym merging ----------------------------------------------------------

ParsedSynonymSets parse_synonym_xml(std::string_view text)
{
    ParsedSynonymSets out;
    std::string lower(text);
    for (auto& c : lower) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    auto find_inner = [&](std::size_t from, std::size_t to, std::string_view tag)
        -> std::optional<std::string> {
        std::string open = "<" + std::string(tag) + ">";
        std::string close = "</" + std::string(tag) + ">";
        auto a = lower.find(open, from);
        if (a == std::string::npos || a >= to) {
            return std::nullopt;
        }
        a += open.size();
        auto b = lower.find(close, a);
        if (b == std::string::npos || b > to) {
            return std::nullopt;
        }
        return xml_unescape(text.substr(a, b - a));
    };
    std::size_t pos = 0;
    while ((pos = lower.find("<set>", pos)) != std::string::npos) {
        std::size_t start = pos + 5;
        auto end = lower.find("</set>", start);
        auto next = lower.find("<set>", start);
        if (end == std::string::npos || (next != std::string::npos && next < end)) {
            ++out.malformed;
            pos = start;
            continue;
        }
        auto members = find_inner(start, end, "entities");
        auto rep = find_inner(start, end, "rep");
        SynonymSet s;
        if (members) {
            std::size_t a = 0;
            while (a <= members->size()) {
                auto b = members->find(',', a);
                if (b == std::string::npos) {
                    b = members->size();
                }
                auto item = normalize_surface(std::string_view(*members).substr(a, b - a));
                if (!item.empty() &&
                    std::find(s.surfaces.begin(), s.surfaces.end(), item) == s.surfaces.end()) {
                    s.surfaces.push_back(item);
                }
                a = b + 1;
            }
        }
        if (rep) {
            s.representative = normalize_surface(*rep);
        }
        if (s.surfaces.empty() || s.representative.empty()) {
            ++out.malformed;
        } else {
            out.sets.push_back(std::move(s));
        }
        pos = end + 6;
    }
    return out;
}

MergeOutcome merge_cluster_synonyms(const Cluster& cluster, LlmProvider& llm,
                                    const PromptOptions& opts)
{
    MergeOutcome out;
    auto singletons = [&](const std::vector<std::string>& members) {
        for (const auto& m : members) {
            out.sets.push_back({{m}, normalize_surface(m)});
        }
    };
    if (cluster.members.size() <= 1) {
        singletons(cluster.members);
        return out;
    }
    std::string items;
    for (const auto& m : cluster.members) {
        items += "- " + m + "\n";
    }
    auto req = PromptTemplate::cluster_merge().render({{"cluster_items", items}});
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;

    ParsedSynonymSets parsed;
    out.llm_called = true;
    try {
        parsed = parse_synonym_xml(llm.generate(req));
    } catch (const provider_error&) {
        out.fail_open = true;
        singletons(cluster.members);
        return out;
    }
    if (parsed.sets.empty()) {
        out.fail_open = true;
        singletons(cluster.members);
        return out;
    }
    std::set<std::string> assigned;
    std::set<std::string> members;
    for (const auto& m : cluster.members) {
        members.insert(normalize_surface(m));
    }
    for (const auto& s : parsed.sets) {
        SynonymSet kept;
        kept.representative = s.representative;
        for (const auto& surface : s.surfaces) {
            if (members.count(surface) && assigned.insert(surface).second) {
                kept.surfaces.push_back(surface);
            }
        }
        if (!kept.surfaces.empty()) {
            out.sets.push_back(std::move(kept));
        }
    }
    for (const auto& m : cluster.members) {
        if (!assigned.count(normalize_surface(m))) {
            out.sets.push_back({{normalize_surface(m)}, normalize_surface(m)});
        }
    }
    return out;
}

// --- vocabulary ------------------------------------------------------------------

namespace {

class UnionFind {
  public:
    std::size_t id(const std::string& s)
    {
        auto [it, inserted] = index_.emplace(s, parent_.size());
        if (inserted) {
            parent_.push_back(parent_.size());
            names_.push_back(s);
        }
        return it->second;
    }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent_[std::max(a, b)] = std::min(a, b);
        }
    }
    std::size_t size() const { return parent_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }

  private:
    std::map<std::string, std::size_t> index_;
    std::vector<std::size_t> parent_;
    std::vector<std::string> names_;
};

}  // namespace

MergedSide resolve_synonym_sets(const std::vector<std::string>& initial,
                                const std::vector<SynonymSet>& sets)
{
    UnionFind uf;
    for (const auto& s : initial) {
        uf.id(normalize_surface(s));
    }
    std::vector<std::size_t> set_rep_ids;
    for (const auto& s : sets) {
        std::size_t r = uf.id(s.representative);
        set_rep_ids.push_back(r);
        for (const auto& surface : s.surfaces) {
            uf.unite(r, uf.id(surface));
        }
    }
    // Canonical name per component: smallest representative, else the surface itself.
    std::map<std::size_t, std::string> canonical;
    std::map<std::size_t, std::size_t> sets_per_root;
    for (std::size_t r : set_rep_ids) {
        std::size_t root = uf.find(r);
        ++sets_per_root[root];
        auto [it, inserted] = canonical.emplace(root, uf.name(r));
        if (!inserted && uf.name(r) < it->second) {
            it->second = uf.name(r);
        }
    }
    MergedSide out;
    for (const auto& [root, count] : sets_per_root) {
        if (count > 1) {
            ++out.collisions;
        }
    }
    std::set<std::string> canon_set;
    for (std::size_t i = 0; i < uf.size(); ++i) {
        std::size_t root = uf.find(i);
        auto it = canonical.find(root);
        const std::string& target = it == canonical.end() ? uf.name(root) : it->second;
        out.surface_map[uf.name(i)] = target;
    }
    for (const auto& s : initial) {
        canon_set.insert(out.surface_map.at(normalize_surface(s)));
    }
    out.canonical.assign(canon_set.begin(), canon_set.end());
    return out;
}

namespace {

struct SideBuild {
    MergedSide merged;
    SideReport report;
};

SideBuild build_side(const std::vector<std::string>& initial, EmbeddingProvider& embedder,
                     LlmProvider& llm, const VocabularyOptions& opts)
{
    SideBuild out;
    out.report.initial = initial.size();
    auto clusters = agglomerative_cluster(initial, embedder, opts.max_cluster_size);
    out.report.clusters = clusters.size();
    for (const auto& c : clusters) {
        ++out.report.cluster_size_histogram[c.members.size()];
    }
    std::vector<MergeOutcome> outcomes(clusters.size());
    parallel_for(clusters.size(), opts.parallelism, [&](std::size_t i) {
        outcomes[i] = merge_cluster_synonyms(clusters[i], llm, opts.prompt);
    });
    std::vector<SynonymSet> sets;
    for (auto& o : outcomes) {
        out.report.llm_calls += o.llm_called ? 1 : 0;
        out.report.fail_open_clusters += o.fail_open ? 1 : 0;
        for (auto& s : o.sets) {
            sets.push_back(std::move(s));
        }
    }
    out.merged = resolve_synonym_sets(initial, sets);
    out.report.final = out.merged.canonical.size();
    out.report.representative_collisions = out.merged.collisions;
    return out;
}

}  // namespace

VocabularyBuild build_vocabulary(const InitialSets& initial, EmbeddingProvider& embedder,
                                 LlmProvider& llm, const VocabularyOptions& opts)
{
    if (initial.entities.empty() || initial.aspects.empty()) {
        throw precondition_error("initial entity and aspect sets must be non-empty");
    }
    auto ents = build_side(initial.entities, embedder, llm, opts);
    auto asps = build_side(initial.aspects, embedder, llm, opts);
    VocabularyBuild out{Vocabulary(ents.merged.canonical, asps.merged.canonical,
                                   ents.merged.surface_map, asps.merged.surface_map),
                        ents.report, asps.report};
    return out;
}

}  // namespace pairsem
