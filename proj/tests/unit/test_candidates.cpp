#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/candidates.hpp>
#include <pairsem/errors.hpp>
#include <pairsem/vector_ops.hpp>

using namespace pairsem;

namespace {

PairSet pairs(const std::string& id, std::vector<SemanticPair> ps)
{
    PairSet s(id, PairStage::initial);
    for (auto& p : ps) {
        s.add(p);
    }
    return s;
}

}  // namespace

TEST_SUITE("candidates")
{
    TEST_CASE("neighbour index matches a brute-force sort")
    {
        Rng rng(9);
        for (int trial = 0; trial < 30; ++trial) {
            std::size_t n = uniform_int(rng, 1, 20);
            std::size_t k = uniform_int(rng, 1, 12);
            std::vector<Document> docs;
            for (std::size_t i = 0; i < n; ++i) {
                Vector v(4);
                // 0/1 coordinates give exact, reproducible cosine ties.
                for (auto& x : v) {
                    x = static_cast<double>(uniform_below(rng, 2));
                }
                if (l2_norm(v) == 0.0) {
                    v[uniform_below(rng, 4)] = 1.0;
                }
                docs.push_back({"d" + std::to_string(100 + i), "t", v});
            }
            auto index = build_neighbor_index(docs, k);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<std::pair<double, std::string>> all;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j != i) {
                        all.emplace_back(-cosine(*docs[i].embedding, *docs[j].embedding), docs[j].doc_id);
                    }
                }
                std::sort(all.begin(), all.end());
                std::vector<std::string> want;
                for (std::size_t t = 0; t < std::min(k, all.size()); ++t) {
                    want.push_back(all[t].second);
                }
                CHECK(index.of(docs[i].doc_id) == want);
            }
        }
    }

    TEST_CASE("neighbour index needs embeddings")
    {
        CHECK_THROWS_AS(build_neighbor_index({Document{"d", "t", {}}}), precondition_error);
    }

    TEST_CASE("lexical matching respects token boundaries")
    {
        LexicalMatcher m({"neural network", "net", "Water"});
        auto found = m.matches("A Neural-Network; neural networks. network net, nets water WATER");
        CHECK(found["neural network"] == 1);
        CHECK(found["net"] == 1);
        CHECK(found["Water"] == 2);
        CHECK(found.size() == 3);
    }

    TEST_CASE("source-count and occurrence frequencies")
    {
        Vocabulary vocab({"alpha", "beta", "gamma"}, {"size"}, {{"alfa", "alpha"}}, {});
        PairSetMap initial;
        initial.emplace("d1", pairs("d1", {{"alpha", "size"}, {"beta", "size"}}));
        initial.emplace("d2", pairs("d2", {{"gamma", "size"}, {"alfa", "size"}}));
        initial.emplace("d3", pairs("d3", {{"gamma", "size"}}));
        NeighborIndex index;
        index.neighbors["d1"] = {"d2", "d3"};
        Document d1{"d1", "alpha alfa gamma text", {}};
        LexicalMatcher matcher({"alpha", "alfa", "beta", "gamma"});

        auto by_source = candidate_frequencies(Side::entity, d1, initial, vocab, index, matcher);
        CHECK(by_source["alpha"] == 3);  // initial, lexical, neighbours
        CHECK(by_source["beta"] == 1);   // initial only
        CHECK(by_source["gamma"] == 2);  // lexical, neighbours

        CandidateOptions occ;
        occ.frequency = FrequencyMode::occurrences;
        auto by_occ = candidate_frequencies(Side::entity, d1, initial, vocab, index, matcher, occ);
        CHECK(by_occ["alpha"] == 1 + 2 + 1);
        CHECK(by_occ["gamma"] == 1 + 2);

        CandidateOptions no_lex;
        no_lex.use_lexical = false;
        no_lex.use_pseudo_relevant = false;
        auto only_initial = candidate_frequencies(Side::entity, d1, initial, vocab, index, matcher, no_lex);
        CHECK(only_initial == std::map<std::string, std::size_t>{{"alpha", 1}, {"beta", 1}});

        auto aspects = candidate_frequencies(Side::aspect, d1, initial, vocab, index,
                                             LexicalMatcher({"size"}));
        CHECK(aspects["size"] == 2);
    }

    TEST_CASE("top candidates break ties by name")
    {
        std::map<std::string, std::size_t> f{{"b", 2}, {"a", 2}, {"c", 3}, {"d", 1}};
        CHECK(top_candidates(f, 3) == std::vector<std::string>{"c", "a", "b"});
        CHECK(top_candidates(f, 10).size() == 4);
        CHECK(top_candidates(f, 0).empty());
    }

    TEST_CASE("candidate lists are capped at M and drawn from the vocabulary")
    {
        std::vector<std::string> ents;
        std::string text;
        for (int i = 0; i < 80; ++i) {
            ents.push_back("ent" + std::to_string(i));
            text += "ent" + std::to_string(i) + " ";
        }
        Vocabulary vocab(ents, {"asp"}, {}, {});
        std::vector<Document> docs{{"d1", text + "asp", Vector{1.0, 0.0}}, {"d2", "asp", Vector{0.0, 1.0}}};
        auto index = build_neighbor_index(docs, 1);
        CandidateOptions opts;
        opts.max_candidates = 50;
        auto build = build_candidates(docs, {}, vocab, index, opts);
        REQUIRE(build.sets.size() == 2);
        CHECK(build.sets[0].candidate_entities.size() == 50);
        CHECK(build.sets[1].candidate_entities.empty());
        CHECK(build.sets[1].candidate_aspects == std::vector<std::string>{"asp"});
        CHECK(build.empty_entity_lists == 1);
    }
}
