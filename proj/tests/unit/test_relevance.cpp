#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/candidates.hpp>
#include <pairsem/relevance.hpp>
#include <pairsem/text.hpp>

#include <cmath>
#include <set>

using namespace pairsem;
using testing::rel_error;

namespace {

/// Straight-line Okapi BM25 over raw token lists.
struct NaiveBm25 {
    std::vector<std::vector<std::string>> docs;

    double score(std::size_t d, const std::vector<std::string>& query) const
    {
        double n = double(docs.size());
        double avg = 0;
        for (const auto& x : docs) {
            avg += double(x.size());
        }
        avg /= n;
        double s = 0;
        for (const auto& t : query) {
            double df = 0;
            for (const auto& x : docs) {
                df += std::find(x.begin(), x.end(), t) != x.end() ? 1 : 0;
            }
            double tf = double(std::count(docs[d].begin(), docs[d].end(), t));
            if (tf == 0) {
                continue;
            }
            double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
            s += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * double(docs[d].size()) / avg));
        }
        return s;
    }
};

double naive_dst(double own, const std::vector<double>& nb)
{
    double den = 1;
    for (double s : nb) {
        den += std::exp(s);
    }
    return std::exp(own) / den;
}

struct Toy {
    std::vector<Document> docs;
    std::vector<std::string> entities;
    NeighborIndex index;
    NaiveBm25 naive;
};

Toy random_toy(Rng& rng)
{
    static const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps",
                                                "zeta", "eta", "theta", "iota", "kappa"};
    Toy t;
    std::size_t n_docs = uniform_int(rng, 1, 10);
    for (std::size_t i = 0; i < n_docs; ++i) {
        std::vector<std::string> toks;
        std::size_t len = uniform_int(rng, 1, 12);
        for (std::size_t k = 0; k < len; ++k) {
            toks.push_back(words[uniform_below(rng, words.size())]);
        }
        t.naive.docs.push_back(toks);
        t.docs.push_back({"d" + std::to_string(i), join(toks, " "), {}});
    }
    std::set<std::string> ents;
    std::size_t n_ents = uniform_int(rng, 1, 8);
    while (ents.size() < n_ents) {
        std::string e = words[uniform_below(rng, words.size())];
        if (uniform_below(rng, 2)) {
            e += " " + words[uniform_below(rng, words.size())];
        }
        ents.insert(e);
    }
    t.entities.assign(ents.begin(), ents.end());
    for (std::size_t i = 0; i < n_docs; ++i) {
        auto& nb = t.index.neighbors[t.docs[i].doc_id];
        for (std::size_t j = 0; j < n_docs; ++j) {
            if (j != i && uniform_below(rng, 2)) {
                nb.push_back(t.docs[j].doc_id);
            }
        }
    }
    return t;
}

}  // namespace

TEST_SUITE("relevance")
{
    TEST_CASE("BM25 hand-computed single document")
    {
        Bm25Index idx({Document{"d", "water", {}}});
        double idf = std::log(1.0 + 0.5 / 1.5);
        CHECK(idx.idf("water") == doctest::Approx(0.2876820724517809).epsilon(1e-12));
        CHECK(idx.score("d", "water") == doctest::Approx(idf * 2.2 / (1.0 + 1.2)).epsilon(1e-12));
        CHECK(idx.score("d", "ice") == 0.0);
        CHECK(idx.score("missing", "water") == 0.0);
    }

    TEST_CASE("BM25 term frequency is monotone")
    {
        Bm25Index idx({Document{"a", "x y", {}}, Document{"b", "x x y y", {}}, Document{"c", "z", {}}});
        Bm25Index idx2({Document{"a", "x y", {}}, Document{"b", "x x x x y y", {}}, Document{"c", "z", {}}});
        CHECK(idx2.score("b", "x") >= idx.score("b", "x"));
    }

    TEST_CASE("safe distinctiveness equals the naive ratio")
    {
        CHECK(distinctiveness_from_scores(0.0, std::vector<double>(10, 0.0)) ==
              doctest::Approx(1.0 / 11.0).epsilon(1e-15));
        CHECK(rel_error(distinctiveness_from_scores(5.0, std::vector<double>(10, 0.0)),
                        std::exp(5.0) / 11.0) < 1e-12);
        Rng rng(21);
        for (int trial = 0; trial < 1000; ++trial) {
            double own = uniform_unit(rng) * 30.0;
            std::vector<double> nb(uniform_int(rng, 0, 10));
            for (auto& s : nb) {
                s = uniform_unit(rng) * 30.0;
            }
            CHECK(rel_error(distinctiveness_from_scores(own, nb), naive_dst(own, nb)) < 1e-9);
        }
        // Large scores stay finite.
        double big = distinctiveness_from_scores(900.0, std::vector<double>{899.0, 10.0});
        CHECK(std::isfinite(big));
        CHECK(rel_error(big, std::exp(1.0)) < 1e-12);
    }

    TEST_CASE("entities common among neighbours are less distinctive")
    {
        std::vector<Document> docs{{"d", "rare common", {}}, {"n1", "common other", {}},
                                   {"n2", "common more", {}}, {"n3", "filler", {}}};
        Bm25Index bm25(docs);
        NeighborIndex index;
        index.neighbors["d"] = {"n1", "n2"};
        DistinctivenessScorer s(bm25, index, {"common", "rare"});
        CHECK(s.dst("d", "rare") > s.dst("d", "common"));
        CHECK(s.dst("d", "absent") == doctest::Approx(1.0 / 3.0));
    }

    TEST_CASE("DST, max DST and soft labels match brute force")
    {
        Rng rng(2024);
        for (int trial = 0; trial < 1000; ++trial) {
            auto toy = random_toy(rng);
            Bm25Index bm25(toy.docs);
            DistinctivenessScorer scorer(bm25, toy.index, toy.entities);
            for (std::size_t d = 0; d < toy.docs.size(); ++d) {
                const auto& id = toy.docs[d].doc_id;
                std::vector<double> dst;
                for (const auto& e : toy.entities) {
                    auto tokens = tokenize(e);
                    double own = toy.naive.score(d, tokens);
                    std::vector<double> nb;
                    for (const auto& n : toy.index.of(id)) {
                        nb.push_back(toy.naive.score(std::stoul(n.substr(1)), tokens));
                    }
                    dst.push_back(naive_dst(own, nb));
                    CHECK(rel_error(scorer.dst(id, e), dst.back()) < 1e-9);
                    CHECK(dst.back() > 0.0);
                }
                double mx = *std::max_element(dst.begin(), dst.end());
                CHECK(rel_error(scorer.max_dst(id), mx) < 1e-9);

                std::vector<std::string> positives;
                for (std::size_t e = 0; e < toy.entities.size(); ++e) {
                    if (uniform_below(rng, 2)) {
                        positives.push_back(toy.entities[e]);
                    }
                }
                auto labels = scorer.soft_labels(id, positives);
                CHECK(labels.labels.size() == positives.size());
                for (std::size_t e = 0; e < toy.entities.size(); ++e) {
                    auto it = labels.labels.find(toy.entities[e]);
                    if (it == labels.labels.end()) {
                        continue;
                    }
                    CHECK(rel_error(it->second, dst[e] / mx) < 1e-9);
                    CHECK(it->second > 0.0);
                    CHECK(it->second <= 1.0 + 1e-12);
                }
            }
        }
    }

    TEST_CASE("soft labels: self-normalization and argmax")
    {
        std::vector<Document> docs{{"d", "solo text", {}}, {"n", "other words", {}}};
        Bm25Index bm25(docs);
        NeighborIndex index;
        index.neighbors["d"] = {"n"};
        DistinctivenessScorer one(bm25, index, {"solo"});
        CHECK(one.soft_labels("d", {"solo"}).labels.at("solo") == doctest::Approx(1.0));

        DistinctivenessScorer many(bm25, index, {"solo", "text", "other"});
        auto labels = many.soft_labels("d", {"solo", "other"});
        double best = std::max({many.dst("d", "solo"), many.dst("d", "text"), many.dst("d", "other")});
        CHECK(labels.labels.at("solo") == doctest::Approx(many.dst("d", "solo") / best));
        CHECK(labels.labels.at("other") == doctest::Approx(many.dst("d", "other") / best));

        auto pos_only = many.soft_labels("d", {"other"}, LabelNormalization::positives);
        CHECK(pos_only.labels.at("other") == doctest::Approx(1.0));
        CHECK(many.soft_labels("d", {}).labels.empty());
    }

    TEST_CASE("soft labels over a corpus cover each document's entities")
    {
        std::vector<Document> docs{{"d1", "ENTITY: ab cd | ASPECT: ef gh.", Vector{1, 0}},
                                   {"d2", "ENTITY: ij kl | ASPECT: ef gh.", Vector{0.9, 0.1}}};
        Vocabulary vocab({"ab cd", "ij kl"}, {"ef gh"}, {}, {});
        PairSetMap pairs;
        PairSet p1("d1", PairStage::final);
        p1.add({"ab cd", "ef gh"});
        pairs.emplace("d1", p1);
        auto index = build_neighbor_index(docs, 10);
        auto out = build_soft_labels(docs, pairs, vocab, index);
        REQUIRE(out.size() == 2);
        CHECK(out[0].labels.size() == 1);
        CHECK(out[1].labels.empty());
    }
}
