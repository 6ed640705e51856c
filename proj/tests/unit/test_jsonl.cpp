#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/errors.hpp>
#include <pairsem/jsonl.hpp>

#include <fstream>

using namespace pairsem;
using pairsem::testing::TempDir;

namespace {

template <typename T>
void check_round_trip(const std::vector<T>& records, const TempDir& dir, const std::string& name)
{
    auto path = dir.path() / name;
    save_jsonl(records, path);
    auto back = load_jsonl<T>(path);
    CHECK(back == records);
    save_jsonl(back, dir.path() / (name + ".2"));
    CHECK(read_file(path) == read_file(dir.path() / (name + ".2")));
}

}  // namespace

TEST_SUITE("jsonl")
{
    TEST_CASE("records round-trip byte-identically")
    {
        TempDir dir("jsonl");
        check_round_trip(std::vector<Document>{{"d1", "first \"quoted\" text\nline", {}},
                                               {"d2", "ünïcode", {}}},
                         dir, "docs.jsonl");
        check_round_trip(std::vector<Query>{{"q1", "what", {}}}, dir, "queries.jsonl");

        PairSet a("d1", PairStage::initial);
        a.add({"water", "boiling point"});
        a.add({"ice", "density"});
        PairSet b("q1", PairStage::final, OwnerKind::query);
        b.add({"x", "y"});
        check_round_trip(std::vector<PairSet>{a, b, PairSet("d2", PairStage::final)}, dir,
                         "pairs.jsonl");

        check_round_trip(std::vector<CandidateSets>{{"d1", {"a", "b"}, {"x"}}, {"d2", {}, {}}}, dir,
                         "cands.jsonl");
        check_round_trip(std::vector<SoftLabels>{{"d1", {{"a", 0.25}, {"b", 1.0}}}}, dir,
                         "labels.jsonl");
        check_round_trip(std::vector<EmbeddingRecord>{{"e", {0.1, -0.2, 1.0 / 3.0}}}, dir,
                         "emb.jsonl");
    }

    TEST_CASE("doubles survive the text encoding exactly")
    {
        TempDir dir("jsonl_double");
        Rng rng(5);
        std::vector<EmbeddingRecord> recs;
        for (int i = 0; i < 50; ++i) {
            Vector v;
            for (int k = 0; k < 8; ++k) {
                v.push_back(testing::noise(rng) * std::pow(10.0, static_cast<double>(k) - 4.0));
            }
            recs.push_back({"r" + std::to_string(i), v});
        }
        save_jsonl(recs, dir.path() / "e.jsonl");
        CHECK(load_jsonl<EmbeddingRecord>(dir.path() / "e.jsonl") == recs);
    }

    TEST_CASE("relevance vectors share their key list")
    {
        TempDir dir("jsonl_rel");
        auto keys = std::make_shared<std::vector<std::string>>(std::vector<std::string>{"a", "b"});
        std::vector<RelevanceVector> recs{{"d1", keys, {0.25, 0.5}}, {"d2", keys, {0.75, 0.125}}};
        save_jsonl(recs, dir.path() / "r.jsonl");
        auto back = load_relevance_jsonl(dir.path() / "r.jsonl");
        REQUIRE(back.size() == 2);
        CHECK(back == recs);
        CHECK(back[0].keys.get() == back[1].keys.get());
    }

    TEST_CASE("vocabulary round-trip")
    {
        TempDir dir("jsonl_vocab");
        Vocabulary v({"water", "ice"}, {"density"}, {{"h2o", "water"}}, {});
        save_json(dir.path() / "v.json", json(v));
        CHECK(load_json(dir.path() / "v.json").get<Vocabulary>() == v);
    }

    TEST_CASE("malformed lines report their line number")
    {
        TempDir dir("jsonl_bad");
        {
            std::ofstream out(dir.path() / "bad.jsonl");
            out << R"({"doc_id":"d1","text":"ok"})" << "\n\n" << R"({"doc_id":"d2"})" << "\n";
        }
        try {
            load_jsonl<Document>(dir.path() / "bad.jsonl");
            FAIL("expected a format error");
        } catch (const format_error& e) {
            CHECK(e.line == 3);
        }
        CHECK_THROWS_AS(load_jsonl<Document>(dir.path() / "missing.jsonl"), io_error);
    }

    TEST_CASE("pair sets reject duplicates and empty sides")
    {
        CHECK_THROWS_AS(
            json::parse(R"({"doc_id":"d","stage":"initial","pairs":[{"entity":"a","aspect":"b"},{"entity":"a","aspect":"b"}]})")
                .get<PairSet>(),
            format_error);
        CHECK_THROWS_AS(json::parse(R"({"entity":"","aspect":"b"})").get<SemanticPair>(),
                        format_error);
    }

    TEST_CASE("atomic write replaces content and leaves no temp file")
    {
        TempDir dir("jsonl_atomic");
        write_file_atomic(dir.path() / "f.txt", "one");
        write_file_atomic(dir.path() / "f.txt", "two");
        CHECK(read_file(dir.path() / "f.txt") == "two");
        std::size_t n = 0;
        for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) {
            ++n;
        }
        CHECK(n == 1);
    }
}
