#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/errors.hpp>
#include <pairsem/jsonl.hpp>
#include <pairsem/pairgen.hpp>
#include <pairsem/providers.hpp>
#include <pairsem/vector_ops.hpp>

#include <set>

using namespace pairsem;
using pairsem::testing::TempDir;

namespace {

LlmRequest request(const std::string& user)
{
    LlmRequest r;
    r.system_prompt = "system";
    r.user_content = user;
    return r;
}

/// Returns a fixed text and counts calls.
class CannedLlm final : public LlmProvider {
  public:
    explicit CannedLlm(std::string text) : text_(std::move(text)) {}
    std::string generate(const LlmRequest&) override
    {
        ++calls;
        return text_;
    }
    int calls = 0;

  private:
    std::string text_;
};

}  // namespace

TEST_SUITE("providers")
{
    TEST_CASE("request validation")
    {
        auto r = request("u");
        CHECK_NOTHROW(r.validate());
        r.temperature = 2.5;
        CHECK_THROWS_AS(r.validate(), precondition_error);
        r = request("");
        CHECK_THROWS_AS(r.validate(), precondition_error);
        r = request("u");
        r.max_tokens = 0;
        CHECK_THROWS_AS(r.validate(), precondition_error);
    }

    TEST_CASE("request hash covers every field")
    {
        auto a = request("u");
        auto b = a;
        CHECK(a.hash() == b.hash());
        CHECK(a.hash().size() == 64);
        b.temperature = 0.5;
        CHECK(a.hash() != b.hash());
        b = a;
        b.max_tokens = 7;
        CHECK(a.hash() != b.hash());
        b = a;
        b.user_content = "v";
        CHECK(a.hash() != b.hash());
    }

    TEST_CASE("sha256 known answer")
    {
        CHECK(sha256_hex("abc") ==
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        CHECK(sha256_hex("") ==
              "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    TEST_CASE("replay serves recorded fixtures and rejects unrecorded requests")
    {
        TempDir dir("replay");
        auto inner = std::make_shared<CannedLlm>("recorded answer\nwith two lines");
        RecordingLlm recorder(inner, dir.path());
        auto req = request("hello");
        CHECK(recorder.generate(req) == "recorded answer\nwith two lines");
        CHECK(std::filesystem::exists(dir.path() / (req.hash() + ".txt")));

        ReplayLlm replay(dir.path());
        CHECK(replay.generate(req) == "recorded answer\nwith two lines");
        CHECK(replay.generate(req) == replay.generate(req));
        try {
            replay.generate(request("other"));
            FAIL("expected unrecorded request");
        } catch (const provider_error& e) {
            CHECK(std::string(e.what()).find("unrecorded request") != std::string::npos);
        }
        CHECK(replay.log().totals().calls == 3);
    }

    TEST_CASE("oracle extractor answers pair prompts with the planted pairs")
    {
        OracleExtractorLlm llm;
        Document d{"d", "Some words. ENTITY: zeta bora | ASPECT: kilo mana. More text here. "
                        "ENTITY: pami tu | ASPECT: sora.",
                   {}};
        auto prompt = render_pair_prompt(d, std::nullopt);
        auto parsed = parse_pair_xml(llm.generate(prompt.request));
        REQUIRE(parsed.pairs.size() == 2);
        CHECK(parsed.pairs[0] == SemanticPair{"zeta bora", "kilo mana"});
        CHECK(parsed.pairs[1] == SemanticPair{"pami tu", "sora"});
        CHECK(parsed.malformed == 0);
    }

    TEST_CASE("oracle extractor groups synonyms from its lexicon")
    {
        OracleExtractorLlm llm({{"b a", "a b"}, {"a b", "a b"}});
        auto req = PromptTemplate::cluster_merge().render({{"cluster_items", "a b\nb a\nc d"}});
        auto text = llm.generate(req);
        CHECK(text.find("<set><entities>a b, b a</entities><rep>a b</rep></set>") !=
              std::string::npos);
        CHECK(text.find("<set><entities>c d</entities><rep>c d</rep></set>") != std::string::npos);
    }

    TEST_CASE("token-hash embedder basics")
    {
        TokenHashEmbedder emb(256, 11);
        auto single = emb.embed_one("Atomic").vector;
        auto tv = emb.token_vector("atomic");
        for (std::size_t i = 0; i < single.size(); ++i) {
            CHECK(std::abs(single[i] - tv[i]) < 1e-15);
        }
        CHECK(l2_norm(single) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(emb.embed_one("a b c").vector == emb.embed_one("c, a b").vector);
        CHECK(emb.embed({"x y", "x y"})[0] == emb.embed({"x y"})[0]);

        auto empty = emb.embed_one("  ..  ");
        CHECK(empty.fallback);
        CHECK(l2_norm(empty.vector) == doctest::Approx(1.0));
        CHECK_FALSE(emb.embed_one("word").fallback);
        emb.embed({"", "w"});
        CHECK(emb.fallback_count() == 1);
        CHECK_THROWS_AS(emb.embed({}), precondition_error);
    }

    TEST_CASE("token-hash embedder ranks shared tokens higher")
    {
        TokenHashEmbedder emb(384);
        auto a = emb.embed_one("atomic weight").vector;
        auto b = emb.embed_one("atomic weight measurement").vector;
        auto c = emb.embed_one("convolutional network").vector;
        CHECK(cosine(a, b) > cosine(a, c));
        CHECK(cosine(a, b) == doctest::Approx(2.0 / std::sqrt(2.0 * 3.0)).epsilon(0.1));
    }

    TEST_CASE("token-hash embedder: disjoint texts are near orthogonal")
    {
        for (std::size_t dim : {256u, 384u}) {
            TokenHashEmbedder emb(dim, 3);
            const double bound = 3.0 / std::sqrt(static_cast<double>(dim));
            std::size_t violations = 0;
            for (int i = 0; i < 100; ++i) {
                auto u = emb.embed_one("left" + std::to_string(i) + " alpha" + std::to_string(i)).vector;
                auto v = emb.embed_one("right" + std::to_string(i) + " beta" + std::to_string(i)).vector;
                violations += std::abs(cosine(u, v)) >= bound;
            }
            CHECK(violations == 0);
        }
    }

    TEST_CASE("token-hash embedder: batch permutation permutes the output")
    {
        TokenHashEmbedder emb(64);
        std::vector<std::string> texts{"one two", "three", "four five six", "seven"};
        auto out = emb.embed(texts);
        std::vector<std::size_t> perm{2, 0, 3, 1};
        std::vector<std::string> shuffled;
        for (auto i : perm) {
            shuffled.push_back(texts[i]);
        }
        auto out2 = emb.embed(shuffled);
        for (std::size_t k = 0; k < perm.size(); ++k) {
            CHECK(out2[k] == out[perm[k]]);
        }
    }

    TEST_CASE("call log totals")
    {
        CallLog log;
        log.add({"h1", 1.5, 10, 3, true});
        log.add({"h2", 0.5, 5, 2, false});
        auto t = log.totals();
        CHECK(t.calls == 2);
        CHECK(t.prompt_tokens == 15);
        CHECK(t.completion_tokens == 5);
        CHECK(t.latency_ms == doctest::Approx(2.0));
        CHECK(estimate_tokens("abcdefgh") == 2);
    }
}
