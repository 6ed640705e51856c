#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/errors.hpp>
#include <pairsem/pairgen.hpp>
#include <pairsem/synth.hpp>

using namespace pairsem;

namespace {

class CountingLlm final : public LlmProvider {
  public:
    explicit CountingLlm(std::vector<std::string> answers) : answers_(std::move(answers)) {}
    std::string generate(const LlmRequest& req) override
    {
        std::lock_guard lock(mu_);
        last = req;
        auto i = std::min(calls++, answers_.size() - 1);
        return answers_[i];
    }
    std::size_t calls = 0;
    LlmRequest last;

  private:
    std::vector<std::string> answers_;
    std::mutex mu_;
};

class FailingLlm final : public LlmProvider {
  public:
    std::string generate(const LlmRequest&) override { throw provider_error("down"); }
};

}  // namespace

TEST_SUITE("pairgen")
{
    TEST_CASE("zero-shot prompt carries the instruction, format and document")
    {
        auto p = render_pair_prompt(Document{"d", "the text", {}}, std::nullopt);
        CHECK(p.request.system_prompt.find(prompts::pair_instruction) != std::string::npos);
        CHECK(p.request.system_prompt.find(prompts::pair_format) != std::string::npos);
        CHECK(p.request.user_content.find("the text") != std::string::npos);
        CHECK(p.request.temperature == 0.0);
    }

    TEST_CASE("candidate prompt lists candidates in stored order")
    {
        CandidateSets c{"d", {"zeta", "alpha"}, {"speed", "mass"}};
        auto p = render_pair_prompt(Document{"d", "txt", {}}, c);
        CHECK(p.request.system_prompt.find("[zeta, alpha]") != std::string::npos);
        CHECK(p.request.system_prompt.find("[speed, mass]") != std::string::npos);
        CHECK(p.truncated_entities == 0);
    }

    TEST_CASE("candidate lists are truncated to a prefix within the token budget")
    {
        CandidateSets c{"d", {}, {"a1", "a2"}};
        for (int i = 0; i < 100; ++i) {
            c.candidate_entities.push_back("entity number " + std::to_string(i));
        }
        PromptOptions opts;
        opts.max_tokens = 50;
        auto p = render_pair_prompt(Document{"d", "txt", {}}, c, opts);
        CHECK(p.truncated_entities > 0);
        CHECK(p.request.system_prompt.find("[entity number 0, entity number 1") != std::string::npos);
        CHECK(p.request.system_prompt.find("entity number 99") == std::string::npos);
    }

    TEST_CASE("template placeholders must appear exactly once")
    {
        PromptTemplate t{PromptKind::pair, "sys {document}", "user {document}"};
        CHECK_THROWS_AS(t.render({{"document", "x"}}), precondition_error);
        PromptTemplate missing{PromptKind::pair, "sys", "user"};
        CHECK_THROWS_AS(missing.render({{"document", "x"}}), precondition_error);
        CHECK_THROWS_AS(PromptTemplate::pair().render({}), precondition_error);
        auto req = PromptTemplate::pair().render({{"document", "has {document} inside"}});
        CHECK(req.user_content.find("has {document} inside") != std::string::npos);
    }

    TEST_CASE("tolerant XML extraction")
    {
        auto r = parse_pair_xml(
            "Sure! <pair><entity>GPT-4</entity><aspect>Context  Length</aspect></pair>"
            "<PAIR><Entity>a &amp; b</Entity><Aspect>x</Aspect></PAIR>"
            "<pair><entity>broken</entity></pair>"
            "<pair><entity>gpt-4</entity><aspect>context length</aspect></pair>"
            "<pair><entity>dangling");
        REQUIRE(r.pairs.size() == 2);
        CHECK(r.pairs[0] == SemanticPair{"gpt-4", "context length"});
        CHECK(r.pairs[1] == SemanticPair{"a & b", "x"});
        CHECK(r.malformed == 2);
        CHECK_FALSE(r.empty_extraction);
        CHECK(parse_pair_xml("nothing here").empty_extraction);
        CHECK(parse_pair_xml("").pairs.empty());
    }

    TEST_CASE("serialize then parse is the identity on normalized pairs")
    {
        Rng rng(17);
        const std::string alphabet = "abc <>&\"'xyz";
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<SemanticPair> pairs;
            std::size_t n = uniform_int(rng, 0, 5);
            for (std::size_t i = 0; i < n; ++i) {
                auto word = [&] {
                    std::string s;
                    std::size_t len = uniform_int(rng, 1, 8);
                    for (std::size_t k = 0; k < len; ++k) {
                        s.push_back(alphabet[uniform_below(rng, alphabet.size())]);
                    }
                    return s;
                };
                auto p = make_semantic_pair(word(), word());
                if (p && std::find(pairs.begin(), pairs.end(), *p) == pairs.end()) {
                    pairs.push_back(*p);
                }
            }
            auto back = parse_pair_xml(serialize_pair_xml(pairs));
            CHECK(back.pairs == pairs);
            CHECK(back.malformed == 0);
        }
        CHECK(xml_unescape(xml_escape("<a & 'b' \"c\">")) == "<a & 'b' \"c\">");
    }

    TEST_CASE("empty extraction is retried once")
    {
        CountingLlm llm({"no pairs", "<pair><entity>e</entity><aspect>a</aspect></pair>"});
        auto res = generate_pairs_for_corpus({Document{"d1", "text", {}}},
                                             GenerationMode::zero_shot, llm, nullptr, nullptr);
        CHECK(llm.calls == 2);
        CHECK(res.stats.retries == 1);
        CHECK(res.pairs.at("d1").size() == 1);
        CHECK(res.pairs.at("d1").stage() == PairStage::initial);
    }

    TEST_CASE("provider failure leaves an empty set and is reported")
    {
        FailingLlm llm;
        auto res = generate_pairs_for_corpus({Document{"d1", "text", {}}},
                                             GenerationMode::zero_shot, llm, nullptr, nullptr);
        CHECK(res.pairs.at("d1").empty());
        CHECK(res.stats.failed_doc_ids == std::vector<std::string>{"d1"});
        CHECK(res.stats.empty_documents == 1);
    }

    TEST_CASE("candidate-augmented output is canonicalized and unknown surfaces dropped")
    {
        Vocabulary vocab({"water"}, {"boiling point"}, {{"h2o", "water"}}, {{"bp", "boiling point"}});
        CountingLlm llm({"<pair><entity>H2O</entity><aspect>bp</aspect></pair>"
                         "<pair><entity>steam</entity><aspect>bp</aspect></pair>"});
        std::map<std::string, CandidateSets> cands{{"d1", {"d1", {"water"}, {"boiling point"}}}};
        auto res = generate_pairs_for_corpus({Document{"d1", "text", {}}},
                                             GenerationMode::candidate_augmented, llm, &cands,
                                             &vocab);
        const auto& ps = res.pairs.at("d1");
        CHECK(ps.stage() == PairStage::final);
        REQUIRE(ps.size() == 1);
        CHECK(ps.pairs()[0] == SemanticPair{"water", "boiling point"});
        CHECK(res.stats.unknown_dropped == 1);
        CHECK(llm.last.system_prompt.find("[water]") != std::string::npos);
    }

    TEST_CASE("candidate mode requires candidates for every document")
    {
        Vocabulary vocab({"w"}, {"a"}, {}, {});
        CountingLlm llm({""});
        std::map<std::string, CandidateSets> cands;
        CHECK_THROWS_AS(generate_pairs_for_corpus({Document{"d1", "t", {}}},
                                                  GenerationMode::candidate_augmented, llm, &cands,
                                                  &vocab),
                        precondition_error);
        CHECK_THROWS_AS(generate_pairs_for_corpus({Document{"d1", "t", {}}, Document{"d1", "u", {}}},
                                                  GenerationMode::zero_shot, llm, nullptr, nullptr),
                        precondition_error);
    }

    TEST_CASE("oracle extraction recovers exactly the planted pairs")
    {
        SynthSpec spec;
        spec.n_docs = 30;
        auto corpus = generate_corpus(spec);
        OracleExtractorLlm llm(corpus.lexicon);
        auto res = generate_pairs_for_corpus(corpus.docs, GenerationMode::zero_shot, llm, nullptr,
                                             nullptr);
        for (const auto& d : corpus.docs) {
            auto got = res.pairs.at(d.doc_id).pairs();
            auto want = corpus.gold_surface_pairs.at(d.doc_id).pairs();
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            CHECK(got == want);
        }
    }
}
