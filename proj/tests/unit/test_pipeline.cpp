#include <doctest.h>

#include "test_util.hpp"

#include <pairsem/errors.hpp>
#include <pairsem/jsonl.hpp>
#include <pairsem/pipeline.hpp>
#include <pairsem/synth.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pairsem;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

SynthSpec small_spec()
{
    SynthSpec s;
    s.n_docs = 30;
    s.n_entities = 20;
    s.n_aspects = 15;
    s.aspects_per_entity = 4.0;
    s.entities_per_doc = {3, 5};
    s.entity_synonym_groups = 4;
    s.aspect_synonym_groups = 3;
    return s;
}

PipelineConfig small_config()
{
    PipelineConfig cfg;
    cfg.provider.dim = 64;
    cfg.entity_train.epochs = 3;
    cfg.aspect_train.epochs = 3;
    cfg.k = 20;
    cfg.inference.rerank_pool_size = 30;
    return cfg;
}

std::vector<StageReport> run_in(const fs::path& dir)
{
    save_corpus(dir.string(), small_spec(), generate_corpus(small_spec()));
    Pipeline p(dir, small_config());
    return p.run_all();
}

}  // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("end to end on a small corpus, replayed byte-identically")
    {
        testing::TempDir a("pipe_a"), b("pipe_b");
        auto reports = run_in(a.path());
        run_in(b.path());
        CHECK(reports.size() >= 10);
        for (const auto& r : reports) {
            CAPTURE(r.stage);
            CHECK(!r.up_to_date);
        }
        std::size_t compared = 0;
        for (const auto& entry : fs::directory_iterator(a.path())) {
            if (!entry.is_regular_file() || entry.path().extension() == ".lock") {
                continue;
            }
            CAPTURE(entry.path().filename().string());
            CHECK(slurp(entry.path()) == slurp(b.path() / entry.path().filename()));
            ++compared;
        }
        CHECK(compared >= 15);
        CHECK(fs::exists(a.path() / artifacts::pairs_final));
        CHECK(fs::exists(a.path() / "run.tsv"));

        auto gold = load_jsonl<PairSet>(a.str() + "/gold_pairs.jsonl");
        auto got = load_jsonl<PairSet>(a.str() + "/" + artifacts::pairs_final);
        REQUIRE(got.size() == gold.size());
        for (std::size_t i = 0; i < gold.size(); ++i) {
            auto g = gold[i].pairs(), x = got[i].pairs();
            std::sort(g.begin(), g.end());
            std::sort(x.begin(), x.end());
            CHECK(g == x);
        }
    }

    TEST_CASE("completed stages are skipped until an input changes")
    {
        testing::TempDir dir("pipe_stale");
        run_in(dir.path());
        PipelineConfig cfg = small_config();
        {
            Pipeline p(dir.path(), cfg);
            for (const auto& r : p.run_all()) {
                CAPTURE(r.stage);
                // Evaluation stages write only reports and always rerun.
                CHECK(r.up_to_date == (r.stage != "eval-predictors" && r.stage != "eval"));
            }
            {
                std::ofstream out(dir.path() / "documents.jsonl", std::ios::app);
                out << R"({"doc_id":"extra","text":"ENTITY: zz yy | ASPECT: xx ww."})" << "\n";
            }
            CHECK(!p.embed_documents().up_to_date);
        }
        // Changing a training parameter invalidates that stage only.
        cfg.aspect_train.epochs = 4;
        Pipeline q(dir.path(), cfg);
        q.gen_pairs(GenerationMode::zero_shot);
        q.build_vocab();
        q.gen_candidates();
        q.gen_pairs(GenerationMode::candidate_augmented);
        q.soft_labels();
        q.train(TrainTarget::entity);
        CHECK(!q.train(TrainTarget::aspect).up_to_date);
        CHECK(q.train(TrainTarget::aspect).up_to_date);
    }

    TEST_CASE("missing upstream artifacts raise dependency errors")
    {
        testing::TempDir dir("pipe_dep");
        save_corpus(dir.str(), small_spec(), generate_corpus(small_spec()));
        Pipeline p(dir.path(), small_config());
        CHECK_THROWS_AS(p.train(TrainTarget::entity), dependency_error);
        CHECK_THROWS_AS(p.build_vocab(), dependency_error);
        CHECK_THROWS_AS(p.query(), dependency_error);
    }

    TEST_CASE("config JSON round-trip and unknown keys")
    {
        PipelineConfig cfg = small_config();
        cfg.inference.n_entities = 7;
        auto back = config_from_json(config_to_json(cfg));
        CHECK(config_to_json(back) == config_to_json(cfg));
        CHECK_THROWS_AS(config_from_json(nlohmann::json{{"bogus", 1}}), format_error);
        setenv("PAIRSEM_TEST_VALUE", "abc", 1);
        CHECK(interpolate_env("x-${PAIRSEM_TEST_VALUE}-y") == "x-abc-y");
        CHECK(interpolate_env("${PAIRSEM_UNSET_FOR_TEST}") == "");
    }
}
