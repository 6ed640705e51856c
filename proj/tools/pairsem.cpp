// Command-line driver for the offline pipeline stages and query-time scoring.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"
#include "pairsem/pipeline.hpp"
#include "pairsem/synth.hpp"

namespace {

using namespace pairsem;

void print(const StageReport& r)
{
    if (r.up_to_date) {
        std::cout << r.stage << ": up to date\n";
        return;
    }
    std::printf("%s: done in %.2fs (llm calls %zu, tokens %zu/%zu, cost $%.4f, warnings %zu)\n",
                r.stage.c_str(), r.seconds, r.llm.calls, r.llm.prompt_tokens,
                r.llm.completion_tokens, r.cost_usd, r.warnings);
    if (!r.details.empty()) {
        std::cout << r.details.dump(2) << '\n';
    }
}

std::vector<std::size_t> parse_values(const std::string& list)
{
    std::vector<std::size_t> out;
    std::istringstream in(list);
    for (std::string item; std::getline(in, item, ',');) {
        if (item.empty()) {
            continue;
        }
        try {
            out.push_back(std::stoul(item));
        } catch (const std::logic_error&) {
            throw precondition_error("bad sweep value '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pairsem: entity-aspect pair generation and pairwise semantic reranking"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, workdir = ".";
    RunOptions run_opts;
    app.add_option("-c,--config", config_path, "JSON config file");
    app.add_option("-C,--workdir", workdir, "Working directory holding the artifacts");
    app.add_flag("--force", run_opts.force, "Re-run stages that are up to date");
    app.add_flag("--strict", run_opts.strict, "Exit nonzero when a stage reports warnings");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark");
    std::string spec_path, synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--spec", spec_path, "Synth spec JSON (defaults when omitted)");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Override the spec seed");

    auto* embed = app.add_subcommand("embed", "Embed the documents");

    auto* gen_pairs = app.add_subcommand("gen-pairs", "Generate semantic pairs with the LLM");
    std::string gen_mode = "zero-shot";
    gen_pairs->add_option("--mode", gen_mode)->check(CLI::IsMember({"zero-shot", "candidate"}));

    app.add_subcommand("build-vocab", "Cluster and merge entities and aspects");

    auto* gen_cand = app.add_subcommand("gen-candidates", "Build per-document candidate lists");
    std::optional<std::size_t> M, knn;
    gen_cand->add_option("--M", M, "Candidates per list");
    gen_cand->add_option("--knn", knn, "Pseudo-relevant neighbours");

    app.add_subcommand("soft-labels", "Compute distinctiveness soft labels");

    auto* train = app.add_subcommand("train", "Train a predictor");
    std::string target = "entity";
    train->add_option("--target", target)->check(CLI::IsMember({"entity", "aspect"}));

    app.add_subcommand("eval-predictors", "Report predictor P@10 on the corpus");

    auto* query = app.add_subcommand("query", "Rerank the queries and write a run file");
    std::string query_mode, format = "tsv";
    QueryOptions qopts;
    query->add_option("--mode", query_mode)->check(CLI::IsMember({"fast", "llm"}));
    query->add_option("--k", qopts.k, "Run depth");
    query->add_option("--pool", qopts.pool, "Rerank pool size");
    query->add_option("--N_e", qopts.n_entities, "Query entities (fast mode)");
    query->add_option("--N_a", qopts.n_aspects, "Aspects per query entity (fast mode)");
    query->add_option("--format", format)->check(CLI::IsMember({"json", "tsv"}));
    query->add_option("--out", qopts.run_file, "Run file name inside the working directory");

    auto* eval = app.add_subcommand("eval", "Score a run file against qrels");
    std::string qrels_path, run_path = "run.tsv", metrics;
    eval->add_option("--qrels", qrels_path);
    eval->add_option("--run", run_path);
    eval->add_option("--metrics", metrics);

    auto* sweep = app.add_subcommand("sweep", "Sweep M, N_e or N_a");
    std::string sweep_param, sweep_values;
    sweep->add_option("--param", sweep_param)->required()->check(CLI::IsMember({"M", "N_e", "N_a"}));
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();

    app.add_subcommand("report", "Summarize timing, tokens and cost per stage");
    app.add_subcommand("run", "Run every stage in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        auto* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        if (name == "synth") {
            SynthSpec spec;
            if (!spec_path.empty()) {
                spec = load_json(spec_path).get<SynthSpec>();
            }
            if (synth_seed) {
                spec.seed = *synth_seed;
            }
            auto corpus = generate_corpus(spec);
            save_corpus(synth_out, spec, corpus);
            std::cout << "synth: " << corpus.docs.size() << " documents, " << corpus.queries.size()
                      << " queries, " << corpus.entities.size() << " entities, "
                      << corpus.aspects.size() << " aspects, mean aspects/entity "
                      << mean_aspects_per_entity(corpus.gold_pairs) << '\n';
            return 0;
        }

        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        if (M) {
            cfg.M = *M;
        }
        if (knn) {
            cfg.knn = *knn;
        }
        if (!metrics.empty()) {
            cfg.metrics = metrics;
        }
        Pipeline pipeline(workdir, cfg, run_opts);
        std::vector<StageReport> reports;

        if (name == "embed") {
            reports.push_back(pipeline.embed_documents());
        } else if (name == "gen-pairs") {
            reports.push_back(pipeline.gen_pairs(gen_mode == "candidate"
                                                     ? GenerationMode::candidate_augmented
                                                     : GenerationMode::zero_shot));
        } else if (name == "build-vocab") {
            reports.push_back(pipeline.build_vocab());
        } else if (name == "gen-candidates") {
            reports.push_back(pipeline.gen_candidates());
        } else if (name == "soft-labels") {
            reports.push_back(pipeline.soft_labels());
        } else if (name == "train") {
            reports.push_back(pipeline.train(target == "entity" ? TrainTarget::entity : TrainTarget::aspect));
        } else if (name == "eval-predictors") {
            reports.push_back(pipeline.eval_predictors());
        } else if (name == "query") {
            if (!query_mode.empty()) {
                qopts.mode = parse_inference_mode(query_mode);
            }
            qopts.json_output = format == "json";
            reports.push_back(pipeline.query(qopts));
        } else if (name == "eval") {
            reports.push_back(pipeline.evaluate(qrels_path.empty() ? cfg.qrels : qrels_path, run_path,
                                                metrics.empty() ? cfg.metrics : metrics));
        } else if (name == "sweep") {
            auto rep = pipeline.sweep(sweep_param, parse_values(sweep_values));
            std::cout << rep.table();
            return 0;
        } else if (name == "report") {
            auto summary = pipeline.report();
            save_json(pipeline.workdir() / "reports" / "summary.json", summary);
            std::printf("%-22s %9s %7s %10s %10s %9s\n", "stage", "seconds", "calls", "prompt",
                        "completion", "cost$");
            for (const auto& s : summary.at("stages")) {
                std::printf("%-22s %9.2f %7zu %10zu %10zu %9.4f\n",
                            s.at("stage").get<std::string>().c_str(), s.at("seconds").get<double>(),
                            s.at("llm_calls").get<std::size_t>(),
                            s.at("prompt_tokens").get<std::size_t>(),
                            s.at("completion_tokens").get<std::size_t>(),
                            s.at("cost_usd").get<double>());
            }
            const auto& t = summary.at("total");
            std::printf("%-22s %9.2f %7zu %10zu %10zu %9.4f\n", "total", t.at("seconds").get<double>(),
                        t.at("llm").at("calls").get<std::size_t>(),
                        t.at("llm").at("prompt_tokens").get<std::size_t>(),
                        t.at("llm").at("completion_tokens").get<std::size_t>(),
                        t.at("cost_usd").get<double>());
            return 0;
        } else if (name == "run") {
            reports = pipeline.run_all();
        }

        std::size_t warnings = 0;
        for (const auto& r : reports) {
            print(r);
            warnings += r.warnings;
        }
        if (run_opts.strict && warnings > 0) {
            std::cerr << "error: " << warnings << " warning(s) with --strict\n";
            return 1;
        }
        return 0;
    } catch (const dependency_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
