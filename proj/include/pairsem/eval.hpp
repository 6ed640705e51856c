#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace pairsem {

/// query_id -> relevant doc_ids. Queries listed with no relevant document keep
/// an empty set so they can be counted as excluded.
using Qrels = std::map<std::string, std::set<std::string>>;

struct RunEntry {
    std::string doc_id;
    double score = 0.0;
};
/// query_id -> ranked entries, best first.
using Run = std::map<std::string, std::vector<RunEntry>>;

double ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                 std::size_t k);
double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                   std::size_t k);
/// |top-k ∩ gold| / k.
double precision_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& gold,
                      std::size_t k);

/// Reads "qid<TAB>doc<TAB>rel" or TREC "qid 0 doc rel" lines; rel > 0 is relevant.
Qrels load_qrels(const std::string& path);
Qrels parse_qrels(const std::string& text);
void save_qrels(const std::string& path, const Qrels& qrels);

/// Reads "qid doc rank score" or TREC "qid Q0 doc rank score tag" lines.
Run load_run(const std::string& path);
Run parse_run(const std::string& text);
std::string format_run(const Run& run, const std::string& tag = "");
void save_run(const std::string& path, const Run& run);

std::vector<std::string> ranked_ids(const std::vector<RunEntry>& entries);

struct MetricSpec {
    std::string name;  // "ndcg", "recall" or "precision"
    std::size_t k = 10;
    std::string label() const { return name + "@" + std::to_string(k); }
};

/// Parses "ndcg@10,recall@20".
std::vector<MetricSpec> parse_metrics(const std::string& list);

struct EvalReport {
    /// Macro mean per metric label.
    std::map<std::string, double> means;
    std::map<std::string, std::map<std::string, double>> per_query;
    std::size_t evaluated_queries = 0;
    /// Qrels queries without any relevant document.
    std::size_t excluded_queries = 0;
    /// Evaluated queries absent from the run (scored 0).
    std::size_t missing_queries = 0;
};

/// Averages over every qrels query that has a relevant document.
EvalReport evaluate(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics);

/// query_id,metric... rows for the per-query values.
std::string per_query_csv(const EvalReport& report);

}  // namespace pairsem
