#include "pairsem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"

namespace pairsem {

namespace {

void require_k(std::size_t k)
{
    if (k == 0) {
        throw precondition_error("k must be at least 1");
    }
}

std::vector<std::string> split_ws(const std::string& line)
{
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) {
        out.push_back(tok);
    }
    return out;
}

double parse_number(const std::string& s, std::size_t line)
{
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) {
            throw format_error("bad number '" + s + "'", line);
        }
        return v;
    } catch (const std::logic_error&) {
        throw format_error("bad number '" + s + "'", line);
    }
}

}  // namespace

double ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                 std::size_t k)
{
    require_k(k);
    if (relevant.empty()) {
        return 0.0;
    }
    double dcg = 0.0;
    std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (relevant.count(ranking[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    std::size_t ideal = std::min(k, relevant.size());
    for (std::size_t i = 0; i < ideal; ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                   std::size_t k)
{
    require_k(k);
    if (relevant.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
        hits += relevant.count(ranking[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double precision_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& gold,
                      std::size_t k)
{
    require_k(k);
    std::size_t hits = 0;
    std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
        hits += gold.count(ranking[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

Qrels parse_qrels(const std::string& text)
{
    Qrels q;
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        auto f = split_ws(line);
        if (f.empty() || f[0].starts_with('#')) {
            continue;
        }
        std::string qid, doc, rel;
        if (f.size() == 3) {
            qid = f[0], doc = f[1], rel = f[2];
        } else if (f.size() == 4) {
            qid = f[0], doc = f[2], rel = f[3];
        } else {
            throw format_error("qrels line needs 3 or 4 fields", lineno);
        }
        auto& set = q[qid];
        if (parse_number(rel, lineno) > 0) {
            set.insert(doc);
        }
    }
    return q;
}

Qrels load_qrels(const std::string& path) { return parse_qrels(read_file(path)); }

void save_qrels(const std::string& path, const Qrels& qrels)
{
    std::string out;
    for (const auto& [qid, docs] : qrels) {
        for (const auto& d : docs) {
            out += qid + "\t" + d + "\t1\n";
        }
    }
    write_file_atomic(path, out);
}

Run parse_run(const std::string& text)
{
    struct Row {
        std::string doc;
        double rank, score;
    };
    std::map<std::string, std::vector<Row>> rows;
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        auto f = split_ws(line);
        if (f.empty() || f[0].starts_with('#')) {
            continue;
        }
        if (f.size() == 4) {
            rows[f[0]].push_back({f[1], parse_number(f[2], lineno), parse_number(f[3], lineno)});
        } else if (f.size() == 6) {
            rows[f[0]].push_back({f[2], parse_number(f[3], lineno), parse_number(f[4], lineno)});
        } else {
            throw format_error("run line needs 4 or 6 fields", lineno);
        }
    }
    Run run;
    for (auto& [qid, list] : rows) {
        std::stable_sort(list.begin(), list.end(),
                         [](const Row& a, const Row& b) { return a.rank < b.rank; });
        auto& out = run[qid];
        for (auto& r : list) {
            out.push_back({std::move(r.doc), r.score});
        }
    }
    return run;
}

Run load_run(const std::string& path) { return parse_run(read_file(path)); }

std::string format_run(const Run& run, const std::string& tag)
{
    std::ostringstream out;
    out.precision(17);
    for (const auto& [qid, entries] : run) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (tag.empty()) {
                out << qid << ' ' << entries[i].doc_id << ' ' << i + 1 << ' ' << entries[i].score
                    << '\n';
            } else {
                out << qid << " Q0 " << entries[i].doc_id << ' ' << i + 1 << ' '
                    << entries[i].score << ' ' << tag << '\n';
            }
        }
    }
    return out.str();
}

void save_run(const std::string& path, const Run& run) { write_file_atomic(path, format_run(run)); }

std::vector<std::string> ranked_ids(const std::vector<RunEntry>& entries)
{
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) {
        ids.push_back(e.doc_id);
    }
    return ids;
}

std::vector<MetricSpec> parse_metrics(const std::string& list)
{
    std::vector<MetricSpec> out;
    std::istringstream in(list);
    for (std::string item; std::getline(in, item, ',');) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        if (item.empty()) {
            continue;
        }
        std::transform(item.begin(), item.end(), item.begin(), ::tolower);
        auto at = item.find('@');
        if (at == std::string::npos) {
            throw precondition_error("metric '" + item + "' needs @k");
        }
        MetricSpec m{item.substr(0, at), 0};
        if (m.name == "n") {
            m.name = "ndcg";
        } else if (m.name == "r") {
            m.name = "recall";
        } else if (m.name == "p") {
            m.name = "precision";
        }
        if (m.name != "ndcg" && m.name != "recall" && m.name != "precision") {
            throw precondition_error("unknown metric '" + m.name + "'");
        }
        try {
            m.k = std::stoul(item.substr(at + 1));
        } catch (const std::logic_error&) {
            throw precondition_error("bad cutoff in metric '" + item + "'");
        }
        require_k(m.k);
        out.push_back(m);
    }
    if (out.empty()) {
        throw precondition_error("no metrics given");
    }
    return out;
}

EvalReport evaluate(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics)
{
    EvalReport report;
    std::map<std::string, double> sums;
    for (const auto& [qid, relevant] : qrels) {
        if (relevant.empty()) {
            ++report.excluded_queries;
            continue;
        }
        ++report.evaluated_queries;
        std::vector<std::string> ranking;
        if (auto it = run.find(qid); it != run.end()) {
            ranking = ranked_ids(it->second);
        } else {
            ++report.missing_queries;
        }
        for (const auto& m : metrics) {
            double v = 0.0;
            if (m.name == "ndcg") {
                v = ndcg_at_k(ranking, relevant, m.k);
            } else if (m.name == "recall") {
                v = recall_at_k(ranking, relevant, m.k);
            } else {
                v = precision_at_k(ranking, relevant, m.k);
            }
            report.per_query[qid][m.label()] = v;
            sums[m.label()] += v;
        }
    }
    for (const auto& m : metrics) {
        report.means[m.label()] =
            report.evaluated_queries ? sums[m.label()] / static_cast<double>(report.evaluated_queries)
                                     : 0.0;
    }
    return report;
}

std::string per_query_csv(const EvalReport& report)
{
    std::ostringstream out;
    out.precision(17);
    out << "query_id";
    for (const auto& [label, v] : report.means) {
        out << ',' << label;
    }
    out << '\n';
    for (const auto& [qid, values] : report.per_query) {
        out << qid;
        for (const auto& [label, mean] : report.means) {
            auto it = values.find(label);
            out << ',' << (it == values.end() ? 0.0 : it->second);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace pairsem
