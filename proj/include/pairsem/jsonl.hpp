#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairsem/errors.hpp"
#include "pairsem/types.hpp"

namespace pairsem {

using json = nlohmann::json;

void to_json(json& j, const Document& d);
void from_json(const json& j, Document& d);
void to_json(json& j, const Query& q);
void from_json(const json& j, Query& q);
void to_json(json& j, const SemanticPair& p);
void from_json(const json& j, SemanticPair& p);
void to_json(json& j, const PairSet& p);
void from_json(const json& j, PairSet& p);
void to_json(json& j, const Vocabulary& v);
void from_json(const json& j, Vocabulary& v);
void to_json(json& j, const CandidateSets& c);
void from_json(const json& j, CandidateSets& c);
void to_json(json& j, const RelevanceVector& r);
void from_json(const json& j, RelevanceVector& r);
void to_json(json& j, const SoftLabels& s);
void from_json(const json& j, SoftLabels& s);
void to_json(json& j, const EmbeddingRecord& e);
void from_json(const json& j, EmbeddingRecord& e);

const char* to_string(PairStage s);
PairStage parse_pair_stage(const std::string& s);

/// Writes `content` to `path` through a sibling temp file and a rename, so
/// readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

void save_json(const std::filesystem::path& path, const json& j);
json load_json(const std::filesystem::path& path);

template <typename T>
void save_jsonl(const std::vector<T>& records, const std::filesystem::path& path)
{
    std::string out;
    for (const auto& r : records) {
        out += json(r).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

template <typename T>
std::vector<T> load_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open " + path.string());
    }
    std::vector<T> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            records.push_back(json::parse(line).get<T>());
        } catch (const json::exception& e) {
            throw format_error(path.string() + ": " + e.what(), lineno);
        } catch (const format_error& e) {
            throw format_error(path.string() + ": " + e.what(), lineno);
        }
    }
    return records;
}

/// Loads relevance vectors, sharing one key list among records with equal keys.
std::vector<RelevanceVector> load_relevance_jsonl(const std::filesystem::path& path);

}  // namespace pairsem
