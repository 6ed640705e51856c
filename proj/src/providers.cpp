#include "pairsem/providers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "pairsem/errors.hpp"
#include "pairsem/jsonl.hpp"
#include "pairsem/parallel.hpp"
#include "pairsem/text.hpp"
#include "pairsem/vector_ops.hpp"

namespace pairsem {

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed_ms(clock_type::time_point start)
{
    return std::chrono::duration<double, std::milli>(clock_type::now() - start).count();
}

std::uint64_t fnv1a64(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform in (0, 1].
double unit_open(std::uint64_t& state)
{
    return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

constexpr std::string_view kFallbackToken = "\x01<empty>";

struct BaseUrl {
    std::string host;  // scheme://host[:port]
    std::string prefix;
};

BaseUrl split_base_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw precondition_error("api base '" + url + "' has no scheme");
    }
    auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    if (path_start == std::string::npos) {
        out.host = url;
    } else {
        out.host = url.substr(0, path_start);
        out.prefix = url.substr(path_start);
    }
    while (!out.prefix.empty() && out.prefix.back() == '/') {
        out.prefix.pop_back();
    }
    return out;
}

/// POSTs a JSON body with retry on transport failures, 429 and 5xx.
json post_json(const HttpProviderConfig& cfg, const std::string& endpoint, const json& body)
{
    auto base = split_base_url(cfg.api_base);
    httplib::Client client(base.host);
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);
    httplib::Headers headers;
    if (!cfg.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg.api_key);
    }
    const std::string path = base.prefix + endpoint;
    const std::string payload = body.dump();
    std::string last_error;
    int attempts = std::max(1, cfg.max_attempts);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg.initial_backoff_ms * (1 << (attempt - 1))));
        }
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        if (res->status != 200) {
            throw provider_error("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                                 res->body);
        }
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw provider_error("invalid JSON from " + path + ": " + e.what());
        }
    }
    throw provider_error("giving up on " + path + " after " + std::to_string(attempts) +
                         " attempts: " + last_error);
}

}  // namespace

void LlmRequest::validate() const
{
    if (system_prompt.empty() || user_content.empty()) {
        throw precondition_error("LLM request has an empty prompt");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw precondition_error("LLM temperature must lie in [0, 2]");
    }
    if (max_tokens <= 0) {
        throw precondition_error("LLM max_tokens must be positive");
    }
}

std::string LlmRequest::hash() const
{
    json j{{"system_prompt", system_prompt},
           {"user_content", user_content},
           {"temperature", temperature},
           {"max_tokens", max_tokens}};
    return sha256_hex(j.dump());
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

void CallLog::add(CallRecord r)
{
    std::lock_guard lock(mu_);
    records_.push_back(std::move(r));
}

std::vector<CallRecord> CallLog::records() const
{
    std::lock_guard lock(mu_);
    return records_;
}

UsageTotals CallLog::totals() const
{
    std::lock_guard lock(mu_);
    UsageTotals t;
    for (const auto& r : records_) {
        ++t.calls;
        t.prompt_tokens += r.prompt_tokens;
        t.completion_tokens += r.completion_tokens;
        t.latency_ms += r.latency_ms;
    }
    return t;
}

// --- replay / recording ----------------------------------------------------

ReplayLlm::ReplayLlm(std::filesystem::path fixture_dir) : dir_(std::move(fixture_dir)) {}

std::string ReplayLlm::generate(const LlmRequest& req)
{
    req.validate();
    auto start = clock_type::now();
    auto hash = req.hash();
    auto path = dir_ / (hash + ".txt");
    if (!std::filesystem::exists(path)) {
        throw provider_error("unrecorded request " + hash);
    }
    std::string text = read_file(path);
    log_.add({hash, elapsed_ms(start),
              estimate_tokens(req.system_prompt) + estimate_tokens(req.user_content),
              estimate_tokens(text), true});
    return text;
}

RecordingLlm::RecordingLlm(std::shared_ptr<LlmProvider> inner, std::filesystem::path fixture_dir)
    : inner_(std::move(inner)), dir_(std::move(fixture_dir))
{}

std::string RecordingLlm::generate(const LlmRequest& req)
{
    auto start = clock_type::now();
    std::string text = inner_->generate(req);
    auto hash = req.hash();
    write_file_atomic(dir_ / (hash + ".txt"), text);
    log_.add({hash, elapsed_ms(start),
              estimate_tokens(req.system_prompt) + estimate_tokens(req.user_content),
              estimate_tokens(text), true});
    return text;
}

// --- oracle extractor ------------------------------------------------------

OracleExtractorLlm::OracleExtractorLlm(std::map<std::string, std::string> lexicon)
{
    for (auto& [surface, rep] : lexicon) {
        lexicon_.emplace(normalize_surface(surface), normalize_surface(rep));
    }
}

std::string OracleExtractorLlm::generate(const LlmRequest& req)
{
    req.validate();
    auto start = clock_type::now();
    std::ostringstream out;
    if (req.system_prompt.find("find sets of synonyms") != std::string::npos) {
        // One item per line, optionally bulleted.
        std::vector<std::string> reps;
        std::map<std::string, std::vector<std::string>> groups;
        std::istringstream in(req.user_content);
        std::string line;
        while (std::getline(in, line)) {
            auto item = normalize_surface(line);
            if (item.rfind("- ", 0) == 0) {
                item = item.substr(2);
            }
            if (item.empty()) {
                continue;
            }
            auto it = lexicon_.find(item);
            std::string rep = it == lexicon_.end() ? item : it->second;
            auto& members = groups[rep];
            if (members.empty()) {
                reps.push_back(rep);
            }
            members.push_back(item);
        }
        for (const auto& rep : reps) {
            out << "<set><entities>" << join(groups[rep], ", ") << "</entities><rep>" << rep
                << "</rep></set>\n";
        }
    } else {
        static const std::regex planted(R"(ENTITY:\s*([^|]+?)\s*\|\s*ASPECT:\s*([^.]+?)\s*\.)");
        out << "Here are the pairs I found:\n";
        for (std::sregex_iterator it(req.user_content.begin(), req.user_content.end(), planted), end;
             it != end; ++it) {
            out << "<pair><entity>" << (*it)[1].str() << "</entity><aspect>" << (*it)[2].str()
                << "</aspect></pair>\n";
        }
    }
    std::string text = out.str();
    log_.add({req.hash(), elapsed_ms(start),
              estimate_tokens(req.system_prompt) + estimate_tokens(req.user_content),
              estimate_tokens(text), true});
    return text;
}

// --- HTTP chat completions -------------------------------------------------

HttpLlm::HttpLlm(HttpProviderConfig cfg)
    : cfg_(std::move(cfg)), slots_(std::clamp(cfg_.parallelism, 1, 1024))
{}

std::string HttpLlm::generate(const LlmRequest& req)
{
    req.validate();
    json body{{"model", cfg_.model},
              {"messages",
               json::array({json{{"role", "system"}, {"content", req.system_prompt}},
                            json{{"role", "user"}, {"content", req.user_content}}})},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
    slots_.acquire();
    auto start = clock_type::now();
    json res;
    try {
        res = post_json(cfg_, "/chat/completions", body);
    } catch (...) {
        slots_.release();
        throw;
    }
    slots_.release();
    std::string text;
    try {
        text = res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw provider_error("chat completion response has no message content: " + res.dump());
    }
    CallRecord rec{req.hash(), elapsed_ms(start), 0, 0, true};
    if (auto u = res.find("usage"); u != res.end() && u->is_object()) {
        rec.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
        rec.completion_tokens = u->value("completion_tokens", std::size_t{0});
        rec.estimated = false;
    } else {
        rec.prompt_tokens = estimate_tokens(req.system_prompt) + estimate_tokens(req.user_content);
        rec.completion_tokens = estimate_tokens(text);
    }
    log_.add(std::move(rec));
    return text;
}

// --- token-hash embedder ---------------------------------------------------

TokenHashEmbedder::TokenHashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed)
{
    if (dim_ == 0) {
        throw precondition_error("embedding dimension must be positive");
    }
}

Vector TokenHashEmbedder::token_vector(std::string_view token) const
{
    std::uint64_t state = fnv1a64(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    Vector v(dim_);
    for (std::size_t i = 0; i < dim_; i += 2) {
        // Box-Muller: two independent standard normals per draw.
        double r = std::sqrt(-2.0 * std::log(unit_open(state)));
        double theta = 2.0 * std::numbers::pi * unit_open(state);
        v[i] = r * std::cos(theta);
        if (i + 1 < dim_) {
            v[i + 1] = r * std::sin(theta);
        }
    }
    l2_normalize(v);
    return v;
}

TokenHashEmbedder::Result TokenHashEmbedder::embed_one(std::string_view text) const
{
    auto tokens = tokenize(text);
    if (tokens.empty()) {
        return {token_vector(kFallbackToken), true};
    }
    std::sort(tokens.begin(), tokens.end());
    Vector sum(dim_, 0.0);
    for (const auto& t : tokens) {
        auto tv = token_vector(t);
        for (std::size_t i = 0; i < dim_; ++i) {
            sum[i] += tv[i];
        }
    }
    l2_normalize(sum);
    return {std::move(sum), false};
}

std::vector<Vector> TokenHashEmbedder::embed(const std::vector<std::string>& texts)
{
    if (texts.empty()) {
        throw precondition_error("embed called with no texts");
    }
    auto start = clock_type::now();
    std::vector<Vector> out;
    out.reserve(texts.size());
    std::size_t tokens = 0;
    for (const auto& t : texts) {
        auto r = embed_one(t);
        if (r.fallback) {
            fallbacks_.fetch_add(1);
        }
        tokens += estimate_tokens(t);
        out.push_back(std::move(r.vector));
    }
    log_.add({"", elapsed_ms(start), tokens, 0, true});
    return out;
}

// --- HTTP embeddings -------------------------------------------------------

HttpEmbedder::HttpEmbedder(HttpProviderConfig cfg, std::size_t dim, std::size_t batch_size)
    : cfg_(std::move(cfg)),
      dim_(dim),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      slots_(std::clamp(cfg_.parallelism, 1, 1024))
{
    if (dim_ == 0) {
        throw precondition_error("embedding dimension must be positive");
    }
}

std::vector<Vector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts)
{
    json body{{"model", cfg_.model}, {"input", texts}};
    slots_.acquire();
    auto start = clock_type::now();
    json res;
    try {
        res = post_json(cfg_, "/embeddings", body);
    } catch (...) {
        slots_.release();
        throw;
    }
    slots_.release();
    std::vector<Vector> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    try {
        const auto& data = res.at("data");
        for (std::size_t k = 0; k < data.size(); ++k) {
            std::size_t idx = data[k].value("index", k);
            if (idx >= texts.size() || seen[idx]) {
                throw provider_error("embedding response has a bad index");
            }
            out[idx] = data[k].at("embedding").get<Vector>();
            seen[idx] = true;
            if (out[idx].size() != dim_) {
                throw provider_error("embedding dimension mismatch: got " +
                                     std::to_string(out[idx].size()) + ", expected " +
                                     std::to_string(dim_));
            }
        }
    } catch (const json::exception& e) {
        throw provider_error(std::string("malformed embeddings response: ") + e.what());
    }
    for (bool s : seen) {
        if (!s) {
            throw provider_error("embedding response is missing inputs");
        }
    }
    CallRecord rec{"", elapsed_ms(start), 0, 0, true};
    if (auto u = res.find("usage"); u != res.end() && u->is_object()) {
        rec.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
        rec.estimated = false;
    }
    log_.add(std::move(rec));
    return out;
}

std::vector<Vector> HttpEmbedder::embed(const std::vector<std::string>& texts)
{
    if (texts.empty()) {
        throw precondition_error("embed called with no texts");
    }
    std::size_t n_batches = (texts.size() + batch_size_ - 1) / batch_size_;
    std::vector<std::vector<Vector>> parts(n_batches);
    parallel_for(n_batches, static_cast<std::size_t>(std::max(1, cfg_.parallelism)),
                 [&](std::size_t b) {
                     auto first = texts.begin() + static_cast<std::ptrdiff_t>(b * batch_size_);
                     auto last = texts.begin() + static_cast<std::ptrdiff_t>(
                                                     std::min(texts.size(), (b + 1) * batch_size_));
                     parts[b] = embed_batch(std::vector<std::string>(first, last));
                 });
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (auto& p : parts) {
        for (auto& v : p) {
            out.push_back(std::move(v));
        }
    }
    return out;
}

}  // namespace pairsem
