#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairsem/types.hpp"

namespace pairsem {

struct LlmRequest {
    std::string system_prompt;
    std::string user_content;
    double temperature = 0.0;
    int max_tokens = 2048;

    /// Throws precondition_error on empty prompts, temperature outside
    /// [0, 2] or non-positive max_tokens.
    void validate() const;
    /// SHA-256 hex digest of the canonical (sorted-key) JSON encoding.
    std::string hash() const;
};

std::string sha256_hex(std::string_view data);

/// Rough token count (4 characters per token) used when a provider does not
/// report usage.
std::size_t estimate_tokens(std::string_view text);

struct CallRecord {
    std::string request_hash;
    double latency_ms = 0.0;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    bool estimated = true;
};

struct UsageTotals {
    std::size_t calls = 0;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    double latency_ms = 0.0;
};

/// Thread-safe accounting of provider calls.
class CallLog {
  public:
    void add(CallRecord r);
    std::vector<CallRecord> records() const;
    UsageTotals totals() const;

  private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
};

class LlmProvider {
  public:
    virtual ~LlmProvider() = default;
    /// Raw completion text. Implementations must be safe for concurrent calls.
    virtual std::string generate(const LlmRequest& req) = 0;
    CallLog& log() { return log_; }

  protected:
    CallLog log_;
};

/// Answers from fixtures/llm/<hash>.txt; unrecorded requests are errors.
class ReplayLlm final : public LlmProvider {
  public:
    explicit ReplayLlm(std::filesystem::path fixture_dir);
    std::string generate(const LlmRequest& req) override;

  private:
    std::filesystem::path dir_;
};

/// Forwards to another provider and stores every response as a replay fixture.
class RecordingLlm final : public LlmProvider {
  public:
    RecordingLlm(std::shared_ptr<LlmProvider> inner, std::filesystem::path fixture_dir);
    std::string generate(const LlmRequest& req) override;

  private:
    std::shared_ptr<LlmProvider> inner_;
    std::filesystem::path dir_;
};

/// Deterministic stand-in model. Pair prompts are answered by extracting the
/// "ENTITY: <e> | ASPECT: <a>." sentences planted in the user content.
/// Synonym prompts are answered from `lexicon` (surface -> representative);
/// surfaces absent from it come back as singleton sets.
class OracleExtractorLlm final : public LlmProvider {
  public:
    explicit OracleExtractorLlm(std::map<std::string, std::string> lexicon = {});
    std::string generate(const LlmRequest& req) override;

  private:
    std::map<std::string, std::string> lexicon_;
};

struct HttpProviderConfig {
    std::string api_base = "http://localhost:8000/v1";
    std::string api_key;
    std::string model = "gpt-4.1-mini";
    int max_attempts = 3;
    int initial_backoff_ms = 200;
    int timeout_s = 120;
    int parallelism = 4;
};

/// OpenAI-compatible chat-completions client.
class HttpLlm final : public LlmProvider {
  public:
    explicit HttpLlm(HttpProviderConfig cfg);
    std::string generate(const LlmRequest& req) override;

  private:
    HttpProviderConfig cfg_;
    std::counting_semaphore<1024> slots_;
};

class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    /// One vector of length dim() per input, in input order.
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dim() const = 0;
    CallLog& log() { return log_; }

  protected:
    CallLog log_;
};

/// Bag-of-tokens embedder: every token maps through a seeded hash to a fixed
/// pseudo-random unit vector; a text embeds as the L2-normalized sum.
class TokenHashEmbedder final : public EmbeddingProvider {
  public:
    explicit TokenHashEmbedder(std::size_t dim = 384, std::uint64_t seed = 0x5eedULL);

    struct Result {
        Vector vector;
        /// Text had no tokens; `vector` is the reserved fallback unit vector.
        bool fallback = false;
    };
    Result embed_one(std::string_view text) const;

    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::size_t dim() const override { return dim_; }
    std::size_t fallback_count() const { return fallbacks_.load(); }

    /// Unit vector for a single token.
    Vector token_vector(std::string_view token) const;

  private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::atomic<std::size_t> fallbacks_{0};
};

/// OpenAI-compatible embeddings client. Batches are issued concurrently up to
/// the parallelism limit and reassembled in input order.
class HttpEmbedder final : public EmbeddingProvider {
  public:
    HttpEmbedder(HttpProviderConfig cfg, std::size_t dim, std::size_t batch_size = 64);
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::size_t dim() const override { return dim_; }

  private:
    std::vector<Vector> embed_batch(const std::vector<std::string>& texts);

    HttpProviderConfig cfg_;
    std::size_t dim_;
    std::size_t batch_size_;
    std::counting_semaphore<1024> slots_;
};

}  // namespace pairsem
