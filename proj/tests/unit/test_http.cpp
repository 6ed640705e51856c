#include <doctest.h>

#include <pairsem/errors.hpp>
#include <pairsem/jsonl.hpp>
#include <pairsem/pairgen.hpp>
#include <pairsem/providers.hpp>

#include <httplib.h>

#include <atomic>
#include <thread>

using namespace pairsem;

namespace {

std::string fixture(const std::string& name)
{
    return read_file(std::filesystem::path(PAIRSEM_TEST_FIXTURES) / "http" / name);
}

/// Local OpenAI-compatible stub serving canned bodies from the fixtures.
class StubServer {
  public:
    StubServer()
    {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer()
    {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    HttpProviderConfig config() const
    {
        HttpProviderConfig cfg;
        cfg.api_base = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        cfg.api_key = "test-key";
        cfg.initial_backoff_ms = 1;
        cfg.timeout_s = 5;
        return cfg;
    }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

LlmRequest request()
{
    LlmRequest r;
    r.system_prompt = "sys";
    r.user_content = "doc";
    return r;
}

}  // namespace

TEST_SUITE("http")
{
    TEST_CASE("chat completion content is extracted and usage recorded")
    {
        std::string seen_auth;
        json seen_body;
        std::string body = fixture("chat_completion.json");
        StubServer stub;
        stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                       httplib::Response& res) {
            seen_auth = req.get_header_value("Authorization");
            seen_body = json::parse(req.body);
            res.set_content(body, "application/json");
        });
        HttpLlm llm(stub.config());
        auto text = llm.generate(request());
        auto parsed = parse_pair_xml(text);
        REQUIRE(parsed.pairs.size() == 2);
        CHECK(parsed.pairs[0] == SemanticPair{"water", "boiling point"});
        CHECK(seen_auth == "Bearer test-key");
        CHECK(seen_body["messages"][0]["role"] == "system");
        CHECK(seen_body["messages"][1]["content"] == "doc");
        CHECK(seen_body["temperature"] == 0.0);
        auto t = llm.log().totals();
        CHECK(t.calls == 1);
        CHECK(t.prompt_tokens == 42);
        CHECK(t.completion_tokens == 17);
    }

    TEST_CASE("transient failures are retried")
    {
        std::atomic<int> calls{0};
        std::string body = fixture("chat_completion.json");
        StubServer stub;
        stub.server().Post("/v1/chat/completions",
                           [&](const httplib::Request&, httplib::Response& res) {
                               if (calls.fetch_add(1) == 0) {
                                   res.status = 503;
                                   res.set_content("busy", "text/plain");
                                   return;
                               }
                               res.set_content(body, "application/json");
                           });
        HttpLlm llm(stub.config());
        CHECK_NOTHROW(llm.generate(request()));
        CHECK(calls.load() == 2);
    }

    TEST_CASE("persistent server errors give up after the configured attempts")
    {
        std::atomic<int> calls{0};
        StubServer stub;
        stub.server().Post("/v1/chat/completions",
                           [&](const httplib::Request&, httplib::Response& res) {
                               ++calls;
                               res.status = 500;
                               res.set_content("boom", "text/plain");
                           });
        auto cfg = stub.config();
        cfg.max_attempts = 3;
        HttpLlm llm(cfg);
        try {
            llm.generate(request());
            FAIL("expected provider_error");
        } catch (const provider_error& e) {
            CHECK(std::string(e.what()).find("boom") != std::string::npos);
        }
        CHECK(calls.load() == 3);
    }

    TEST_CASE("client errors surface the body without retry")
    {
        std::atomic<int> calls{0};
        StubServer stub;
        stub.server().Post("/v1/chat/completions",
                           [&](const httplib::Request&, httplib::Response& res) {
                               ++calls;
                               res.status = 400;
                               res.set_content(R"({"error":"bad model"})", "application/json");
                           });
        HttpLlm llm(stub.config());
        try {
            llm.generate(request());
            FAIL("expected provider_error");
        } catch (const provider_error& e) {
            CHECK(std::string(e.what()).find("bad model") != std::string::npos);
        }
        CHECK(calls.load() == 1);
    }

    TEST_CASE("responses without content are provider errors")
    {
        std::string body = fixture("chat_completion_no_content.json");
        StubServer stub;
        stub.server().Post("/v1/chat/completions",
                           [&](const httplib::Request&, httplib::Response& res) {
                               res.set_content(body, "application/json");
                           });
        HttpLlm llm(stub.config());
        CHECK_THROWS_AS(llm.generate(request()), provider_error);
    }

    TEST_CASE("unreachable server is a transport failure")
    {
        HttpProviderConfig cfg;
        cfg.api_base = "http://127.0.0.1:1/v1";
        cfg.max_attempts = 2;
        cfg.initial_backoff_ms = 1;
        cfg.timeout_s = 1;
        HttpLlm llm(cfg);
        CHECK_THROWS_AS(llm.generate(request()), provider_error);
    }

    TEST_CASE("embeddings are reordered by index")
    {
        std::string body = fixture("embeddings_dim4.json");
        json seen;
        StubServer stub;
        stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
            seen = json::parse(req.body);
            res.set_content(body, "application/json");
        });
        HttpEmbedder emb(stub.config(), 4, 8);
        auto out = emb.embed({"first", "second"});
        REQUIRE(out.size() == 2);
        CHECK(out[0] == Vector{1.0, 0.0, 0.0, 0.0});
        CHECK(out[1] == Vector{0.0, 1.0, 0.0, 0.0});
        CHECK(seen["input"] == json::array({"first", "second"}));
        CHECK(emb.log().totals().prompt_tokens == 6);
    }

    TEST_CASE("embedding dimension mismatch is a hard error")
    {
        std::string body = fixture("embeddings_dim3.json");
        StubServer stub;
        stub.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
            res.set_content(body, "application/json");
        });
        HttpEmbedder emb(stub.config(), 4, 8);
        CHECK_THROWS_AS(emb.embed({"a", "b"}), provider_error);
    }

    TEST_CASE("batches are issued concurrently and reassembled in order")
    {
        StubServer stub;
        stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
            auto in = json::parse(req.body)["input"];
            json data = json::array();
            for (std::size_t i = in.size(); i-- > 0;) {
                double v = std::stod(in[i].get<std::string>());
                data.push_back({{"index", i}, {"embedding", {v, -v}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        auto cfg = stub.config();
        cfg.parallelism = 3;
        HttpEmbedder emb(cfg, 2, 2);
        std::vector<std::string> texts;
        for (int i = 0; i < 9; ++i) {
            texts.push_back(std::to_string(i));
        }
        auto out = emb.embed(texts);
        REQUIRE(out.size() == 9);
        for (int i = 0; i < 9; ++i) {
            CHECK(out[static_cast<std::size_t>(i)] == Vector{double(i), -double(i)});
        }
        CHECK(emb.log().totals().calls == 5);
    }
}
