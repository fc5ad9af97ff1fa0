#include <catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "spl/adapter.hpp"
#include "spl/http_adapter.hpp"

using namespace spl;

TEST_CASE("mock adapter echoes its configured response with measured latency") {
    MockAdapter::Options options;
    options.content = "OK";
    options.delay_ms = 100;
    MockAdapter mock(options);

    GenerationRequest request;
    request.prompt = "hello";
    request.model = "m";
    auto result = mock.generate(request);
    CHECK(result.content == "OK");
    CHECK(result.finish_reason == FinishReason::Complete);
    CHECK_THAT(result.latency_ms, Catch::Matchers::WithinAbs(100.0, 50.0));
    CHECK(result.output_tokens == 1);
    CHECK(mock.call_count() == 1);
}

TEST_CASE("scripted fault sequence: two timeouts then success") {
    MockAdapter mock;
    mock.script_failure(AdapterErrorKind::Timeout);
    mock.script_failure(AdapterErrorKind::Timeout);
    mock.script_response("third time lucky");

    GenerationRequest request;
    request.model = "m";
    CHECK_THROWS_AS(mock.generate(request), AdapterError);
    CHECK_THROWS_AS(mock.generate(request), AdapterError);
    CHECK(mock.generate(request).content == "third time lucky");
}

TEST_CASE("mock respects max_tokens with a LENGTH finish") {
    MockAdapter::Options options;
    options.content = std::string(400, 'x');  // 100 tokens
    MockAdapter mock(options);
    GenerationRequest request;
    request.model = "m";
    request.max_tokens = 10;
    auto result = mock.generate(request);
    CHECK(result.finish_reason == FinishReason::Length);
    CHECK(result.output_tokens <= 10);
}

TEST_CASE("token counting: heuristic and pluggable rule") {
    MockAdapter heuristic;
    CHECK(heuristic.count_tokens("", "m") == 0);
    CHECK(heuristic.count_tokens("0123456789", "m") == 3);

    MockAdapter::Options options;
    options.counter = [](std::string_view text) -> long long {
        long long words = text.empty() ? 0 : 1;
        for (char c : text) words += c == ' ';
        return words;
    };
    MockAdapter words(options);
    CHECK(words.count_tokens("a b c", "m") == 3);
}

TEST_CASE("model catalogs") {
    MockAdapter::Options options;
    options.models = {"alpha", "beta", "gamma"};
    MockAdapter mock(options);
    CHECK(mock.list_models() == std::vector<std::string>{"alpha", "beta", "gamma"});
    CHECK(mock.serves_model("beta"));
    CHECK_FALSE(mock.serves_model("delta"));

    MockAdapter open_ended;
    CHECK(open_ended.list_models().empty());
    CHECK(open_ended.serves_model("anything"));
}

TEST_CASE("adapter errors carry exactly one taxonomy kind") {
    try {
        MockAdapter mock;
        mock.script_failure(AdapterErrorKind::ResourceExhausted);
        GenerationRequest request;
        request.model = "m";
        mock.generate(request);
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.kind == AdapterErrorKind::ResourceExhausted);
        CHECK(adapter_error_retryable(e.kind));
    }
    CHECK_FALSE(adapter_error_retryable(AdapterErrorKind::Auth));
    CHECK_FALSE(adapter_error_retryable(AdapterErrorKind::Protocol));
}

// --- HTTP adapter against a local stub server -------------------------

namespace {

struct StubServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    StubServer() {
        server.Post("/v1/chat/completions",
                    [](const httplib::Request& req, httplib::Response& res) {
                        auto body = nlohmann::json::parse(req.body);
                        std::string user;
                        for (const auto& m : body["messages"]) {
                            if (m["role"] == "user") user = m["content"];
                        }
                        nlohmann::json reply = {
                            {"model", body["model"]},
                            {"choices",
                             {{{"message", {{"role", "assistant"}, {"content", "echo: " + user}}},
                               {"finish_reason", "stop"}}}},
                            {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}},
                        };
                        res.set_content(reply.dump(), "application/json");
                    });
        server.Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
            nlohmann::json reply = {
                {"data", {{{"id", "stub-small"}}, {{"id", "stub-large"}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        server.Post("/unauthorized/v1/chat/completions",
                    [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubServer() {
        server.stop();
        thread.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("http adapter speaks the chat-completions wire shape") {
    StubServer stub;
    HttpAdapter::Options options;
    options.base_url = stub.url();
    HttpAdapter adapter(options);

    GenerationRequest request;
    request.prompt = "ping";
    request.system = "be brief";
    request.model = "stub-small";
    request.max_tokens = 64;
    auto result = adapter.generate(request);
    CHECK(result.content == "echo: ping");
    CHECK(result.model == "stub-small");
    CHECK(result.input_tokens == 11);
    CHECK(result.output_tokens == 7);
    CHECK(result.finish_reason == FinishReason::Complete);

    CHECK(adapter.list_models() == std::vector<std::string>{"stub-small", "stub-large"});
}

TEST_CASE("http adapter maps status codes onto the error taxonomy") {
    StubServer stub;

    HttpAdapter::Options unauthorized;
    unauthorized.base_url = stub.url();
    unauthorized.completions_path = "/unauthorized/v1/chat/completions";
    HttpAdapter auth_adapter(unauthorized);
    GenerationRequest request;
    request.model = "m";
    try {
        auth_adapter.generate(request);
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.kind == AdapterErrorKind::Auth);
    }

    // nothing listens on this port: unreachable server
    HttpAdapter::Options unreachable;
    unreachable.base_url = "http://127.0.0.1:1";
    unreachable.timeout_s = 1.0;
    HttpAdapter gone(unreachable);
    try {
        gone.generate(request);
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(adapter_error_retryable(e.kind));
    }
}

TEST_CASE("mock adapter is safe under concurrent calls") {
    MockAdapter::Options options;
    options.content = "c";
    options.delay_ms = 5;
    MockAdapter mock(options);
    std::atomic<int> successes{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            GenerationRequest request;
            request.model = "m";
            if (mock.generate(request).content == "c") ++successes;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(successes == 8);
    CHECK(mock.call_count() == 8);
}
