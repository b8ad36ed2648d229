#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "semtool/config.hpp"
#include "semtool/embedding.hpp"
#include "semtool/errors.hpp"
#include "support.hpp"

using namespace semtool;

namespace {

double norm(const EmbeddingVector& v) {
    double s = 0;
    for (float x : v.values) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

ReferenceEmbedder reference(size_t dim = 1024) {
    ProviderSpec spec;
    spec.dimension = dim;
    return ReferenceEmbedder(spec);
}

}  // namespace

TEST(Similarity, IdentityOrthogonalityAndWorkedValue) {
    std::mt19937_64 rng(1);
    const EmbeddingVector v{testsupport::random_unit(rng, 64), "p"};
    EXPECT_NEAR(similarity(v, v), 1.0, 1e-6);
    EXPECT_EQ(similarity({{1, 0}, "p"}, {{0, 1}, "p"}), 0.0);
    EXPECT_NEAR(similarity({{0.6f, 0.8f}, "p"}, {{0.8f, 0.6f}, "p"}), 0.96, 1e-7);
}

TEST(Similarity, SymmetricAndBounded) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
        const EmbeddingVector a{testsupport::random_unit(rng, 33), "p"};
        const EmbeddingVector b{testsupport::random_unit(rng, 33), "p"};
        EXPECT_EQ(similarity(a, b), similarity(b, a));
        EXPECT_LE(std::abs(similarity(a, b)), 1.0 + 1e-6);
    }
}

TEST(Similarity, DimensionMismatchThrows) {
    EXPECT_THROW(similarity({{1, 0}, "p"}, {{1, 0, 0}, "p"}), DimensionMismatch);
}

TEST(Normalize, UnitNormAndZeroVector) {
    std::vector<float> v{3, 4};
    ASSERT_TRUE(normalize(v));
    EXPECT_NEAR(v[0], 0.6, 1e-7);
    std::vector<float> z{0, 0, 0};
    EXPECT_FALSE(normalize(z));
}

TEST(ReferenceEmbedderTest, DeterministicAndNormalized) {
    const auto e = reference();
    const auto a = e.embed("abc");
    EXPECT_EQ(a, e.embed("abc"));
    EXPECT_EQ(a.dimension(), 1024u);
    EXPECT_EQ(a.provider_id, "reference-local");
    EXPECT_NEAR(norm(a), 1.0, 1e-6);
    // A separate instance with the same spec agrees bit for bit.
    EXPECT_EQ(a, reference().embed("abc"));
}

TEST(ReferenceEmbedderTest, NeighborhoodsArePlausible) {
    const auto e = reference();
    const auto rf = e.embed("read file");
    EXPECT_GT(similarity(rf, e.embed("read a file")), similarity(rf, e.embed("post slack message")));
    EXPECT_GT(similarity(e.embed("list tables"), e.embed("list the tables in a database")),
              similarity(e.embed("list tables"), e.embed("weather forecast")));
}

TEST(ReferenceEmbedderTest, CaseAndPunctuationInsensitive) {
    const auto e = reference();
    EXPECT_EQ(e.embed("Read FILE!"), e.embed("read file"));
}

TEST(ReferenceEmbedderTest, EveryOutputIsUnitNorm) {
    const auto e = reference(64);
    for (const char* t : {"x", "!!!", "the", "a b c d e f g", "\xe6\x97\xa5\xe6\x9c\xac", "tool: do_thing()"}) {
        const auto v = e.embed(t);
        EXPECT_NEAR(norm(v), 1.0, 1e-6) << t;
        for (float x : v.values) EXPECT_TRUE(std::isfinite(x));
    }
}

TEST(ReferenceEmbedderTest, RejectsBlankText) {
    const auto e = reference();
    EXPECT_THROW(e.embed(""), UsageError);
    EXPECT_THROW(e.embed(" \t\n"), UsageError);
    EXPECT_THROW(reference(0), UsageError);
}

TEST(ReferenceEmbedderTest, BatchMatchesSingle) {
    const auto e = reference(128);
    const std::vector<std::string> texts{"one", "two words", "three little words"};
    const auto batch = e.embed_batch(texts);
    ASSERT_EQ(batch.size(), 3u);
    for (size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(batch[i], e.embed(texts[i]));
}

// ---------------------------------------------------------------------------
// Remote provider against a local endpoint
// ---------------------------------------------------------------------------

namespace {

class FakeEmbeddings {
public:
    using Behavior = std::function<void(const nlohmann::json& request, httplib::Response&)>;

    explicit FakeEmbeddings(Behavior behavior) : behavior_(std::move(behavior)) {
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            const int now = ++in_flight;
            int seen = max_in_flight.load();
            while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
            }
            {
                std::lock_guard lock(mutex);
                auth_headers.push_back(req.get_header_value("Authorization"));
            }
            ++calls;
            behavior_(nlohmann::json::parse(req.body), res);
            --in_flight;
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEmbeddings() {
        server_.stop();
        thread_.join();
    }

    ProviderSpec spec(size_t dim) const {
        ProviderSpec s;
        s.kind = ProviderKind::RemoteHttp;
        s.provider_id = "fake-model";
        s.model_name = "fake-model";
        s.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings";
        s.dimension = dim;
        s.max_retries = 2;
        s.retry_backoff = std::chrono::milliseconds(1);
        s.timeout = std::chrono::milliseconds(3000);
        return s;
    }

    std::atomic<int> calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight{0};
    std::mutex mutex;
    std::vector<std::string> auth_headers;

private:
    Behavior behavior_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

// Vector whose first component encodes the input's length, so ordering is checkable.
nlohmann::json vector_for(const std::string& text, size_t dim) {
    std::vector<double> v(dim, 0.0);
    v[0] = static_cast<double>(text.size());
    v[1] = 1.0;
    return v;
}

FakeEmbeddings::Behavior openai_style(size_t dim, bool reversed = false) {
    return [dim, reversed](const nlohmann::json& req, httplib::Response& res) {
        nlohmann::json data = nlohmann::json::array();
        const auto& input = req["input"];
        for (size_t i = 0; i < input.size(); ++i) {
            const size_t j = reversed ? input.size() - 1 - i : i;
            data.push_back({{"index", j}, {"embedding", vector_for(input[j].get<std::string>(), dim)}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    };
}

}  // namespace

TEST(RemoteEmbedderTest, PostsModelAndInputAndNormalizes) {
    nlohmann::json seen;
    std::mutex m;
    FakeEmbeddings server([&](const nlohmann::json& req, httplib::Response& res) {
        {
            std::lock_guard lock(m);
            seen = req;
        }
        openai_style(4)(req, res);
    });
    RemoteEmbedder e(server.spec(4));
    const auto v = e.embed("abc");
    EXPECT_EQ(seen["model"], "fake-model");
    EXPECT_EQ(seen["input"], nlohmann::json::array({"abc"}));
    EXPECT_EQ(v.provider_id, "fake-model");
    EXPECT_NEAR(norm(v), 1.0, 1e-6);
    EXPECT_NEAR(v.values[0] / v.values[1], 3.0, 1e-6);
}

TEST(RemoteEmbedderTest, BatchesOf64KeepInputOrder) {
    FakeEmbeddings server(openai_style(4, /*reversed=*/true));
    auto spec = server.spec(4);
    spec.max_in_flight = 3;
    RemoteEmbedder e(spec);
    std::vector<std::string> texts;
    for (int i = 1; i <= 150; ++i) texts.push_back(std::string(static_cast<size_t>(i), 'x'));
    const auto out = e.embed_batch(texts);
    EXPECT_EQ(server.calls.load(), 3);  // 64 + 64 + 22
    ASSERT_EQ(out.size(), 150u);
    for (size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i].values[0] / out[i].values[1], i + 1.0, 1e-3);
}

TEST(RemoteEmbedderTest, InFlightRequestsAreBounded) {
    FakeEmbeddings server([](const nlohmann::json& req, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        openai_style(4)(req, res);
    });
    auto spec = server.spec(4);
    spec.batch_size = 1;
    spec.max_in_flight = 2;
    RemoteEmbedder e(spec);
    std::vector<std::thread> callers;
    for (int t = 0; t < 3; ++t) {
        callers.emplace_back([&e] { e.embed_batch({"a", "bb", "ccc", "dddd"}); });
    }
    for (auto& c : callers) c.join();
    EXPECT_EQ(server.calls.load(), 12);
    EXPECT_LE(server.max_in_flight.load(), 2);
}

TEST(RemoteEmbedderTest, AcceptsEmbeddingsArrayReply) {
    FakeEmbeddings server([](const nlohmann::json& req, httplib::Response& res) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : req["input"]) arr.push_back(vector_for(t.get<std::string>(), 3));
        res.set_content(nlohmann::json{{"embeddings", arr}}.dump(), "application/json");
    });
    RemoteEmbedder e(server.spec(3));
    EXPECT_EQ(e.embed_batch({"a", "bb"}).size(), 2u);
}

TEST(RemoteEmbedderTest, BearerTokenFromEnvironment) {
    FakeEmbeddings server(openai_style(4));
    auto spec = server.spec(4);
    spec.api_key_env = "SEMTOOL_TEST_EMBED_KEY";
    ::setenv("SEMTOOL_TEST_EMBED_KEY", "s3cret", 1);
    RemoteEmbedder(spec).embed("x");
    {
        std::lock_guard lock(server.mutex);
        ASSERT_EQ(server.auth_headers.size(), 1u);
        EXPECT_EQ(server.auth_headers[0], "Bearer s3cret");
    }
    ::unsetenv("SEMTOOL_TEST_EMBED_KEY");
    EXPECT_THROW(RemoteEmbedder(spec).embed("x"), UsageError);
}

TEST(RemoteEmbedderTest, RetriesServerErrorsThenSucceeds) {
    std::atomic<int> failures{2};
    FakeEmbeddings server([&](const nlohmann::json& req, httplib::Response& res) {
        if (failures-- > 0) {
            res.status = failures == 1 ? 503 : 429;
            return;
        }
        openai_style(4)(req, res);
    });
    RemoteEmbedder e(server.spec(4));
    EXPECT_NO_THROW(e.embed("x"));
    EXPECT_EQ(server.calls.load(), 3);
}

TEST(RemoteEmbedderTest, ExhaustedRetriesAreRetriable) {
    FakeEmbeddings server([](const nlohmann::json&, httplib::Response& res) { res.status = 500; });
    RemoteEmbedder e(server.spec(4));
    try {
        e.embed("x");
        FAIL() << "expected EmbeddingError";
    } catch (const EmbeddingError& err) {
        EXPECT_TRUE(err.retriable());
    }
    EXPECT_EQ(server.calls.load(), 3);  // first try + 2 retries
}

TEST(RemoteEmbedderTest, UnreachableEndpointIsRetriable) {
    ProviderSpec spec;
    spec.kind = ProviderKind::RemoteHttp;
    spec.model_name = "m";
    spec.url = "http://127.0.0.1:1/v1/embeddings";
    spec.dimension = 4;
    spec.max_retries = 1;
    spec.retry_backoff = std::chrono::milliseconds(1);
    spec.timeout = std::chrono::milliseconds(300);
    try {
        RemoteEmbedder(spec).embed("x");
        FAIL() << "expected EmbeddingError";
    } catch (const EmbeddingError& err) {
        EXPECT_TRUE(err.retriable());
    }
}

TEST(RemoteEmbedderTest, MalformedRepliesAreNotRetriable) {
    const std::vector<std::string> bodies = {
        "not json", R"({"unexpected": 1})", R"({"data": [{"nope": []}]})", R"({"data": [{"embedding": ["a","b","c","d"]}]})",
        R"({"data": [{"embedding": [0,0,0,0]}]})", R"({"data": []})"};
    for (const auto& body : bodies) {
        FakeEmbeddings server([&](const nlohmann::json&, httplib::Response& res) {
            res.set_content(body, "application/json");
        });
        try {
            RemoteEmbedder(server.spec(4)).embed("x");
            ADD_FAILURE() << "accepted " << body;
        } catch (const EmbeddingError& err) {
            EXPECT_FALSE(err.retriable()) << body;
        }
        EXPECT_EQ(server.calls.load(), 1) << body;
    }
}

TEST(RemoteEmbedderTest, ClientErrorIsNotRetried) {
    FakeEmbeddings server([](const nlohmann::json&, httplib::Response& res) { res.status = 401; });
    try {
        RemoteEmbedder(server.spec(4)).embed("x");
        FAIL();
    } catch (const EmbeddingError& err) {
        EXPECT_FALSE(err.retriable());
    }
    EXPECT_EQ(server.calls.load(), 1);
}

TEST(RemoteEmbedderTest, WrongDimensionIsAHardError) {
    FakeEmbeddings server(openai_style(8));
    EXPECT_THROW(RemoteEmbedder(server.spec(4)).embed("x"), DimensionMismatch);
}

TEST(RemoteEmbedderTest, Ada002DimensionIsEnforced) {
    EXPECT_EQ(known_model_dimension("text-embedding-ada-002"), 1536u);
    const auto spec = parse_provider(nlohmann::json{
        {"kind", "remote-http"}, {"model", "text-embedding-ada-002"}, {"url", "http://localhost/v1/embeddings"}});
    EXPECT_EQ(spec.dimension, 1536u);
    EXPECT_THROW(parse_provider(nlohmann::json{{"kind", "remote-http"},
                                               {"model", "text-embedding-ada-002"},
                                               {"url", "http://localhost/v1/embeddings"},
                                               {"dimension", 768}}),
                 UsageError);

    FakeEmbeddings server(openai_style(768));
    auto remote = server.spec(1536);
    remote.model_name = "text-embedding-ada-002";
    EXPECT_THROW(RemoteEmbedder(remote).embed("x"), DimensionMismatch);
}

TEST(RemoteEmbedderTest, RejectsBlankTextWithoutCallingOut) {
    FakeEmbeddings server(openai_style(4));
    EXPECT_THROW(RemoteEmbedder(server.spec(4)).embed_batch({"ok", "  "}), UsageError);
    EXPECT_EQ(server.calls.load(), 0);
}

TEST(MakeEmbedder, PicksImplementationByKind) {
    ProviderSpec ref;
    EXPECT_NE(dynamic_cast<ReferenceEmbedder*>(make_embedder(ref).get()), nullptr);
    ProviderSpec remote;
    remote.kind = ProviderKind::RemoteHttp;
    EXPECT_THROW(make_embedder(remote), UsageError);  // no url/model
    remote.model_name = "m";
    remote.url = "ftp://example.com/x";
    EXPECT_THROW(make_embedder(remote), UsageError);
}
