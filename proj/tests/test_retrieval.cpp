#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "duplexrag/http_backend.hpp"
#include "duplexrag/retrieval.hpp"

using namespace duplexrag;

namespace {

TranscriptContext sample_ctx() {
    TranscriptContext ctx;
    ctx.turns.push_back({Speaker::User, "what is the tallest structure in paris", 3.2});
    ctx.turns.push_back({Speaker::Model, "let me think", 4.1});
    ctx.cutoff_time_s = 4.5;
    return ctx;
}

// Owns an httplib server bound to an ephemeral port for the test's lifetime.
class StubServer {
  public:
    explicit StubServer(httplib::Server::Handler handler) {
        server_.Post("/retrieve", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/retrieve"; }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST_CASE("latency model validation") {
    CHECK_NOTHROW(validate(LatencyModel::fixed(0.8)));
    CHECK_THROWS_AS(validate(LatencyModel::fixed(-0.1)), std::invalid_argument);
    CHECK_NOTHROW(validate(LatencyModel::uniform(0.2, 1.5)));
    CHECK_THROWS_AS(validate(LatencyModel::uniform(1.5, 0.2)), std::invalid_argument);
    CHECK_THROWS_AS(validate(LatencyModel::uniform(-0.2, 1.0)), std::invalid_argument);
    CHECK_NOTHROW(validate(LatencyModel::histogram({{0.0, 1.0, 0.5}, {1.0, 2.0, 0.5}})));
    CHECK_THROWS_AS(validate(LatencyModel::histogram({{0.0, 1.0, 0.4}, {1.0, 2.0, 0.4}})),
                    std::invalid_argument);
    CHECK_THROWS_AS(validate(LatencyModel::histogram({})), std::invalid_argument);
}

TEST_CASE("sample_latency respects each model family") {
    Rng rng(5);
    CHECK(sample_latency(LatencyModel::fixed(0.8), rng) == 0.8);

    LatencyModel u = LatencyModel::uniform(0.5, 1.5);
    for (int k = 0; k < 500; ++k) {
        const double v = sample_latency(u, rng);
        CHECK(v >= 0.5);
        CHECK(v < 1.5);
    }

    // Two-bin histogram: 30% in [0,1), 70% in [2,3).
    LatencyModel h = LatencyModel::histogram({{0.0, 1.0, 0.3}, {2.0, 3.0, 0.7}});
    int low = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const double v = sample_latency(h, rng);
        const bool in_low = v >= 0.0 && v < 1.0;
        const bool in_high = v >= 2.0 && v < 3.0;
        CHECK((in_low || in_high));
        low += in_low ? 1 : 0;
    }
    CHECK(std::abs(low / static_cast<double>(n) - 0.3) < 0.02);
}

TEST_CASE("latency sampling is reproducible under the same rng seed") {
    LatencyModel u = LatencyModel::uniform(0.0, 2.0);
    Rng a(9), b(9);
    for (int k = 0; k < 100; ++k)
        CHECK(sample_latency(u, a) == sample_latency(u, b));
}

TEST_CASE("finalize_with_timeout caps latency at the budget") {
    ReferenceDoc doc = ReferenceDoc::from_text("some words", 64);
    RetrievalOutcome fast = finalize_with_timeout(RetrievalOutcome::success(doc, 1.9), 2.0);
    CHECK(fast.ok());
    CHECK(fast.latency_s == 1.9);

    RetrievalOutcome slow = finalize_with_timeout(RetrievalOutcome::success(doc, 2.1), 2.0);
    CHECK(slow.status == RetrievalOutcome::Status::Timeout);
    CHECK(slow.latency_s == 2.0);

    // Errors past the budget also surface as timeouts.
    RetrievalOutcome err =
        finalize_with_timeout(RetrievalOutcome::error("boom", 3.0), 2.0);
    CHECK(err.status == RetrievalOutcome::Status::Timeout);
    CHECK(err.latency_s == 2.0);

    // Disabled ceiling passes everything through.
    RetrievalOutcome open = finalize_with_timeout(RetrievalOutcome::success(doc, 9.0), 0.0);
    CHECK(open.ok());
    CHECK(open.latency_s == 9.0);
}

TEST_CASE("scripted oracle returns its fixture with modeled latency") {
    ReferenceDoc fixture = ReferenceDoc::from_text("the eiffel tower is 330 meters tall", 128);
    ScriptedOracleBackend be(fixture, LatencyModel::fixed(0.8), 2.0, Rng(1));
    RetrievalOutcome out = be.retrieve(sample_ctx());
    REQUIRE(out.ok());
    CHECK(out.doc.text == fixture.text);
    CHECK(out.latency_s == 0.8);

    ScriptedOracleBackend slow(fixture, LatencyModel::fixed(3.0), 2.0, Rng(1));
    RetrievalOutcome t = slow.retrieve(sample_ctx());
    CHECK(t.status == RetrievalOutcome::Status::Timeout);
    CHECK(t.latency_s == 2.0);
}

TEST_CASE("mock backend ignores context and serves its document") {
    MockBackend be("alpha beta gamma", 64, LatencyModel::fixed(0.1), 2.0, Rng(2));
    RetrievalOutcome out = be.retrieve(sample_ctx());
    REQUIRE(out.ok());
    CHECK(out.doc.text == "alpha beta gamma");
    CHECK(out.doc.tokens.size() == 3);
}

TEST_CASE("fault injector converts the configured fraction to errors") {
    auto make = [&](double p, uint64_t seed) {
        auto inner = std::make_unique<MockBackend>("doc", 64, LatencyModel::fixed(0.1), 2.0,
                                                   Rng(3));
        return FaultInjector(std::move(inner), p, Rng(seed));
    };

    FaultInjector never = make(0.0, 7);
    for (int k = 0; k < 50; ++k)
        CHECK(never.retrieve(sample_ctx()).ok());

    FaultInjector always = make(1.0, 7);
    for (int k = 0; k < 50; ++k)
        CHECK(always.retrieve(sample_ctx()).status == RetrievalOutcome::Status::Error);

    FaultInjector half = make(0.5, 11);
    int errors = 0;
    const int n = 4000;
    for (int k = 0; k < n; ++k)
        errors += half.retrieve(sample_ctx()).ok() ? 0 : 1;
    CHECK(std::abs(errors / static_cast<double>(n) - 0.5) < 0.03);
}

TEST_CASE("wall delay backend sleeps for the modeled latency") {
    auto inner = std::make_unique<MockBackend>("doc", 64, LatencyModel::fixed(0.05), 2.0,
                                               Rng(3));
    WallDelayBackend be(std::move(inner));
    const auto t0 = std::chrono::steady_clock::now();
    RetrievalOutcome out = be.retrieve(sample_ctx());
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(out.ok());
    CHECK(elapsed >= 0.05);
    CHECK(elapsed < 1.0);
}

TEST_CASE("endpoint parsing splits base and path") {
    HttpEndpoint e = HttpEndpoint::parse("http://127.0.0.1:8089/retrieve");
    CHECK(e.base == "http://127.0.0.1:8089");
    CHECK(e.path == "/retrieve");
    HttpEndpoint bare = HttpEndpoint::parse("http://host:1234");
    CHECK(bare.base == "http://host:1234");
    CHECK(bare.path == "/");
}

TEST_CASE("prompt rendering substitutes the transcript placeholder") {
    TranscriptContext ctx = sample_ctx();
    std::string p = render_prompt("Context:\n[TRANSCRIPT]\nAnswer:", ctx);
    CHECK(p.find("[TRANSCRIPT]") == std::string::npos);
    CHECK(p.find("User:") != std::string::npos);
    CHECK(p.find("tallest structure") != std::string::npos);

    std::string appended = render_prompt("no placeholder", ctx);
    CHECK(appended.rfind("no placeholder", 0) == 0);
    CHECK(appended.find("tallest structure") != std::string::npos);
}

TEST_CASE("http retrieval round-trips the wire contract against a stub server") {
    std::atomic<int> hits{0};
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.contains("transcript"));
        REQUIRE(body.contains("template_id"));
        CHECK(body["template_id"] == "qa_v1");
        REQUIRE(body["transcript"].size() == 2);
        CHECK(body["transcript"][0]["speaker"] == "user");
        CHECK(body["transcript"][1]["speaker"] == "model");
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        res.set_content(nlohmann::json{{"reference", "the eiffel tower is 330 meters tall"}}
                            .dump(),
                        "application/json");
    });

    HttpBackend be(server.url(), "qa_v1", 5.0, 128);
    RetrievalOutcome out = be.retrieve(sample_ctx());
    REQUIRE(out.ok());
    CHECK(out.doc.text == "the eiffel tower is 330 meters tall");
    CHECK(out.doc.tokens.size() == 7);
    CHECK(out.latency_s >= 0.05);
    CHECK(out.latency_s < 2.0);
    CHECK(hits == 1);
}

TEST_CASE("a server slower than the budget comes back as a timeout at the budget") {
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(3000));
        res.set_content(nlohmann::json{{"reference", "too late"}}.dump(), "application/json");
    });

    HttpBackend be(server.url(), "qa_v1", 0.4, 128);
    const auto t0 = std::chrono::steady_clock::now();
    RetrievalOutcome out = be.retrieve(sample_ctx());
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(out.status == RetrievalOutcome::Status::Timeout);
    CHECK(out.latency_s == 0.4);
    CHECK(elapsed < 2.5); // the client gave up near the budget, not at 3 s
}

TEST_CASE("http error statuses and malformed bodies are error outcomes") {
    StubServer s500([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("backend exploded", "text/plain");
    });
    RetrievalOutcome err =
        http_retrieve(HttpEndpoint::parse(s500.url()), sample_ctx(), "qa_v1", 2.0);
    CHECK(err.status == RetrievalOutcome::Status::Error);

    StubServer bad([](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json at all", "application/json");
    });
    RetrievalOutcome mal =
        http_retrieve(HttpEndpoint::parse(bad.url()), sample_ctx(), "qa_v1", 2.0);
    CHECK(mal.status == RetrievalOutcome::Status::Error);

    // Nothing listening on the port at all.
    RetrievalOutcome down = http_retrieve(HttpEndpoint::parse("http://127.0.0.1:1/retrieve"),
                                          sample_ctx(), "qa_v1", 1.0);
    CHECK(down.status != RetrievalOutcome::Status::Ok);
}

TEST_CASE("percentile stats summarize a latency sample") {
    std::vector<double> samples;
    for (int k = 1; k <= 100; ++k)
        samples.push_back(k / 100.0); // 0.01 .. 1.00
    LatencyStats s = percentile_stats(samples, 3);
    CHECK(s.n == 100);
    CHECK(s.failures == 3);
    CHECK(s.mean_s == doctest::Approx(0.505));
    CHECK(s.p50_s == doctest::Approx(0.5).epsilon(0.02));
    CHECK(s.p90_s == doctest::Approx(0.9).epsilon(0.02));
    CHECK(s.p99_s == doctest::Approx(0.99).epsilon(0.02));

    LatencyStats empty = percentile_stats({}, 2);
    CHECK(empty.n == 0);
    CHECK(empty.failures == 2);
}

TEST_CASE("bench_backend probes a stub server and reports percentiles") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        res.set_content(nlohmann::json{{"reference", "probe doc"}}.dump(),
                        "application/json");
    });
    LatencyStats s = bench_backend(HttpEndpoint::parse(server.url()), "qa_v1", 8, 5.0);
    CHECK(s.n == 8);
    CHECK(s.failures == 0);
    CHECK(s.p50_s >= 0.05);
    CHECK(s.p50_s < 0.5);
}

TEST_CASE("the keyword judge client extracts over http") {
    StubServer server([](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.contains("question"));
        REQUIRE(body.contains("response"));
        REQUIRE(body.contains("aliases"));
        REQUIRE(body.contains("template_id"));
        res.set_content(nlohmann::json{{"keyword", "eiffel tower"}}.dump(),
                        "application/json");
    });
    std::string kw = http_extract_keyword(HttpEndpoint::parse(server.url()),
                                          "what is the tallest structure in paris",
                                          "the eiffel tower of course",
                                          {"eiffel tower", "la tour eiffel"}, "judge_v1", 2.0);
    CHECK(kw == "eiffel tower");

    std::string none = http_extract_keyword(HttpEndpoint::parse("http://127.0.0.1:1/x"),
                                            "q", "r", {}, "judge_v1", 0.5);
    CHECK(none.empty());
}
