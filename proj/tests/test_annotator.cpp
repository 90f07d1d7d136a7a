#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <atomic>
#include <cmath>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "labq/annotator.hpp"
#include "labq/errors.hpp"
#include "test_util.hpp"

using namespace labq;
using labq::testutil::TempDir;

namespace {

Dataset tiny_dataset(std::size_t n) {
    Dataset d;
    d.name = "tiny";
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.essay = "essay number " + std::to_string(i) + " about the news";
        s.crowd_label = 3.0;
        s.split = Split::train;
        s.source = "tiny";
        d.samples.push_back(std::move(s));
    }
    return d;
}

LLMConfig mock_config() {
    LLMConfig cfg;
    cfg.model = "mock";
    cfg.retry.max_attempts = 3;
    cfg.retry.backoff_ms = {0};
    cfg.max_in_flight = 4;
    return cfg;
}

}  // namespace

TEST_CASE("prompts embed the essay in backticks with the fixed template text") {
    PromptPair scale = build_prompt(PromptScheme::scale_aware, "I feel sad.");
    CHECK(scale.user.find("```I feel sad.```") != std::string::npos);
    CHECK(scale.user.find("Batson's empathy scale") != std::string::npos);
    CHECK(scale.user.find("sympathetic, moved, compassionate, tender, warm and "
                          "softhearted") != std::string::npos);
    CHECK(scale.user.find("comma-separated floating point scores") !=
          std::string::npos);
    CHECK(scale.system.find("Batson's definition") != std::string::npos);
    CHECK(scale.system.find("triple backticks") != std::string::npos);

    PromptPair plain = build_prompt(PromptScheme::plain, "x");
    CHECK(plain.user.find("between 1.0 and 7.0") != std::string::npos);
    CHECK(plain.user.find("```x```") != std::string::npos);
    CHECK(plain.system.find("Batson") == std::string::npos);

    CHECK_THROWS_AS(build_prompt(PromptScheme::scale_aware, ""), ValidationError);
    CHECK_THROWS_AS(build_prompt(PromptScheme::plain, "   "), ValidationError);
}

TEST_CASE("triple backticks inside the essay are defused") {
    PromptPair p = build_prompt(PromptScheme::plain, "code ```here``` done");
    CHECK(p.essay_escaped);
    CHECK(p.user.find("```code `here` done```") != std::string::npos);
}

TEST_CASE("parse_response: scale-aware happy path and the 6.4 aggregate") {
    ParsedResponse r = parse_response("6, 6, 7, 6, 6, 7.4", PromptScheme::scale_aware);
    REQUIRE(r.subscales.has_value());
    CHECK(r.score == doctest::Approx(6.4).epsilon(1e-12));
    CHECK(r.subscales->sympathetic == 6.0);
    CHECK(r.subscales->softhearted == 7.4);

    ParsedResponse flat =
        parse_response("4.0,4.0,4.0,4.0,4.0,4.0", PromptScheme::scale_aware);
    CHECK(flat.score == 4.0);

    ParsedResponse padded =
        parse_response("  2.0 , 3.0,4.0, 5.0 ,6.0, 7.0  ", PromptScheme::scale_aware);
    CHECK(padded.score == doctest::Approx(4.5));
}

TEST_CASE("parse_response rejects prose, bad counts and bad ranges") {
    CHECK_THROWS_AS(parse_response("The empathy is high", PromptScheme::scale_aware),
                    ParseError);
    CHECK_THROWS_AS(parse_response("1,2,3,4,5", PromptScheme::scale_aware), ParseError);
    CHECK_THROWS_AS(parse_response("1,2,3,4,5,6,7", PromptScheme::scale_aware),
                    ParseError);
    CHECK_THROWS_AS(parse_response("1,2,3,4,5,8", PromptScheme::scale_aware),
                    ParseError);
    CHECK_THROWS_AS(parse_response("0.2,2,3,4,5,6", PromptScheme::scale_aware),
                    ParseError);
    // mild overshoot on one subscale is tolerated, beyond 0.5 is not;
    // the aggregate itself must stay on the scale
    CHECK(parse_response("7.4,6,6,6,6,6", PromptScheme::scale_aware).score ==
          doctest::Approx(37.4 / 6.0));
    CHECK_THROWS_AS(parse_response("7.6,6,6,6,6,6", PromptScheme::scale_aware),
                    ParseError);
    CHECK_THROWS_AS(parse_response("7.4,7,7,7,7,7", PromptScheme::scale_aware),
                    ParseError);
    CHECK_THROWS_AS(
        parse_response("1,2,3,4,5,6 and that is my answer", PromptScheme::scale_aware),
        ParseError);

    CHECK(parse_response("5.5", PromptScheme::plain).score == 5.5);
    CHECK_THROWS_AS(parse_response("7.5", PromptScheme::plain), ParseError);
    CHECK_THROWS_AS(parse_response("high", PromptScheme::plain), ParseError);
    CHECK_THROWS_AS(parse_response("5.5 overall", PromptScheme::plain), ParseError);

    try {
        parse_response("nonsense", PromptScheme::plain);
    } catch (const ParseError& e) {
        CHECK(e.raw() == "nonsense");
    }
}

TEST_CASE("aggregate_subscales is the plain mean") {
    CHECK(aggregate_subscales({1, 2, 3, 4, 5, 6}) == 3.5);
    CHECK(aggregate_subscales({7, 7, 7, 7, 7, 7}) == 7.0);
    CHECK(aggregate_subscales({6, 6, 7, 6, 6, 7.4}) == doctest::Approx(6.4).epsilon(1e-12));
}

TEST_CASE("cache keys are stable and sensitive to every ingredient") {
    LLMConfig cfg = mock_config();
    std::string base = annotation_cache_key(cfg, PromptScheme::scale_aware, "essay");
    CHECK(base == annotation_cache_key(cfg, PromptScheme::scale_aware, "essay"));
    CHECK(base != annotation_cache_key(cfg, PromptScheme::plain, "essay"));
    CHECK(base != annotation_cache_key(cfg, PromptScheme::scale_aware, "essay2"));

    LLMConfig other = cfg;
    other.model = "different";
    CHECK(base != annotation_cache_key(other, PromptScheme::scale_aware, "essay"));
    other = cfg;
    other.temperature = 0.5;
    CHECK(base != annotation_cache_key(other, PromptScheme::scale_aware, "essay"));
    other = cfg;
    other.top_p = 0.9;
    CHECK(base != annotation_cache_key(other, PromptScheme::scale_aware, "essay"));
}

TEST_CASE("annotate_batch fills every label from a fixed mock response") {
    TempDir dir;
    Dataset d = tiny_dataset(10);
    auto mock = MockChatTransport::fixed("2,2,2,2,2,2");
    AnnotateResult result = annotate_batch(d, mock_config(), PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), *mock);
    CHECK(result.complete());
    CHECK(result.records.size() == 10);
    for (const auto& s : result.dataset.samples) CHECK(*s.llm_label == 2.0);
    for (const auto& r : result.records) {
        CHECK(r.score == 2.0);
        CHECK(r.attempts == 1);
        REQUIRE(r.subscales.has_value());
        CHECK(std::fabs(r.score - aggregate_subscales(*r.subscales)) <= 1e-9);
    }
}

TEST_CASE("retry contract: two failures then success records 3 attempts") {
    TempDir dir;
    Dataset d = tiny_dataset(1);
    auto mock = MockChatTransport::fixed("3,3,3,3,3,3");
    mock->fail_first(2);
    AnnotateResult result = annotate_batch(d, mock_config(), PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), *mock);
    REQUIRE(result.complete());
    CHECK(result.records[0].attempts == 3);
    CHECK(result.transport_calls == 3);
}

TEST_CASE("persistent endpoint failure yields failure entries, not scores") {
    TempDir dir;
    Dataset d = tiny_dataset(3);
    auto mock = MockChatTransport::fixed("3,3,3,3,3,3");
    mock->fail_first(1000);
    AnnotateResult result = annotate_batch(d, mock_config(), PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), *mock);
    CHECK_FALSE(result.complete());
    CHECK(result.failures.size() == 3);
    for (const auto& f : result.failures) {
        CHECK(f.attempts == 3);
        CHECK(f.error.find("endpoint") != std::string::npos);
    }
    for (const auto& s : result.dataset.samples) CHECK_FALSE(s.llm_label.has_value());
}

TEST_CASE("parse garbage is re-asked once, then surfaces in the failures") {
    TempDir dir;
    Dataset d = tiny_dataset(1);
    std::atomic<int> calls{0};
    MockChatTransport mock([&calls](const ChatRequest&) {
        ++calls;
        return "I refuse to answer with numbers";
    });
    AnnotateResult result = annotate_batch(d, mock_config(), PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), mock);
    CHECK_FALSE(result.complete());
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].error.find("parse") != std::string::npos);
    CHECK(calls.load() == 2);  // one re-ask, no more
    CHECK_FALSE(result.dataset.samples[0].llm_label.has_value());
}

TEST_CASE("warm cache: second run does no transport calls, equal output") {
    TempDir dir;
    Dataset d = tiny_dataset(8);
    auto mock = MockChatTransport::essay_hash(PromptScheme::scale_aware);
    LLMConfig cfg = mock_config();

    AnnotateResult first = annotate_batch(d, cfg, PromptScheme::scale_aware,
                                          dir.file("cache.jsonl"), *mock);
    REQUIRE(first.complete());
    CHECK(first.transport_calls == 8);

    AnnotateResult second = annotate_batch(d, cfg, PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), *mock);
    REQUIRE(second.complete());
    CHECK(second.transport_calls == 0);
    CHECK(second.cache_hits == 8);
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        CHECK(*second.dataset.samples[i].llm_label ==
              *first.dataset.samples[i].llm_label);
}

TEST_CASE("concurrent requests never exceed max_in_flight") {
    TempDir dir;
    Dataset d = tiny_dataset(24);
    auto mock = MockChatTransport::fixed("4,4,4,4,4,4");
    mock->set_latency_ms(5);
    LLMConfig cfg = mock_config();
    cfg.max_in_flight = 3;
    AnnotateResult result = annotate_batch(d, cfg, PromptScheme::scale_aware,
                                           dir.file("cache.jsonl"), *mock);
    REQUIRE(result.complete());
    CHECK(mock->max_in_flight_seen() <= 3);
    CHECK(mock->max_in_flight_seen() >= 2);  // pool actually ran concurrently
}

TEST_CASE("corrupt trailing cache line is skipped with a warning") {
    TempDir dir;
    Dataset d = tiny_dataset(2);
    auto mock = MockChatTransport::fixed("5,5,5,5,5,5");
    LLMConfig cfg = mock_config();
    annotate_batch(d, cfg, PromptScheme::scale_aware, dir.file("cache.jsonl"), *mock);

    // simulate a crash mid-append
    {
        std::ofstream out(dir.file("cache.jsonl"), std::ios::app);
        out << "{\"sample_id\": \"s9\", \"scheme\": \"scale_aw";
    }
    std::size_t skipped = 0;
    auto cache = load_annotation_cache(dir.file("cache.jsonl"), &skipped);
    CHECK(skipped == 1);
    CHECK(cache.size() == 2);  // the two intact records survive
}

TEST_CASE("annotation records round-trip through JSONL") {
    AnnotationRecord r;
    r.sample_id = "abc";
    r.scheme = PromptScheme::scale_aware;
    r.model = "mock";
    r.subscales = SubscaleScores{1, 2, 3, 4, 5, 6};
    r.score = 3.5;
    r.raw_response = "1,2,3,4,5,6";
    r.cache_key = "deadbeef";
    r.attempts = 2;
    AnnotationRecord back = AnnotationRecord::from_json(r.to_json());
    CHECK(back.sample_id == r.sample_id);
    CHECK(back.score == r.score);
    CHECK(back.cache_key == r.cache_key);
    CHECK(back.attempts == 2);
    REQUIRE(back.subscales.has_value());
    CHECK(back.subscales->tender == 4.0);
}

TEST_CASE("http transport speaks the chat-completions wire format") {
    httplib::Server server;
    nlohmann::json seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    seen_body = nlohmann::json::parse(req.body);
                    if (req.has_header("Authorization"))
                        seen_auth = req.get_header_value("Authorization");
                    nlohmann::json reply{
                        {"choices",
                         {{{"message", {{"role", "assistant"},
                                        {"content", "1,2,3,4,5,6"}}}}}}};
                    res.set_content(reply.dump(), "application/json");
                });

    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("LABQ_TEST_KEY", "sekrit", 1);
    LLMConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.model = "test-model";
    cfg.api_key_env = "LABQ_TEST_KEY";
    HttpChatTransport transport(cfg);

    TransportReply reply = transport.complete({"sys prompt", "user prompt"});
    server.stop();
    server_thread.join();

    REQUIRE(reply.ok);
    CHECK(reply.content == "1,2,3,4,5,6");
    CHECK(seen_body.at("model") == "test-model");
    CHECK(seen_body.at("temperature").get<double>() == 0.0);
    CHECK(seen_body.at("top_p").get<double>() == 0.01);
    REQUIRE(seen_body.at("messages").size() == 2);
    CHECK(seen_body.at("messages")[0].at("role") == "system");
    CHECK(seen_body.at("messages")[0].at("content") == "sys prompt");
    CHECK(seen_body.at("messages")[1].at("role") == "user");
    CHECK(seen_body.at("messages")[1].at("content") == "user prompt");
    CHECK(seen_auth == "Bearer sekrit");
}

TEST_CASE("llm config defaults follow the deterministic-sampling setup") {
    LLMConfig cfg;
    CHECK(cfg.temperature == 0.0);
    CHECK(cfg.top_p == 0.01);

    LLMConfig parsed = LLMConfig::from_json(nlohmann::json{
        {"base_url", "http://localhost:9/v1"},
        {"model", "m"},
        {"max_in_flight", 2},
        {"retry", {{"max_attempts", 5}, {"backoff_ms", {1, 2, 3}}}}});
    CHECK(parsed.temperature == 0.0);
    CHECK(parsed.top_p == 0.01);
    CHECK(parsed.retry.max_attempts == 5);
    CHECK(parsed.retry.backoff_ms == std::vector<int>{1, 2, 3});
    CHECK_THROWS_AS(
        LLMConfig::from_json(nlohmann::json{{"max_in_flight", 0}}),
        ValidationError);
}
