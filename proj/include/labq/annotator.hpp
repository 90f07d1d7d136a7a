#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "labq/dataset.hpp"

namespace labq {

enum class PromptScheme { plain, scale_aware };
PromptScheme parse_prompt_scheme(std::string_view name);
std::string_view prompt_scheme_name(PromptScheme s);

// Bumped whenever a template changes, so stale cache entries never match.
inline constexpr std::string_view kPromptTemplateVersion = "1";

struct PromptPair {
    std::string system;
    std::string user;
    PromptScheme scheme = PromptScheme::scale_aware;
    bool essay_escaped = false;  // essay contained ``` and was rewritten
};

// The two fixed templates with {essay} substituted, nothing else. Triple
// backticks inside the essay would break the fencing, so they are replaced
// with single backticks and the alteration is flagged.
PromptPair build_prompt(PromptScheme scheme, std::string_view essay);

struct SubscaleScores {
    double sympathetic = 0.0;
    double moved = 0.0;
    double compassionate = 0.0;
    double tender = 0.0;
    double warm = 0.0;
    double softhearted = 0.0;

    std::array<double, 6> as_array() const {
        return {sympathetic, moved, compassionate, tender, warm, softhearted};
    }
};

// Arithmetic mean over the six Batson subscales.
double aggregate_subscales(const SubscaleScores& s);

struct ParsedResponse {
    std::optional<SubscaleScores> subscales;  // scale_aware only
    double score = 0.0;
};

// The templates forbid anything but the scores, so any prose, wrong count or
// out-of-range value is a ParseError (carrying the raw text), never a
// best-effort extraction. One concession: a subscale may overshoot the scale
// by up to 0.5 (models do emit the occasional 7.4) as long as the aggregate
// stays within [1,7]. Plain responses are strict.
ParsedResponse parse_response(std::string_view raw, PromptScheme scheme);

struct RetryPolicy {
    int max_attempts = 3;
    std::vector<int> backoff_ms = {100, 500, 2000};  // reuses last entry
};

struct LLMConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o";
    double temperature = 0.0;
    double top_p = 0.01;
    int max_in_flight = 4;
    RetryPolicy retry;
    std::string api_key_env = "LABQ_API_KEY";
    int timeout_s = 30;

    static LLMConfig from_json(const nlohmann::json& j);
};

struct AnnotationRecord {
    std::string sample_id;
    PromptScheme scheme = PromptScheme::scale_aware;
    std::string model;
    std::optional<SubscaleScores> subscales;
    double score = 0.0;
    std::string raw_response;
    std::string cache_key;
    int attempts = 1;

    nlohmann::json to_json() const;
    static AnnotationRecord from_json(const nlohmann::json& j);
};

// Stable hash of (model, scheme, template version, essay, temperature,
// top_p); any change to these changes the key.
std::string annotation_cache_key(const LLMConfig& cfg, PromptScheme scheme,
                                 std::string_view essay);

struct ChatRequest {
    std::string system;
    std::string user;
};

struct TransportReply {
    bool ok = false;
    std::string content;
    std::string error;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual TransportReply complete(const ChatRequest& request) = 0;
};

// OpenAI-compatible POST <base_url>/chat/completions; bearer token read
// from the environment variable named in the config, header omitted when
// unset. One connection per request, safe for concurrent callers.
class HttpChatTransport : public ChatTransport {
public:
    explicit HttpChatTransport(LLMConfig cfg) : cfg_(std::move(cfg)) {}
    TransportReply complete(const ChatRequest& request) override;

private:
    LLMConfig cfg_;
};

// In-process scripted endpoint. Thread-safe; instruments call counts and
// the high-water mark of concurrent requests so tests can assert the
// max_in_flight contract.
class MockChatTransport : public ChatTransport {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    explicit MockChatTransport(Responder responder);
    static std::unique_ptr<MockChatTransport> fixed(std::string response);
    // Deterministic per-essay subscale scores derived from the essay hash.
    static std::unique_ptr<MockChatTransport> essay_hash(PromptScheme scheme);

    void fail_first(int n) { fail_remaining_ = n; }
    void set_latency_ms(int ms) { latency_ms_ = ms; }

    TransportReply complete(const ChatRequest& request) override;

    int calls() const { return calls_.load(); }
    int max_in_flight_seen() const { return max_in_flight_seen_.load(); }

private:
    Responder responder_;
    std::atomic<int> fail_remaining_{0};
    std::atomic<int> calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_seen_{0};
    int latency_ms_ = 0;
};

// Extracts the fenced essay from a user prompt (mock helpers and tests).
std::string extract_fenced_essay(std::string_view user_prompt);

struct AnnotateFailure {
    std::string sample_id;
    std::string error;
    int attempts = 0;
};

struct AnnotateResult {
    Dataset dataset;                        // llm_label filled where annotated
    std::vector<AnnotationRecord> records;  // input order, successes only
    std::vector<AnnotateFailure> failures;  // input order
    std::size_t cache_hits = 0;
    std::size_t transport_calls = 0;

    bool complete() const { return failures.empty(); }
};

// Annotates every sample, serving from the JSON-Lines cache first and
// issuing at most cfg.max_in_flight concurrent requests for the rest.
// Endpoint or parse exhaustion becomes a failure entry, not an exception;
// failed samples keep llm_label unset.
AnnotateResult annotate_batch(const Dataset& dataset, const LLMConfig& cfg,
                              PromptScheme scheme,
                              const std::filesystem::path& cache_path,
                              ChatTransport& transport);

// Cache entries keyed by annotation_cache_key. Unparseable lines (crash
// artifacts) are skipped; *skipped_lines reports how many.
std::unordered_map<std::string, AnnotationRecord> load_annotation_cache(
    const std::filesystem::path& path, std::size_t* skipped_lines = nullptr);

}  // namespace labq
