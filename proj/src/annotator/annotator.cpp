#include "labq/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "labq/errors.hpp"
#include "labq/hash.hpp"
#include "labq/strings.hpp"

namespace labq {

namespace {

constexpr char kFence[] = "```";

const char* kPlainSystem =
    "Your task is to measure the empathy of individuals based on their written "
    "essays.\n"
    "Human subjects wrote these essays after reading a newspaper article "
    "involving harm to individuals, groups of people, nature, etc. The essay is "
    "provided to you within triple backticks.";

const char* kPlainUserTail =
    "\nNow, provide empathy score between 1.0 and 7.0, where a score of 1.0 "
    "means the lowest empathy, and a score of 7.0 means the highest empathy.\n"
    "You must not provide any other outputs apart from the scores";

const char* kScaleAwareSystem =
    "Your task is to measure the empathy of individuals based on their written "
    "essays.\n"
    "You will assess empathy using Batson's definition, which specifically "
    "measures how the subject is feeling each of the following six emotions: "
    "sympathetic, moved, compassionate, tender, warm and softhearted.\n"
    "Human subjects wrote these essays after reading a newspaper article "
    "involving harm to individuals, groups of people, nature, etc. The essay is "
    "provided to you within triple backticks.";

const char* kScaleAwareUserTail =
    "\nNow, provide scores with respect to Batson's empathy scale. That is, "
    "provide scores between 1.0 and 7.0 for each of the following emotions: "
    "sympathetic, moved, compassionate, tender, warm and softhearted.\n"
    "You must provide comma-separated floating point scores, where a score of "
    "1.0 means the individual is not feeling the emotion at all, and a score of "
    "7.0 means the individual is extremely feeling the emotion.\n"
    "You must not provide any other outputs apart from the scores.";

bool in_score_range(double v) { return v >= 1.0 && v <= 7.0; }

// Models occasionally overshoot the scale on single subscales (e.g. a 7.4);
// tolerate up to this much as long as the aggregate stays on the scale.
constexpr double kSubscaleOvershoot = 0.5;

bool in_subscale_range(double v) {
    return v >= 1.0 - kSubscaleOvershoot && v <= 7.0 + kSubscaleOvershoot;
}

}  // namespace

PromptScheme parse_prompt_scheme(std::string_view name) {
    if (name == "plain") return PromptScheme::plain;
    if (name == "scale_aware" || name == "scale-aware") return PromptScheme::scale_aware;
    throw ValidationError("unknown prompt scheme '" + std::string(name) + "'");
}

std::string_view prompt_scheme_name(PromptScheme s) {
    return s == PromptScheme::plain ? "plain" : "scale_aware";
}

PromptPair build_prompt(PromptScheme scheme, std::string_view essay) {
    if (trim(essay).empty())
        throw ValidationError("build_prompt: essay is empty");

    std::string body{essay};
    bool escaped = false;
    for (std::size_t pos = body.find(kFence); pos != std::string::npos;
         pos = body.find(kFence, pos)) {
        body.replace(pos, 3, "`");
        escaped = true;
        ++pos;
    }

    PromptPair out;
    out.scheme = scheme;
    out.essay_escaped = escaped;
    out.user = "Essay: ```" + body + "```";
    if (scheme == PromptScheme::plain) {
        out.system = kPlainSystem;
        out.user += kPlainUserTail;
    } else {
        out.system = kScaleAwareSystem;
        out.user += kScaleAwareUserTail;
    }
    return out;
}

double aggregate_subscales(const SubscaleScores& s) {
    auto a = s.as_array();
    double sum = 0.0;
    for (double v : a) sum += v;
    return sum / 6.0;
}

ParsedResponse parse_response(std::string_view raw, PromptScheme scheme) {
    auto fail = [&raw](const std::string& why) -> ParseError {
        return ParseError("parse_response: " + why, std::string(raw));
    };

    if (scheme == PromptScheme::plain) {
        auto v = parse_strict_double(raw);
        if (!v) throw fail("expected a single numeric score");
        if (!in_score_range(*v)) throw fail("score outside [1,7]");
        return ParsedResponse{std::nullopt, *v};
    }

    auto tokens = split(trim(raw), ',');
    if (tokens.size() != 6)
        throw fail("expected 6 comma-separated scores, got " +
                   std::to_string(tokens.size()));
    std::array<double, 6> values{};
    for (std::size_t i = 0; i < 6; ++i) {
        auto v = parse_strict_double(tokens[i]);
        if (!v) throw fail("token '" + std::string(trim(tokens[i])) + "' is not numeric");
        if (!in_subscale_range(*v))
            throw fail("score " + fmt_double(*v) + " outside [1,7]");
        values[i] = *v;
    }
    SubscaleScores s{values[0], values[1], values[2], values[3], values[4], values[5]};
    double score = aggregate_subscales(s);
    if (!in_score_range(score))
        throw fail("aggregate " + fmt_double(score) + " outside [1,7]");
    return ParsedResponse{s, score};
}

LLMConfig LLMConfig::from_json(const nlohmann::json& j) {
    LLMConfig cfg;
    auto opt = [&j](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    opt("base_url", cfg.base_url);
    opt("model", cfg.model);
    opt("temperature", cfg.temperature);
    opt("top_p", cfg.top_p);
    opt("max_in_flight", cfg.max_in_flight);
    opt("api_key_env", cfg.api_key_env);
    opt("timeout_s", cfg.timeout_s);
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        if (r.contains("max_attempts"))
            cfg.retry.max_attempts = r.at("max_attempts").get<int>();
        if (r.contains("backoff_ms"))
            cfg.retry.backoff_ms = r.at("backoff_ms").get<std::vector<int>>();
    }
    if (cfg.max_in_flight < 1)
        throw ValidationError("llm config: max_in_flight must be >= 1");
    if (cfg.retry.max_attempts < 1)
        throw ValidationError("llm config: retry.max_attempts must be >= 1");
    return cfg;
}

std::string annotation_cache_key(const LLMConfig& cfg, PromptScheme scheme,
                                 std::string_view essay) {
    std::string material;
    material.reserve(essay.size() + 64);
    material += cfg.model;
    material += '\x1f';
    material += prompt_scheme_name(scheme);
    material += '\x1f';
    material += kPromptTemplateVersion;
    material += '\x1f';
    material += essay;
    material += '\x1f';
    material += fmt_double(cfg.temperature);
    material += '\x1f';
    material += fmt_double(cfg.top_p);
    return to_hex(fnv1a64(material));
}

nlohmann::json AnnotationRecord::to_json() const {
    nlohmann::json j{{"sample_id", sample_id},
                     {"scheme", prompt_scheme_name(scheme)},
                     {"model", model},
                     {"score", score},
                     {"raw_response", raw_response},
                     {"cache_key", cache_key},
                     {"attempts", attempts}};
    if (subscales) {
        j["subscales"] = {{"sympathetic", subscales->sympathetic},
                          {"moved", subscales->moved},
                          {"compassionate", subscales->compassionate},
                          {"tender", subscales->tender},
                          {"warm", subscales->warm},
                          {"softhearted", subscales->softhearted}};
    }
    return j;
}

AnnotationRecord AnnotationRecord::from_json(const nlohmann::json& j) {
    AnnotationRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.scheme = parse_prompt_scheme(j.at("scheme").get<std::string>());
    r.model = j.at("model").get<std::string>();
    r.score = j.at("score").get<double>();
    r.raw_response = j.at("raw_response").get<std::string>();
    r.cache_key = j.at("cache_key").get<std::string>();
    if (j.contains("attempts")) r.attempts = j.at("attempts").get<int>();
    if (j.contains("subscales")) {
        const auto& s = j.at("subscales");
        r.subscales = SubscaleScores{
            s.at("sympathetic").get<double>(), s.at("moved").get<double>(),
            s.at("compassionate").get<double>(), s.at("tender").get<double>(),
            s.at("warm").get<double>(), s.at("softhearted").get<double>()};
    }
    return r;
}

std::unordered_map<std::string, AnnotationRecord> load_annotation_cache(
    const std::filesystem::path& path, std::size_t* skipped_lines) {
    std::unordered_map<std::string, AnnotationRecord> cache;
    if (skipped_lines) *skipped_lines = 0;
    std::ifstream in(path);
    if (!in) return cache;  // no cache yet
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto record = AnnotationRecord::from_json(nlohmann::json::parse(line));
            cache[record.cache_key] = std::move(record);
        } catch (const std::exception&) {
            if (skipped_lines) ++*skipped_lines;
            std::cerr << "warning: skipping unparseable cache line " << lineno
                      << " in " << path.string() << "\n";
        }
    }
    return cache;
}

std::string extract_fenced_essay(std::string_view user_prompt) {
    auto open = user_prompt.find(kFence);
    if (open == std::string_view::npos) return {};
    auto close = user_prompt.rfind(kFence);
    if (close <= open + 2) return {};
    return std::string(user_prompt.substr(open + 3, close - open - 3));
}

MockChatTransport::MockChatTransport(Responder responder)
    : responder_(std::move(responder)) {}

std::unique_ptr<MockChatTransport> MockChatTransport::fixed(std::string response) {
    return std::make_unique<MockChatTransport>(
        [response = std::move(response)](const ChatRequest&) { return response; });
}

std::unique_ptr<MockChatTransport> MockChatTransport::essay_hash(PromptScheme scheme) {
    return std::make_unique<MockChatTransport>([scheme](const ChatRequest& req) {
        std::uint64_t h = fnv1a64(extract_fenced_essay(req.user));
        auto score_at = [h](int i) {
            // values on a 0.01 grid in [1, 7]
            return 1.0 + static_cast<double>(splitmix64(h + static_cast<std::uint64_t>(i)) % 601) / 100.0;
        };
        if (scheme == PromptScheme::plain) return fmt_double(score_at(0));
        std::string out;
        for (int i = 0; i < 6; ++i) {
            if (i) out += ", ";
            out += fmt_double(score_at(i));
        }
        return out;
    });
}

TransportReply MockChatTransport::complete(const ChatRequest& request) {
    int now = in_flight_.fetch_add(1) + 1;
    int seen = max_in_flight_seen_.load();
    while (now > seen && !max_in_flight_seen_.compare_exchange_weak(seen, now)) {
    }
    calls_.fetch_add(1);
    if (latency_ms_ > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));

    TransportReply reply;
    if (fail_remaining_.fetch_sub(1) > 0) {
        reply.error = "scripted failure";
    } else {
        fail_remaining_.store(0);
        reply.ok = true;
        reply.content = responder_(request);
    }
    in_flight_.fetch_sub(1);
    return reply;
}

namespace {

struct SampleOutcome {
    std::optional<AnnotationRecord> record;
    std::optional<AnnotateFailure> failure;
    bool from_cache = false;
};

}  // namespace

AnnotateResult annotate_batch(const Dataset& dataset, const LLMConfig& cfg,
                              PromptScheme scheme,
                              const std::filesystem::path& cache_path,
                              ChatTransport& transport) {
    auto cache = load_annotation_cache(cache_path);

    std::ofstream cache_out;
    if (!cache_path.empty()) {
        if (auto dir = cache_path.parent_path(); !dir.empty())
            std::filesystem::create_directories(dir);
        cache_out.open(cache_path, std::ios::app);
        if (!cache_out) throw IoError("cannot append to cache " + cache_path.string());
    }

    const std::size_t n = dataset.samples.size();
    std::vector<SampleOutcome> outcomes(n);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> transport_calls{0};
    std::mutex cache_mutex;

    auto backoff_for = [&cfg](int attempt) {
        const auto& schedule = cfg.retry.backoff_ms;
        if (schedule.empty()) return 0;
        auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt) - 1,
                                         schedule.size() - 1);
        return schedule[idx];
    };

    auto process = [&](std::size_t i) {
        const Sample& sample = dataset.samples[i];
        SampleOutcome& slot = outcomes[i];
        const std::string key = annotation_cache_key(cfg, scheme, sample.essay);

        if (auto it = cache.find(key); it != cache.end()) {
            AnnotationRecord record = it->second;
            record.sample_id = sample.id;  // cache may have been built elsewhere
            slot.record = std::move(record);
            slot.from_cache = true;
            return;
        }

        PromptPair prompt;
        try {
            prompt = build_prompt(scheme, sample.essay);
        } catch (const Error& e) {
            slot.failure = AnnotateFailure{sample.id, e.what(), 0};
            return;
        }
        if (prompt.essay_escaped)
            std::cerr << "warning: sample " << sample.id
                      << ": triple backticks in essay replaced with single\n";

        int attempts = 0;
        int parse_attempts = 0;
        std::string last_error;
        while (true) {
            ++attempts;
            transport_calls.fetch_add(1);
            TransportReply reply = transport.complete({prompt.system, prompt.user});
            if (!reply.ok) {
                last_error = "endpoint: " + reply.error;
                if (attempts >= cfg.retry.max_attempts) break;
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(backoff_for(attempts)));
                continue;
            }
            try {
                ParsedResponse parsed = parse_response(reply.content, scheme);
                AnnotationRecord record;
                record.sample_id = sample.id;
                record.scheme = scheme;
                record.model = cfg.model;
                record.subscales = parsed.subscales;
                record.score = parsed.score;
                record.raw_response = reply.content;
                record.cache_key = key;
                record.attempts = attempts;
                if (cache_out.is_open()) {
                    std::lock_guard lock(cache_mutex);
                    cache_out << record.to_json().dump() << '\n';
                    cache_out.flush();
                }
                slot.record = std::move(record);
                return;
            } catch (const ParseError& e) {
                last_error = std::string("parse: ") + e.what();
                ++parse_attempts;
                // one automatic re-ask; a second bad response surfaces
                if (parse_attempts > 1 || attempts >= cfg.retry.max_attempts) break;
            }
        }
        slot.failure = AnnotateFailure{sample.id, last_error, attempts};
    };

    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
            process(i);
    };

    const auto thread_count =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), n);
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(thread_count);
        for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    AnnotateResult result;
    result.dataset = dataset;
    result.transport_calls = transport_calls.load();
    for (std::size_t i = 0; i < n; ++i) {
        auto& slot = outcomes[i];
        if (slot.record) {
            result.dataset.samples[i].llm_label = slot.record->score;
            if (slot.from_cache) ++result.cache_hits;
            result.records.push_back(std::move(*slot.record));
        } else if (slot.failure) {
            result.failures.push_back(std::move(*slot.failure));
        }
    }
    return result;
}

}  // namespace labq
