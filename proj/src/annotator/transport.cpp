#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "labq/annotator.hpp"

namespace labq {

namespace {

// "https://api.example.com/v1" -> {"https://api.example.com", "/v1"}
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    auto path_start = base_url.find('/', scheme_end == std::string::npos
                                             ? 0
                                             : scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace

TransportReply HttpChatTransport::complete(const ChatRequest& request) {
    TransportReply reply;

    auto [origin, prefix] = split_base_url(cfg_.base_url);
    httplib::Client client(origin);
    client.set_connection_timeout(cfg_.timeout_s, 0);
    client.set_read_timeout(cfg_.timeout_s, 0);
    client.set_write_timeout(cfg_.timeout_s, 0);

    httplib::Headers headers;
    if (!cfg_.api_key_env.empty())
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);

    nlohmann::json body{
        {"model", cfg_.model},
        {"messages",
         {{{"role", "system"}, {"content", request.system}},
          {{"role", "user"}, {"content", request.user}}}},
        {"temperature", cfg_.temperature},
        {"top_p", cfg_.top_p}};

    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
        reply.error = "request failed: " + httplib::to_string(res.error());
        return reply;
    }
    if (res->status != 200) {
        reply.error = "http " + std::to_string(res->status) + ": " +
                      res->body.substr(0, 200);
        return reply;
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        reply.content = j.at("choices").at(0).at("message").at("content")
                            .get<std::string>();
        reply.ok = true;
    } catch (const std::exception& e) {
        reply.error = std::string("malformed response body: ") + e.what();
    }
    return reply;
}

}  // namespace labq
