#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dmap/bundle.hpp"
#include "dmap/embed.hpp"
#include "dmap/llm.hpp"

// HTTP backends: an OpenAI-compatible chat-completions client and a JSON
// embedding service client. Both are bounded by a process-wide semaphore.
namespace dmap::remote {

/// Caps in-flight requests across all remote backends.
inline std::counting_semaphore<64>& request_slots() {
    static std::counting_semaphore<64> slots(4);
    return slots;
}

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

/// Splits "http://host:8000/v1/" into origin and path prefix.
inline Endpoint parse_endpoint(std::string_view url) {
    auto scheme = url.find("://");
    if (scheme == std::string_view::npos) throw Error("endpoint must include a scheme: " + std::string(url));
    auto slash = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, slash));
    if (slash != std::string_view::npos) e.prefix = std::string(url.substr(slash));
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
}

namespace detail {

/// Posts JSON and returns the parsed response. Transport failures map to
/// status 0; every failure is a BackendError classified for retry.
inline nlohmann::json post_json(const Endpoint& ep, const std::string& path, const nlohmann::json& body,
                                const std::string& api_key, int timeout_s) {
    httplib::Client client(ep.origin);
    client.set_read_timeout(timeout_s, 0);
    client.set_write_timeout(timeout_s, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    struct Slot {
        Slot() { request_slots().acquire(); }
        ~Slot() { request_slots().release(); }
    };
    httplib::Result res = [&] {
        Slot slot;
        return client.Post(ep.prefix + path, headers, body.dump(), "application/json");
    }();

    if (!res) throw BackendError(0, true, "transport error: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw BackendError(res->status, llm::is_retryable_status(res->status),
                           "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw BackendError(res->status, false, "response is not JSON");
    return j;
}

inline std::string data_url(const fs::path& image) {
    auto ext = text::to_lower(image.extension().string());
    std::string mime = ext == ".jpg" || ext == ".jpeg" ? "image/jpeg" : "image/png";
    return "data:" + mime + ";base64," + httplib::detail::base64_encode(read_file(image));
}

}  // namespace detail

struct ChatConfig {
    std::string endpoint;
    std::string api_key;
    std::string model;
    bool vision = true;
    int timeout_s = 120;
};

/// OpenAI-compatible chat client with temperature 0. Attachments become
/// image_url parts on the last user message.
class ChatClient : public llm::ChatBackend {
public:
    explicit ChatClient(ChatConfig cfg) : cfg_(std::move(cfg)), ep_(parse_endpoint(cfg_.endpoint)) {}

    nlohmann::json request_body(const llm::ChatRequest& r) const {
        using nlohmann::json;
        json messages = json::array();
        for (std::size_t i = 0; i < r.messages.size(); ++i) {
            const auto& m = r.messages[i];
            const bool last = i + 1 == r.messages.size();
            if (last && cfg_.vision && !r.attachments.empty()) {
                json parts = json::array({{{"type", "text"}, {"text", m.content}}});
                for (const auto& a : r.attachments)
                    parts.push_back({{"type", "image_url"}, {"image_url", {{"url", detail::data_url(a.path)}}}});
                messages.push_back({{"role", m.role}, {"content", parts}});
            } else {
                messages.push_back({{"role", m.role}, {"content", m.content}});
            }
        }
        return {{"model", cfg_.model}, {"messages", messages}, {"temperature", 0}};
    }

    std::string chat(const llm::ChatRequest& r) override {
        auto j = detail::post_json(ep_, "/chat/completions", request_body(r), cfg_.api_key, cfg_.timeout_s);
        const auto* content = j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()
                                  ? &j["choices"][0]["message"]["content"]
                                  : nullptr;
        if (!content || !content->is_string()) throw BackendError(200, false, "response has no message content");
        return content->get<std::string>();
    }

    std::string name() const override { return cfg_.model.empty() ? "remote" : cfg_.model; }
    bool supports_images() const override { return cfg_.vision; }

private:
    ChatConfig cfg_;
    Endpoint ep_;
};

/// Multi-vector embedding service: POST {texts|queries|image_paths} to
/// `/embed` and read {"matrices": [[[...], ...], ...]}.
class EmbeddingClient : public EmbeddingBackend {
public:
    EmbeddingClient(std::string endpoint, std::string api_key, std::size_t dim, std::string name)
        : ep_(parse_endpoint(endpoint)), api_key_(std::move(api_key)), dim_(dim), name_(std::move(name)) {}

    std::vector<TokenMatrix> embed_texts(const std::vector<std::string>& texts) override {
        return call({{"model", name_}, {"texts", texts}}, texts.size());
    }
    std::vector<TokenMatrix> embed_queries(const std::vector<std::string>& queries) override {
        return call({{"model", name_}, {"queries", queries}}, queries.size());
    }
    std::vector<TokenMatrix> embed_images(const std::vector<fs::path>& images) override {
        std::vector<std::string> paths;
        for (const auto& p : images) paths.push_back(fs::absolute(p).string());
        return call({{"model", name_}, {"image_paths", paths}}, images.size());
    }
    std::size_t dim() const override { return dim_; }
    std::string name() const override { return name_; }

private:
    std::vector<TokenMatrix> call(const nlohmann::json& body, std::size_t expected) {
        auto j = detail::post_json(ep_, "/embed", body, api_key_, 120);
        if (!j.contains("matrices") || !j["matrices"].is_array() || j["matrices"].size() != expected)
            throw BackendError(200, false, "embedding response has wrong matrix count");
        std::vector<TokenMatrix> out;
        for (const auto& m : j["matrices"]) {
            auto rows = m.get<std::vector<std::vector<double>>>();
            if (rows.empty() || rows.front().size() != dim_)
                throw BackendError(200, false, "embedding response has wrong dimension");
            out.push_back(TokenMatrix::from_rows(rows));
        }
        return out;
    }

    Endpoint ep_;
    std::string api_key_;
    std::size_t dim_;
    std::string name_;
};

}  // namespace dmap::remote
