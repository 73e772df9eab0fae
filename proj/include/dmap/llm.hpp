#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dmap/error.hpp"
#include "dmap/text.hpp"

namespace dmap::llm {

struct Message {
    std::string role;
    std::string content;
    bool operator==(const Message&) const = default;
};

struct Attachment {
    std::string element_id;
    std::filesystem::path path;
    // Text stand-in for backends that cannot take images.
    std::string description;
};

/// A rendered agent call. `template_id` and `vars` travel with the messages so
/// mock backends can respond from structured inputs.
struct ChatRequest {
    std::string template_id;
    std::map<std::string, std::string> vars;
    std::vector<Message> messages;
    std::vector<Attachment> attachments;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
    virtual bool supports_images() const { return false; }
};

// ---------------------------------------------------------------------------
// Retry

inline bool is_retryable_status(int status) {
    return status == 0 || status == 408 || status == 429 || status >= 500;
}

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{8000};

    /// Delay before retry number `retry` (1-based). Monotone non-decreasing.
    std::chrono::milliseconds delay(int retry) const {
        double d = static_cast<double>(base_delay.count());
        for (int i = 1; i < retry; ++i) d *= multiplier;
        auto ms = static_cast<long long>(std::min(d, static_cast<double>(max_delay.count())));
        return std::chrono::milliseconds(ms);
    }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Decorator that retries transport, rate-limit, and 5xx failures with
/// exponential backoff. Non-retryable errors propagate immediately.
class RetryingBackend : public ChatBackend {
public:
    RetryingBackend(std::shared_ptr<ChatBackend> inner, RetryPolicy policy, Sleeper sleep = real_sleeper())
        : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleep)) {}

    std::string chat(const ChatRequest& request) override {
        for (int retry = 0;; ++retry) {
            try {
                return inner_->chat(request);
            } catch (const BackendError& e) {
                if (!e.retryable() || retry >= policy_.max_retries) {
                    if (retry == 0) throw;
                    throw BackendError(e.status(), false,
                                       "backend failed after " + std::to_string(retry) +
                                           " retries: " + e.what());
                }
                auto d = policy_.delay(retry + 1);
                {
                    std::lock_guard lock(mu_);
                    delays_.push_back(d);
                }
                sleep_(d);
            }
        }
    }

    std::string name() const override { return inner_->name(); }
    bool supports_images() const override { return inner_->supports_images(); }

    std::vector<std::chrono::milliseconds> delays() const {
        std::lock_guard lock(mu_);
        return delays_;
    }

private:
    std::shared_ptr<ChatBackend> inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
    mutable std::mutex mu_;
    std::vector<std::chrono::milliseconds> delays_;
};

// ---------------------------------------------------------------------------
// Mock backend

using Responder = std::function<std::string(const ChatRequest&)>;

struct MockResponse {
    enum class Kind { text, fail, call } kind = Kind::text;
    std::string body;
    int status = 0;
    Responder fn;

    static MockResponse text(std::string s) { return {Kind::text, std::move(s), 0, {}}; }
    static MockResponse fail(int status) { return {Kind::fail, {}, status, {}}; }
    static MockResponse call(Responder f) { return {Kind::call, {}, 0, std::move(f)}; }
};

struct ScriptEntry {
    // Template id to match; "*" matches any.
    std::string template_id;
    MockResponse response;
    // Repeating entries are never consumed.
    bool repeat = false;
};

struct MockScript {
    std::vector<ScriptEntry> entries;

    MockScript& then(std::string id, std::string response) {
        entries.push_back({std::move(id), MockResponse::text(std::move(response)), false});
        return *this;
    }
    MockScript& always(std::string id, std::string response) {
        entries.push_back({std::move(id), MockResponse::text(std::move(response)), true});
        return *this;
    }
    MockScript& fail(std::string id, int status) {
        entries.push_back({std::move(id), MockResponse::fail(status), false});
        return *this;
    }
    MockScript& respond(std::string id, Responder f, bool repeat = true) {
        entries.push_back({std::move(id), MockResponse::call(std::move(f)), repeat});
        return *this;
    }
};

class ScriptExhausted : public Error {
public:
    using Error::Error;
};

/// Echoes the content of the last user message.
inline std::string echo_rule(const ChatRequest& r) {
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it)
        if (it->role == "user") return it->content;
    return {};
}

/// Deterministic in-process backend. A request takes the first unconsumed
/// script entry for its template id; ids with no entries fall through to the
/// default rule (echo unless replaced). Running out of entries for an id that
/// has some is an error.
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(MockScript script = {}, Responder fallback = echo_rule)
        : script_(std::move(script)), consumed_(script_.entries.size(), false),
          fallback_(std::move(fallback)) {}

    std::string chat(const ChatRequest& request) override {
        MockResponse response;
        {
            std::lock_guard lock(mu_);
            calls_.push_back(request);
            bool scripted = false;
            bool found = false;
            for (std::size_t i = 0; i < script_.entries.size(); ++i) {
                const auto& e = script_.entries[i];
                if (e.template_id != "*" && e.template_id != request.template_id) continue;
                scripted = true;
                if (consumed_[i]) continue;
                if (!e.repeat) consumed_[i] = true;
                response = e.response;
                found = true;
                break;
            }
            if (!found) {
                if (scripted)
                    throw ScriptExhausted("mock script exhausted for template '" + request.template_id + "'");
                response = MockResponse::call(fallback_);
            }
        }
        switch (response.kind) {
            case MockResponse::Kind::text: return response.body;
            case MockResponse::Kind::fail:
                throw BackendError(response.status, is_retryable_status(response.status),
                                   "mock failure status " + std::to_string(response.status));
            case MockResponse::Kind::call: return response.fn(request);
        }
        return {};
    }

    std::string name() const override { return "mock"; }

    std::vector<ChatRequest> calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

    std::size_t call_count(std::string_view template_id) const {
        std::lock_guard lock(mu_);
        return static_cast<std::size_t>(std::count_if(calls_.begin(), calls_.end(), [&](const ChatRequest& r) {
            return r.template_id == template_id;
        }));
    }

private:
    MockScript script_;
    std::vector<bool> consumed_;
    Responder fallback_;
    mutable std::mutex mu_;
    std::vector<ChatRequest> calls_;
};

// ---------------------------------------------------------------------------
// Response utilities

/// Every balanced `{...}` substring, in order of their opening brace. String
/// literals are honoured so braces inside quotes do not count.
inline std::vector<std::string_view> balanced_objects(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t from = 0;
    while (true) {
        auto open = text.find('{', from);
        if (open == std::string_view::npos) break;
        int depth = 0;
        bool in_string = false, escaped = false;
        std::size_t close = std::string_view::npos;
        for (std::size_t i = open; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                close = i;
                break;
            }
        }
        if (close == std::string_view::npos) {
            from = open + 1;
            continue;
        }
        out.push_back(text.substr(open, close - open + 1));
        from = open + 1;
    }
    return out;
}

/// Removes markdown code fences (```, ```json, ...) including the language tag
/// of opening fences.
inline std::string strip_code_fences(std::string_view text) {
    std::string out;
    bool opening = true;
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 3, "```") == 0) {
            i += 3;
            if (opening)
                while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
            opening = !opening;
            continue;
        }
        out.push_back(text[i++]);
    }
    return out;
}

/// The first balanced `{...}` block after fence stripping, if any.
inline std::optional<std::string> extract_json_block(std::string_view text) {
    auto stripped = strip_code_fences(text);
    auto blocks = balanced_objects(stripped);
    if (blocks.empty()) return std::nullopt;
    return std::string(blocks.front());
}

/// The first balanced block that parses as a JSON object.
inline std::optional<nlohmann::json> extract_json_object(std::string_view text) {
    auto stripped = strip_code_fences(text);
    for (auto block : balanced_objects(stripped)) {
        auto j = nlohmann::json::parse(block.begin(), block.end(), nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    return std::nullopt;
}

}  // namespace dmap::llm
