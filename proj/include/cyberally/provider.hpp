#pragma once

#include "cyberally/error.hpp"

#include <nlohmann/json_fwd.hpp>

#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cyberally {

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ProviderRequest {
    std::vector<ChatMessage> messages;
    std::string model;
    double temperature = 0.0;

    bool operator==(const ProviderRequest&) const = default;
};

struct TokenUsage {
    std::optional<long long> prompt_tokens;
    std::optional<long long> completion_tokens;
    std::optional<long long> total_tokens;
};

struct ProviderResponse {
    std::string content;
    std::string finish_reason = "stop";
    TokenUsage usage;
};

// Wire body: {model, temperature, messages:[{role, content}]}
nlohmann::json to_wire(const ProviderRequest& request);
// Wire body: {choices:[{message:{content}, finish_reason}], usage}
ProviderResponse response_from_wire(const nlohmann::json& body);
nlohmann::json to_wire(const ProviderResponse& response);

/// Chat-completion backend. Implementations throw Error with
/// ProviderUnavailable for transport failures (retryable) and
/// ProviderRefusal when the endpoint answers but declines.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ProviderResponse complete(const ProviderRequest& request) = 0;
};

struct HttpProviderOptions {
    std::string base_url;       // e.g. https://api.example.com/v1
    std::string token;          // bearer token; empty sends no Authorization header
    std::chrono::seconds timeout{60};
};

/// POSTs the request to `{base_url}/chat/completions`.
class HttpChatProvider final : public ChatProvider {
public:
    explicit HttpChatProvider(HttpProviderOptions options);
    // Reads the bearer token from CYBERALLY_LLM_TOKEN.
    static HttpChatProvider from_environment(std::string base_url);

    ProviderResponse complete(const ProviderRequest& request) override;

private:
    HttpProviderOptions options_;
};

/// Deterministic in-process provider for tests and demos. Queued steps are
/// consumed first; afterwards the responder (if any) answers every request.
class ScriptedProvider final : public ChatProvider {
public:
    using Step = std::variant<ProviderResponse, ErrorCode>;
    using Responder = std::function<ProviderResponse(const ProviderRequest&)>;

    ScriptedProvider() = default;
    explicit ScriptedProvider(Responder responder) : responder_(std::move(responder)) {}

    // Responder that writes a well-formed three-section reply derived only
    // from the prompt contents.
    static ScriptedProvider demo();

    void push(ProviderResponse response);
    void push_reply(std::string content);
    void push_failure(ErrorCode code);

    ProviderResponse complete(const ProviderRequest& request) override;

    std::vector<ProviderRequest> requests() const;
    std::size_t call_count() const;

private:
    mutable std::mutex mutex_;
    std::deque<Step> steps_;
    Responder responder_;
    std::vector<ProviderRequest> requests_;
};

ProviderResponse demo_reply(const ProviderRequest& request);

} // namespace cyberally
