#include "cyberally/provider.hpp"

#include "cyberally/http_util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <sstream>

namespace cyberally {

using nlohmann::json;

namespace {

std::optional<long long> usage_field(const json& usage, const char* name) {
    if (auto it = usage.find(name); it != usage.end() && it->is_number_integer()) {
        return it->get<long long>();
    }
    return std::nullopt;
}

std::string line_value(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key, 0) == 0) {
            return line.substr(key.size());
        }
    }
    return {};
}

} // namespace

json to_wire(const ProviderRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return {{"model", request.model}, {"temperature", request.temperature}, {"messages", messages}};
}

ProviderResponse response_from_wire(const json& body) {
    try {
        const auto& choice = body.at("choices").at(0);
        ProviderResponse r;
        const auto& content = choice.at("message").at("content");
        r.content = content.is_null() ? std::string{} : content.get<std::string>();
        auto finish = choice.find("finish_reason");
        r.finish_reason = finish != choice.end() && finish->is_string() ? finish->get<std::string>()
                                                                         : std::string("stop");
        if (auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
            r.usage.prompt_tokens = usage_field(*usage, "prompt_tokens");
            r.usage.completion_tokens = usage_field(*usage, "completion_tokens");
            r.usage.total_tokens = usage_field(*usage, "total_tokens");
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed provider body: ") + e.what());
    }
}

json to_wire(const ProviderResponse& response) {
    json usage = json::object();
    if (response.usage.prompt_tokens) usage["prompt_tokens"] = *response.usage.prompt_tokens;
    if (response.usage.completion_tokens) usage["completion_tokens"] = *response.usage.completion_tokens;
    if (response.usage.total_tokens) usage["total_tokens"] = *response.usage.total_tokens;
    return {{"choices",
             json::array({{{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", response.content}}},
                           {"finish_reason", response.finish_reason}}})},
            {"usage", usage}};
}

HttpChatProvider::HttpChatProvider(HttpProviderOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "llm.base_url is empty");
    }
}

HttpChatProvider HttpChatProvider::from_environment(std::string base_url) {
    HttpProviderOptions options;
    options.base_url = std::move(base_url);
    if (const char* token = std::getenv("CYBERALLY_LLM_TOKEN")) {
        options.token = token;
    }
    return HttpChatProvider(std::move(options));
}

ProviderResponse HttpChatProvider::complete(const ProviderRequest& request) {
    auto target = split_base_url(options_.base_url);
    httplib::Client client(target.origin);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.token.empty()) {
        headers.emplace("Authorization", "Bearer " + options_.token);
    }
    auto result = client.Post(target.path_prefix + "/chat/completions", headers,
                              to_wire(request).dump(), "application/json");
    if (!result) {
        throw Error(ErrorCode::ProviderUnavailable, httplib::to_string(result.error()));
    }
    if (result->status == 429 || result->status >= 500) {
        throw Error(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(result->status));
    }
    if (result->status < 200 || result->status >= 300) {
        throw Error(ErrorCode::ProviderRefusal,
                    "HTTP " + std::to_string(result->status) + ": " + result->body);
    }
    json body;
    try {
        body = json::parse(result->body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("unparseable body: ") + e.what());
    }
    return response_from_wire(body);
}

ScriptedProvider ScriptedProvider::demo() { return ScriptedProvider(demo_reply); }

void ScriptedProvider::push(ProviderResponse response) {
    std::lock_guard lock(mutex_);
    steps_.emplace_back(std::move(response));
}

void ScriptedProvider::push_reply(std::string content) {
    ProviderResponse r;
    r.content = std::move(content);
    push(std::move(r));
}

void ScriptedProvider::push_failure(ErrorCode code) {
    std::lock_guard lock(mutex_);
    steps_.emplace_back(code);
}

ProviderResponse ScriptedProvider::complete(const ProviderRequest& request) {
    Responder responder;
    {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        if (!steps_.empty()) {
            Step step = std::move(steps_.front());
            steps_.pop_front();
            if (auto* code = std::get_if<ErrorCode>(&step)) {
                throw Error(*code, "scripted failure");
            }
            return std::get<ProviderResponse>(std::move(step));
        }
        responder = responder_;
    }
    if (!responder) {
        throw Error(ErrorCode::ProviderUnavailable, "script exhausted");
    }
    return responder(request);
}

std::vector<ProviderRequest> ScriptedProvider::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

std::size_t ScriptedProvider::call_count() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

ProviderResponse demo_reply(const ProviderRequest& request) {
    const std::string& user = request.messages.empty() ? std::string() : request.messages.back().content;
    auto title = line_value(user, "title: ");
    auto agent = line_value(user, "agent: ");
    auto priority = line_value(user, "priority: ");
    auto first_static = line_value(user, "[S1] ");
    auto first_dynamic = line_value(user, "[D1] ");
    if (agent.empty()) {
        agent = "the reporting host";
    }

    std::ostringstream out;
    out << "ALERT SUMMARY\n";
    out << "Priority " << priority << " alert \"" << title << "\" reported by " << agent << ".";
    if (!first_dynamic.empty()) {
        out << " It connects to live-event context " << first_dynamic << ".";
    }
    out << "\n\nRECOMMENDED ACTIONS\n";
    out << "- Review recent authentication and process activity on " << agent << "\n";
    out << "$ journalctl --since \"-30min\" --no-pager | tail -n 200\n";
    out << "- Capture current network connections on " << agent << " for the case record\n";
    out << "$ ss -tunap\n";
    out << "\nREASONING\n";
    if (!first_static.empty()) {
        out << "The closest prior knowledge is " << first_static
            << "; the actions collect evidence before any containment step.";
    } else {
        out << "No close prior knowledge was retrieved; the actions collect evidence first.";
    }
    out << "\n";

    ProviderResponse r;
    r.content = out.str();
    r.finish_reason = "stop";
    long long prompt_chars = 0;
    for (const auto& m : request.messages) {
        prompt_chars += static_cast<long long>(m.content.size());
    }
    r.usage.prompt_tokens = prompt_chars / 4;
    r.usage.completion_tokens = static_cast<long long>(r.content.size()) / 4;
    r.usage.total_tokens = *r.usage.prompt_tokens + *r.usage.completion_tokens;
    return r;
}

} // namespace cyberally
