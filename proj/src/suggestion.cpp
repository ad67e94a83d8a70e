#include "cyberally/suggestion.hpp"

#include "cyberally/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <thread>

namespace cyberally {

using nlohmann::json;

namespace {

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string join_block(const std::vector<std::string>& lines, std::size_t begin, std::size_t end,
                       const std::string& first) {
    std::string out = first;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty() || !lines[i].empty()) {
            if (!out.empty()) out.push_back('\n');
            out.append(lines[i]);
        }
    }
    return std::string(trim(out));
}

// If `line` is a section heading, returns the marker index and any text that
// follows the heading on the same line.
std::optional<std::pair<int, std::string>> match_heading(const PromptTemplate& tmpl,
                                                         const std::string& line) {
    std::string_view s(line);
    while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == ' ')) {
        s.remove_prefix(1);
    }
    std::string upper = to_upper(s);
    for (int i = 0; i < 3; ++i) {
        const auto& marker = tmpl.markers[static_cast<std::size_t>(i)];
        if (upper.compare(0, marker.size(), marker) != 0) {
            continue;
        }
        std::string_view rest = s.substr(marker.size());
        while (!rest.empty() && (rest.front() == '*' || rest.front() == ':')) {
            rest.remove_prefix(1);
        }
        if (!rest.empty() && !std::isspace(static_cast<unsigned char>(rest.front()))) {
            continue; // e.g. "REASONINGS" or "ALERT SUMMARYX"
        }
        auto tail = trim(rest);
        while (!tail.empty() && tail.back() == '*') tail.remove_suffix(1);
        return std::make_pair(i, std::string(trim(tail)));
    }
    return std::nullopt;
}

std::vector<ActionItem> parse_actions(const std::vector<std::string>& lines, std::size_t begin,
                                      std::size_t end, const std::string& first) {
    std::vector<ActionItem> items;
    auto add_command = [&](std::string_view cmd) {
        if (items.empty()) {
            items.push_back({std::string(cmd), std::nullopt});
        }
        auto& current = items.back().command;
        if (current) {
            current->append("\n").append(cmd);
        } else {
            current = std::string(cmd);
        }
    };
    auto handle = [&](const std::string& raw, bool& in_fence) {
        auto line = trim(raw);
        if (line.rfind("```", 0) == 0) {
            in_fence = !in_fence;
            return;
        }
        if (in_fence) {
            if (!line.empty()) {
                add_command(line.rfind("$ ", 0) == 0 ? trim(line.substr(2)) : line);
            }
            return;
        }
        if (line.rfind("- ", 0) == 0) {
            items.push_back({std::string(trim(line.substr(2))), std::nullopt});
        } else if (line.rfind("$ ", 0) == 0) {
            add_command(trim(line.substr(2)));
        } else if (!line.empty() && !items.empty() && !items.back().command) {
            items.back().description.append(" ").append(line);
        }
    };
    bool in_fence = false;
    if (!first.empty()) {
        handle(first, in_fence);
    }
    for (std::size_t i = begin; i < end; ++i) {
        handle(lines[i], in_fence);
    }
    return items;
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", score);
    return buf;
}

void append_context(std::string& out, const char* heading, const char* tag,
                    const std::vector<const RetrievedItem*>& items) {
    out.append(heading).append("\n");
    if (items.empty()) {
        out.append("(none)\n");
        return;
    }
    int n = 0;
    for (const auto* item : items) {
        out.append("[").append(tag).append(std::to_string(++n)).append("] ");
        out.append(to_string(item->node.kind)).append(" ").append(item->node.label);
        out.append(" (").append(item->node.id).append(", score ").append(format_score(item->score));
        out.append(")\n");
        out.append(item->excerpt);
        if (!item->excerpt.empty() && item->excerpt.back() != '\n') {
            out.push_back('\n');
        }
    }
}

std::string render_user_message(const PromptTemplate& tmpl, const Alert& alert,
                                const std::vector<const RetrievedItem*>& statics,
                                const std::vector<const RetrievedItem*>& dynamics) {
    std::string out;
    out.append("ALERT\n");
    out.append("id: ").append(alert.id).append("\n");
    out.append("timestamp: ").append(format_iso8601(alert.timestamp)).append("\n");
    out.append("priority: ").append(std::to_string(alert.priority)).append("\n");
    out.append("rule: ").append(alert.rule_id).append("\n");
    out.append("agent: ").append(alert.agent).append("\n");
    out.append("title: ").append(alert.title).append("\n");
    out.append("full_log: ").append(alert.full_log).append("\n\n");
    append_context(out, "STATIC CONTEXT", "S", statics);
    out.append("\n");
    append_context(out, "DYNAMIC CONTEXT", "D", dynamics);
    out.append("\nOUTPUT FORMAT\n");
    out.append("Reply with exactly three sections, each introduced by its heading on a line of its own:\n");
    for (const auto& m : tmpl.markers) {
        out.append(m).append("\n");
    }
    out.append("Under ").append(tmpl.actions_marker());
    out.append(" write one action per line starting with \"- \"; put any shell command on the "
               "next line starting with \"$ \".\n");
    return out;
}

json usage_to_json(const TokenUsage& u) {
    json j = json::object();
    if (u.prompt_tokens) j["prompt_tokens"] = *u.prompt_tokens;
    if (u.completion_tokens) j["completion_tokens"] = *u.completion_tokens;
    if (u.total_tokens) j["total_tokens"] = *u.total_tokens;
    return j;
}

TokenUsage usage_from_json(const json& j) {
    TokenUsage u;
    if (!j.is_object()) return u;
    if (j.contains("prompt_tokens")) u.prompt_tokens = j["prompt_tokens"].get<long long>();
    if (j.contains("completion_tokens")) u.completion_tokens = j["completion_tokens"].get<long long>();
    if (j.contains("total_tokens")) u.total_tokens = j["total_tokens"].get<long long>();
    return u;
}

} // namespace

PromptTemplate PromptTemplate::standard() {
    PromptTemplate t;
    t.system_preamble =
        "You are a cyber-defense assistant supporting a Blue Team during a live exercise. "
        "You receive one filtered SIEM alert together with context retrieved from a static "
        "knowledge graph (previous exercises, infrastructure, attack techniques) and a dynamic "
        "knowledge graph (the current event's alerts and tickets). Answer in three sections "
        "headed ALERT SUMMARY, RECOMMENDED ACTIONS and REASONING. The summary gives contextual "
        "insight into the alert, including connections to prior alerts or similar incidents. "
        "The actions are concrete mitigations, with shell commands where useful. The reasoning "
        "explains why each action is suggested, citing the retrieved context.";
    return t;
}

void PromptTemplate::validate() const {
    for (std::size_t i = 0; i < markers.size(); ++i) {
        if (markers[i].empty() || markers[i] != to_upper(markers[i])) {
            throw Error(ErrorCode::InvalidConfig, "section markers must be non-empty upper case");
        }
        for (std::size_t j = i + 1; j < markers.size(); ++j) {
            if (markers[i] == markers[j]) {
                throw Error(ErrorCode::InvalidConfig, "section markers must be distinct");
            }
        }
        if (system_preamble.find(markers[i]) == std::string::npos) {
            throw Error(ErrorCode::InvalidConfig, "preamble must mention " + markers[i]);
        }
    }
}

AssembledPrompt assemble_prompt(const PromptTemplate& tmpl, const Alert& alert,
                                const ContextBundle& bundle, const PromptOptions& options) {
    if (bundle.alert_id != alert.id) {
        throw Error(ErrorCode::BundleMismatch, bundle.alert_id + " != " + alert.id);
    }
    std::vector<const RetrievedItem*> statics;
    std::vector<const RetrievedItem*> dynamics;
    for (const auto& i : bundle.static_items) statics.push_back(&i);
    for (const auto& i : bundle.dynamic_items) dynamics.push_back(&i);

    AssembledPrompt out;
    std::string user = render_user_message(tmpl, alert, statics, dynamics);
    while (tmpl.system_preamble.size() + user.size() > options.max_prompt_chars &&
           !(statics.empty() && dynamics.empty())) {
        // Drop the lowest-scoring item across both layers; on equal scores the
        // dynamic one (later in the prompt) goes first.
        bool from_static = !statics.empty() &&
                           (dynamics.empty() || statics.back()->score < dynamics.back()->score);
        auto& victims = from_static ? statics : dynamics;
        out.truncated.push_back(victims.back()->node.id);
        victims.pop_back();
        user = render_user_message(tmpl, alert, statics, dynamics);
    }

    for (const auto* i : statics) out.included.push_back({i->node.id, "static", i->score});
    for (const auto* i : dynamics) out.included.push_back({i->node.id, "dynamic", i->score});

    out.request.model = options.model;
    out.request.temperature = options.temperature;
    out.request.messages = {{"system", tmpl.system_preamble}, {"user", std::move(user)}};
    return out;
}

ProviderRequest build_prompt(const PromptTemplate& tmpl, const Alert& alert,
                             const ContextBundle& bundle, const PromptOptions& options) {
    return assemble_prompt(tmpl, alert, bundle, options).request;
}

ParsedReply parse_reply(const PromptTemplate& tmpl, const std::string& text) {
    auto lines = split_lines(text);
    struct Heading {
        std::size_t line = 0;
        std::string tail;
        bool found = false;
    };
    std::array<Heading, 3> headings;
    std::vector<std::size_t> heading_lines;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (auto m = match_heading(tmpl, lines[i])) {
            heading_lines.push_back(i);
            auto& h = headings[static_cast<std::size_t>(m->first)];
            if (!h.found) {
                h = {i, m->second, true};
            }
        }
    }

    ParsedReply reply;
    if (!std::all_of(headings.begin(), headings.end(), [](const Heading& h) { return h.found; })) {
        reply.degraded = true;
        reply.reasoning = std::string(trim(text));
        return reply;
    }
    auto section_end = [&](std::size_t start) {
        auto next = std::upper_bound(heading_lines.begin(), heading_lines.end(), start);
        return next == heading_lines.end() ? lines.size() : *next;
    };
    const auto& s = headings[0];
    const auto& a = headings[1];
    const auto& r = headings[2];
    reply.summary = join_block(lines, s.line + 1, section_end(s.line), s.tail);
    reply.actions = parse_actions(lines, a.line + 1, section_end(a.line), a.tail);
    reply.reasoning = join_block(lines, r.line + 1, section_end(r.line), r.tail);
    if (reply.summary.empty() || (reply.actions.empty() && reply.reasoning.empty())) {
        reply.degraded = true;
    }
    return reply;
}

std::string render_card_text(const PromptTemplate& tmpl, const SuggestionCard& card) {
    std::string out;
    out.append(tmpl.summary_marker()).append("\n").append(card.summary).append("\n\n");
    out.append(tmpl.actions_marker()).append("\n");
    for (const auto& action : card.actions) {
        out.append("- ").append(action.description).append("\n");
        if (action.command) {
            std::istringstream cmd(*action.command);
            std::string line;
            while (std::getline(cmd, line)) {
                out.append("$ ").append(line).append("\n");
            }
        }
    }
    out.append("\n").append(tmpl.reasoning_marker()).append("\n").append(card.reasoning).append("\n");
    return out;
}

SuggestionCard generate_card(ChatProvider& provider, const PromptTemplate& tmpl, const Alert& alert,
                             const ContextBundle& bundle, const GenerationOptions& options) {
    auto assembled = assemble_prompt(tmpl, alert, bundle, options.prompt);

    SuggestionCard card;
    card.alert_id = alert.id;
    card.context_digest.items = assembled.included;
    card.context_digest.truncated = assembled.truncated;
    card.context_digest.related_alerts = bundle.related_alerts;
    card.context_digest.retrieval_skipped = bundle.skipped;
    card.provider_meta.model = assembled.request.model;

    const auto started = std::chrono::steady_clock::now();
    std::optional<ProviderResponse> response;
    auto delay = options.backoff;
    for (int attempt = 0;; ++attempt) {
        card.provider_meta.attempts = attempt + 1;
        try {
            response = provider.complete(assembled.request);
            break;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ProviderUnavailable || attempt >= options.retries) {
                throw;
            }
        }
        if (delay.count() > 0) {
            std::this_thread::sleep_for(delay);
        }
        delay *= 2;
    }
    card.provider_meta.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - started)
                                        .count();
    card.provider_meta.finish_reason = response->finish_reason;
    card.provider_meta.usage = response->usage;

    // "length" still carries usable (if truncated) text; anything else is a refusal.
    const auto& finish = response->finish_reason;
    if (!finish.empty() && finish != "stop" && finish != "length") {
        throw Error(ErrorCode::ProviderRefusal, "finish_reason=" + finish);
    }

    auto parsed = parse_reply(tmpl, response->content);
    card.summary = std::move(parsed.summary);
    card.actions = std::move(parsed.actions);
    card.reasoning = std::move(parsed.reasoning);
    card.degraded = parsed.degraded;
    if (card.summary.empty()) {
        card.summary = "Unparsed model reply for: " + alert.title;
    }
    return card;
}

json to_json(const SuggestionCard& card) {
    json actions = json::array();
    for (const auto& a : card.actions) {
        json j = {{"description", a.description}};
        j["command"] = a.command ? json(*a.command) : json(nullptr);
        actions.push_back(std::move(j));
    }
    json items = json::array();
    for (const auto& d : card.context_digest.items) {
        items.push_back({{"node_id", d.node_id}, {"layer", d.layer}, {"score", d.score}});
    }
    return {{"alert_id", card.alert_id},
            {"summary", card.summary},
            {"actions", std::move(actions)},
            {"reasoning", card.reasoning},
            {"degraded", card.degraded},
            {"context_digest",
             {{"items", std::move(items)},
              {"truncated", card.context_digest.truncated},
              {"related_alerts", card.context_digest.related_alerts},
              {"retrieval_skipped", card.context_digest.retrieval_skipped}}},
            {"provider_meta",
             {{"model", card.provider_meta.model},
              {"latency_ms", card.provider_meta.latency_ms},
              {"attempts", card.provider_meta.attempts},
              {"finish_reason", card.provider_meta.finish_reason},
              {"usage", usage_to_json(card.provider_meta.usage)}}}};
}

SuggestionCard card_from_json(const json& j) {
    try {
        SuggestionCard card;
        card.alert_id = j.at("alert_id").get<std::string>();
        card.summary = j.value("summary", "");
        card.reasoning = j.value("reasoning", "");
        card.degraded = j.value("degraded", false);
        for (const auto& a : j.value("actions", json::array())) {
            ActionItem item{a.at("description").get<std::string>(), std::nullopt};
            if (auto c = a.find("command"); c != a.end() && c->is_string()) {
                item.command = c->get<std::string>();
            }
            card.actions.push_back(std::move(item));
        }
        if (auto d = j.find("context_digest"); d != j.end()) {
            for (const auto& i : d->value("items", json::array())) {
                card.context_digest.items.push_back({i.at("node_id").get<std::string>(),
                                                     i.value("layer", ""), i.value("score", 0.0)});
            }
            card.context_digest.truncated = d->value("truncated", std::vector<std::string>{});
            card.context_digest.related_alerts = d->value("related_alerts", std::vector<std::string>{});
            card.context_digest.retrieval_skipped = d->value("retrieval_skipped", false);
        }
        if (auto m = j.find("provider_meta"); m != j.end()) {
            card.provider_meta.model = m->value("model", "");
            card.provider_meta.latency_ms = m->value("latency_ms", 0LL);
            card.provider_meta.attempts = m->value("attempts", 0);
            card.provider_meta.finish_reason = m->value("finish_reason", "");
            card.provider_meta.usage = usage_from_json(m->value("usage", json::object()));
        }
        return card;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, e.what());
    }
}

} // namespace cyberally
