#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/provider.hpp"
#include "cyberally/retrieval.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace cyberally {

struct PromptTemplate {
    std::string system_preamble;
    std::array<std::string, 3> markers{"ALERT SUMMARY", "RECOMMENDED ACTIONS", "REASONING"};

    const std::string& summary_marker() const { return markers[0]; }
    const std::string& actions_marker() const { return markers[1]; }
    const std::string& reasoning_marker() const { return markers[2]; }

    static PromptTemplate standard();
    void validate() const;
};

struct ActionItem {
    std::string description;
    std::optional<std::string> command;

    bool operator==(const ActionItem&) const = default;
};

struct DigestEntry {
    std::string node_id;
    std::string layer;
    double score = 0.0;

    bool operator==(const DigestEntry&) const = default;
};

// Which context the card was generated from.
struct ContextDigest {
    std::vector<DigestEntry> items;          // items that made it into the prompt
    std::vector<std::string> truncated;      // node ids dropped to fit the size bound
    std::vector<std::string> related_alerts;
    bool retrieval_skipped = false;

    bool operator==(const ContextDigest&) const = default;
};

struct ProviderMeta {
    std::string model;
    long long latency_ms = 0;
    int attempts = 0;
    std::string finish_reason;
    TokenUsage usage;
};

struct SuggestionCard {
    std::string alert_id;
    std::string summary;
    std::vector<ActionItem> actions;
    std::string reasoning;
    ContextDigest context_digest;
    ProviderMeta provider_meta;
    bool degraded = false;
};

nlohmann::json to_json(const SuggestionCard& card);
SuggestionCard card_from_json(const nlohmann::json& j);

struct PromptOptions {
    std::string model = "gpt-4o";
    double temperature = 0.0;
    std::size_t max_prompt_chars = 8000;
};

struct AssembledPrompt {
    ProviderRequest request;
    std::vector<DigestEntry> included;
    std::vector<std::string> truncated;
};

/// Builds the request and, when the rendered prompt exceeds the size bound,
/// drops context items lowest score first until it fits.
AssembledPrompt assemble_prompt(const PromptTemplate& tmpl, const Alert& alert,
                                const ContextBundle& bundle, const PromptOptions& options = {});

/// [system: preamble, user: alert block + STATIC CONTEXT + DYNAMIC CONTEXT +
/// output instructions]. Byte-identical for identical inputs.
ProviderRequest build_prompt(const PromptTemplate& tmpl, const Alert& alert,
                             const ContextBundle& bundle, const PromptOptions& options = {});

struct ParsedReply {
    std::string summary;
    std::vector<ActionItem> actions;
    std::string reasoning;
    bool degraded = false;
};

/// Splits a model reply on the three section headings (case-insensitive, at
/// line start). Inside the actions section, `- ` lines start an item and
/// `$ ` lines or fenced blocks supply its command. If any heading is missing
/// the whole text lands in `reasoning` and the reply is marked degraded.
ParsedReply parse_reply(const PromptTemplate& tmpl, const std::string& text);

// Inverse of parse_reply for well-formed cards.
std::string render_card_text(const PromptTemplate& tmpl, const SuggestionCard& card);

struct GenerationOptions {
    PromptOptions prompt;
    int retries = 2;
    std::chrono::milliseconds backoff{1000}; // doubled after every failed attempt
};

SuggestionCard generate_card(ChatProvider& provider, const PromptTemplate& tmpl, const Alert& alert,
                             const ContextBundle& bundle, const GenerationOptions& options = {});

} // namespace cyberally
