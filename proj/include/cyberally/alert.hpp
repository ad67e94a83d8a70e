#pragma once

#include "cyberally/time.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cyberally {

inline constexpr int kMinPriority = 0;
inline constexpr int kMaxPriority = 15;

struct Alert {
    std::string id;
    Timestamp timestamp{};
    int priority = 0;
    std::string rule_id;
    std::string title;
    std::string full_log;
    std::string agent;

    bool operator==(const Alert&) const = default;
};

enum class TriageLabel { Benign, Suspicious };

std::string_view to_string(TriageLabel label);
// Accepts "benign" / "suspicious" in any case; throws MalformedRecord otherwise.
TriageLabel parse_label(std::string_view text);

/// Parses one newline-delimited alert record (Wazuh-style nested fields:
/// `rule.level`, `rule.description`, `agent.name`, ...). A missing id is
/// replaced by a content hash so that replaying the same record twice
/// yields the same id.
Alert parse_alert(std::string_view raw);
Alert parse_alert(const nlohmann::json& record);

/// Labeled-corpus record: the alert fields plus `label`.
std::pair<Alert, TriageLabel> parse_labeled_alert(std::string_view raw);

nlohmann::json to_json(const Alert& alert);
nlohmann::json to_json(const Alert& alert, TriageLabel label);

// Single-line wire record (no trailing newline).
std::string to_wire(const Alert& alert);

std::string content_id(Timestamp timestamp, std::string_view rule_id, std::string_view agent,
                       std::string_view title);

/// Canonical text fed to the embedder: title, a single space, full_log.
/// An empty full_log yields the title alone.
std::string alert_text(const Alert& alert);

// Non-blank lines of a newline-delimited record file.
std::vector<std::string> read_record_lines(const std::filesystem::path& path);
std::vector<std::pair<Alert, TriageLabel>> load_labeled_corpus(const std::filesystem::path& path);

} // namespace cyberally
