#include "cyberally/alert.hpp"

#include "cyberally/error.hpp"
#include "cyberally/hashing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cyberally {

using nlohmann::json;

namespace {

const json* find_path(const json& record, std::string_view dotted) {
    // Nested objects are the canonical form; flat dotted keys are accepted too.
    if (auto it = record.find(std::string(dotted)); it != record.end()) {
        return &*it;
    }
    const json* node = &record;
    std::size_t start = 0;
    while (start <= dotted.size()) {
        auto end = dotted.find('.', start);
        auto part = dotted.substr(start, end == std::string_view::npos ? std::string_view::npos
                                                                        : end - start);
        if (!node->is_object()) {
            return nullptr;
        }
        auto it = node->find(std::string(part));
        if (it == node->end()) {
            return nullptr;
        }
        node = &*it;
        if (end == std::string_view::npos) {
            return node;
        }
        start = end + 1;
    }
    return nullptr;
}

std::string scalar_string(const json& value, std::string_view field) {
    if (value.is_string()) {
        return value.get<std::string>();
    }
    if (value.is_number_integer()) {
        return std::to_string(value.get<long long>());
    }
    if (value.is_null()) {
        return {};
    }
    throw Error(ErrorCode::MalformedRecord, "field '" + std::string(field) + "' must be a string");
}

std::string optional_string(const json& record, std::string_view field) {
    const json* v = find_path(record, field);
    return v ? scalar_string(*v, field) : std::string{};
}

} // namespace

std::string_view to_string(TriageLabel label) {
    return label == TriageLabel::Benign ? "benign" : "suspicious";
}

TriageLabel parse_label(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "benign") {
        return TriageLabel::Benign;
    }
    if (lower == "suspicious") {
        return TriageLabel::Suspicious;
    }
    throw Error(ErrorCode::MalformedRecord, "unknown label '" + std::string(text) + "'");
}

std::string content_id(Timestamp timestamp, std::string_view rule_id, std::string_view agent,
                       std::string_view title) {
    std::string material = format_iso8601(timestamp);
    for (auto part : {rule_id, agent, title}) {
        material.push_back('\x1f');
        material.append(part);
    }
    return "a-" + sha256_hex(material).substr(0, 20);
}

Alert parse_alert(const json& record) {
    if (!record.is_object()) {
        throw Error(ErrorCode::MalformedRecord, "alert record must be an object");
    }
    Alert alert;

    const json* ts = find_path(record, "timestamp");
    if (!ts || ts->is_null()) {
        throw Error(ErrorCode::MissingField, "timestamp");
    }
    if (!ts->is_string()) {
        throw Error(ErrorCode::MalformedRecord, "timestamp must be an ISO-8601 string");
    }
    auto parsed = parse_iso8601(ts->get<std::string>());
    if (!parsed) {
        throw Error(ErrorCode::MalformedRecord, "unparseable timestamp '" + ts->get<std::string>() + "'");
    }
    alert.timestamp = *parsed;

    alert.title = optional_string(record, "rule.description");
    if (alert.title.empty()) {
        throw Error(ErrorCode::MissingField, "rule.description");
    }

    const json* level = find_path(record, "rule.level");
    if (!level || level->is_null()) {
        throw Error(ErrorCode::MissingField, "rule.level");
    }
    long long priority = 0;
    if (level->is_number_integer()) {
        priority = level->get<long long>();
    } else if (level->is_string()) {
        const auto& s = level->get_ref<const std::string&>();
        std::size_t used = 0;
        try {
            priority = std::stoll(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (s.empty() || used != s.size()) {
            throw Error(ErrorCode::MalformedRecord, "rule.level must be an integer");
        }
    } else {
        throw Error(ErrorCode::MalformedRecord, "rule.level must be an integer");
    }
    if (priority < kMinPriority || priority > kMaxPriority) {
        throw Error(ErrorCode::PriorityOutOfRange, std::to_string(priority));
    }
    alert.priority = static_cast<int>(priority);

    alert.rule_id = optional_string(record, "rule.id");
    alert.full_log = optional_string(record, "full_log");
    alert.agent = optional_string(record, "agent.name");
    alert.id = optional_string(record, "id");
    if (alert.id.empty()) {
        alert.id = content_id(alert.timestamp, alert.rule_id, alert.agent, alert.title);
    }
    return alert;
}

Alert parse_alert(std::string_view raw) {
    json record;
    try {
        record = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedRecord, e.what());
    }
    return parse_alert(record);
}

std::pair<Alert, TriageLabel> parse_labeled_alert(std::string_view raw) {
    json record;
    try {
        record = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedRecord, e.what());
    }
    Alert alert = parse_alert(record);
    auto it = record.find("label");
    if (it == record.end() || !it->is_string()) {
        throw Error(ErrorCode::MissingField, "label");
    }
    return {std::move(alert), parse_label(it->get<std::string>())};
}

json to_json(const Alert& alert) {
    json j;
    j["id"] = alert.id;
    j["timestamp"] = format_iso8601(alert.timestamp);
    j["rule"] = {{"id", alert.rule_id}, {"level", alert.priority}, {"description", alert.title}};
    j["full_log"] = alert.full_log;
    j["agent"] = {{"name", alert.agent}};
    return j;
}

json to_json(const Alert& alert, TriageLabel label) {
    json j = to_json(alert);
    j["label"] = to_string(label);
    return j;
}

std::string to_wire(const Alert& alert) { return to_json(alert).dump(); }

std::string alert_text(const Alert& alert) {
    if (alert.full_log.empty()) {
        return alert.title;
    }
    std::string text;
    text.reserve(alert.title.size() + 1 + alert.full_log.size());
    text.append(alert.title).append(" ").append(alert.full_log);
    return text;
}

std::vector<std::string> read_record_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") != std::string::npos) {
            lines.push_back(std::move(line));
        }
    }
    return lines;
}

std::vector<std::pair<Alert, TriageLabel>> load_labeled_corpus(const std::filesystem::path& path) {
    std::vector<std::pair<Alert, TriageLabel>> out;
    for (const auto& line : read_record_lines(path)) {
        out.push_back(parse_labeled_alert(line));
    }
    return out;
}

} // namespace cyberally
