#include "cyberally/ticket.hpp"

#include "cyberally/error.hpp"

#include <nlohmann/json.hpp>

#include <cctype>

namespace cyberally {

std::string_view to_string(TicketStatus status) {
    switch (status) {
        case TicketStatus::Open: return "open";
        case TicketStatus::InProgress: return "in_progress";
        case TicketStatus::Closed: return "closed";
    }
    return "open";
}

// Case and separators are ignored: "in_progress", "InProgress" and "in-progress" agree.
TicketStatus parse_ticket_status(std::string_view text) {
    std::string key;
    for (char ch : text) {
        if (ch == '_' || ch == '-' || ch == ' ') continue;
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    if (key == "open") return TicketStatus::Open;
    if (key == "inprogress") return TicketStatus::InProgress;
    if (key == "closed") return TicketStatus::Closed;
    throw Error(ErrorCode::MalformedRecord, "unknown ticket status '" + std::string(text) + "'");
}

nlohmann::json to_json(const CaseTicket& ticket) {
    return {{"ticket_id", ticket.ticket_id},
            {"alert_id", ticket.alert_id},
            {"title", ticket.title},
            {"body", ticket.body},
            {"status", to_string(ticket.status)},
            {"created_at", format_iso8601(ticket.created_at)}};
}

CaseTicket ticket_from_json(const nlohmann::json& j) {
    try {
        CaseTicket t;
        t.ticket_id = j.at("ticket_id").get<std::string>();
        t.alert_id = j.value("alert_id", "");
        t.title = j.value("title", "");
        t.body = j.value("body", "");
        t.status = parse_ticket_status(j.value("status", "open"));
        if (auto created = j.find("created_at"); created != j.end() && created->is_string()) {
            auto ts = parse_iso8601(created->get<std::string>());
            if (!ts) {
                throw Error(ErrorCode::MalformedRecord, "bad created_at");
            }
            t.created_at = *ts;
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, e.what());
    }
}

} // namespace cyberally
