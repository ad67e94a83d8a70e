#pragma once

#include "cyberally/time.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <string_view>

namespace cyberally {

enum class TicketStatus { Open, InProgress, Closed };

std::string_view to_string(TicketStatus status);
TicketStatus parse_ticket_status(std::string_view text);

struct CaseTicket {
    std::string ticket_id;
    std::string alert_id;
    std::string title;
    std::string body;
    TicketStatus status = TicketStatus::Open;
    Timestamp created_at{};

    bool operator==(const CaseTicket&) const = default;
};

nlohmann::json to_json(const CaseTicket& ticket);
CaseTicket ticket_from_json(const nlohmann::json& j);

} // namespace cyberally
