#include "cyberally/case_management.hpp"

#include "cyberally/error.hpp"
#include "cyberally/hashing.hpp"
#include "cyberally/http_util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace cyberally {

using nlohmann::json;

namespace {

template <typename F>
auto with_retries(const CaseClientOptions& options, F&& call) {
    auto delay = options.backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            return call();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BackendUnavailable || attempt >= options.retries) {
                throw;
            }
        }
        if (delay.count() > 0) {
            std::this_thread::sleep_for(delay);
        }
        delay *= 2;
    }
}

void raise_for_status(const httplib::Result& result, const std::string& what) {
    if (!result) {
        throw Error(ErrorCode::BackendUnavailable, what + ": " + httplib::to_string(result.error()));
    }
    int status = result->status;
    if (status == 429 || status >= 500) {
        throw Error(ErrorCode::BackendUnavailable, what + ": HTTP " + std::to_string(status));
    }
    if (status == 404) {
        throw Error(ErrorCode::UnknownTicket, what + ": " + result->body);
    }
    if (status < 200 || status >= 300) {
        std::string message = result->body;
        try {
            message = json::parse(result->body).value("message", result->body);
        } catch (const json::exception&) {
        }
        throw Error(ErrorCode::BackendRejected, what + ": HTTP " + std::to_string(status) + " " + message);
    }
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::BackendRejected, std::string("unparseable backend reply: ") + e.what());
    }
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", score);
    return buf;
}

json error_body(const Error& e) {
    return {{"error", to_string(e.code())}, {"message", e.what()}};
}

} // namespace

HttpCaseBackend::HttpCaseBackend(HttpCaseOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "cases.base_url is empty");
    }
}

HttpCaseBackend HttpCaseBackend::from_environment(std::string base_url) {
    HttpCaseOptions options;
    options.base_url = std::move(base_url);
    if (const char* token = std::getenv("CYBERALLY_CASES_TOKEN")) {
        options.token = token;
    }
    return HttpCaseBackend(std::move(options));
}

namespace {

struct Connection {
    httplib::Client client;
    std::string prefix;
    httplib::Headers headers;
};

std::unique_ptr<Connection> connect(const HttpCaseOptions& options) {
    auto target = split_base_url(options.base_url);
    auto conn = std::make_unique<Connection>(Connection{httplib::Client(target.origin), target.path_prefix, {}});
    conn->client.set_connection_timeout(options.timeout);
    conn->client.set_read_timeout(options.timeout);
    if (!options.token.empty()) {
        conn->headers.emplace("Authorization", "Bearer " + options.token);
    }
    return conn;
}

} // namespace

CaseTicket HttpCaseBackend::create(const TicketPayload& payload) {
    auto conn = connect(options_);
    auto headers = conn->headers;
    headers.emplace("Idempotency-Key", payload.idempotency_key);
    json body = {{"title", payload.title},
                 {"body", payload.body},
                 {"alert_id", payload.alert_id},
                 {"idempotency_key", payload.idempotency_key}};
    auto result = conn->client.Post(conn->prefix + "/tickets", headers, body.dump(), "application/json");
    raise_for_status(result, "POST /tickets");
    auto reply = parse_body(result->body);
    CaseTicket ticket;
    try {
        ticket.ticket_id = reply.at("ticket_id").get<std::string>();
        ticket.status = parse_ticket_status(reply.value("status", "open"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendRejected, e.what());
    }
    ticket.alert_id = payload.alert_id;
    ticket.title = payload.title;
    ticket.body = payload.body;
    ticket.created_at = now_utc();
    if (auto created = reply.find("created_at"); created != reply.end() && created->is_string()) {
        if (auto ts = parse_iso8601(created->get<std::string>())) {
            ticket.created_at = *ts;
        }
    }
    return ticket;
}

LinkAck HttpCaseBackend::link(const std::string& ticket_id, const std::vector<std::string>& alert_ids) {
    auto conn = connect(options_);
    json body = {{"alert_ids", alert_ids}};
    auto result = conn->client.Post(conn->prefix + "/tickets/" + ticket_id + "/links", conn->headers,
                                    body.dump(), "application/json");
    raise_for_status(result, "POST /tickets/" + ticket_id + "/links");
    auto reply = parse_body(result->body);
    return {ticket_id, reply.value("linked", alert_ids.size())};
}

CaseTicket HttpCaseBackend::get(const std::string& ticket_id) {
    auto conn = connect(options_);
    auto result = conn->client.Get(conn->prefix + "/tickets/" + ticket_id, conn->headers);
    raise_for_status(result, "GET /tickets/" + ticket_id);
    return ticket_from_json(parse_body(result->body));
}

void FakeCaseBackend::maybe_fail_before() {
    if (unavailable_) {
        throw Error(ErrorCode::BackendUnavailable, "backend marked unavailable");
    }
    if (pending_rejections_ > 0) {
        --pending_rejections_;
        throw Error(ErrorCode::BackendRejected, "scripted rejection");
    }
    if (pending_failures_ > 0 && failure_mode_ == FailureMode::BeforeCommit) {
        --pending_failures_;
        throw Error(ErrorCode::BackendUnavailable, "scripted transient failure");
    }
}

bool FakeCaseBackend::consume_after_commit_failure() {
    if (pending_failures_ > 0 && failure_mode_ == FailureMode::AfterCommit) {
        --pending_failures_;
        return true;
    }
    return false;
}

CaseTicket FakeCaseBackend::create(const TicketPayload& payload) {
    std::lock_guard lock(mutex_);
    ++create_requests_;
    maybe_fail_before();
    if (payload.alert_id.empty()) {
        throw Error(ErrorCode::BackendRejected, "alert_id is required");
    }
    CaseTicket result;
    if (auto it = by_key_.find(payload.idempotency_key);
        !payload.idempotency_key.empty() && it != by_key_.end()) {
        for (const auto& t : tickets_) {
            if (t.ticket_id == it->second) {
                result = t;
            }
        }
    } else {
        char id[32];
        std::snprintf(id, sizeof id, "CASE-%04zu", tickets_.size() + 1);
        result = CaseTicket{id, payload.alert_id, payload.title, payload.body, TicketStatus::Open,
                            now_utc()};
        tickets_.push_back(result);
        if (!payload.idempotency_key.empty()) {
            by_key_[payload.idempotency_key] = result.ticket_id;
        }
    }
    if (consume_after_commit_failure()) {
        throw Error(ErrorCode::BackendUnavailable, "scripted failure after commit");
    }
    return result;
}

LinkAck FakeCaseBackend::link(const std::string& ticket_id, const std::vector<std::string>& alert_ids) {
    std::lock_guard lock(mutex_);
    maybe_fail_before();
    bool known = std::any_of(tickets_.begin(), tickets_.end(),
                             [&](const CaseTicket& t) { return t.ticket_id == ticket_id; });
    if (!known) {
        throw Error(ErrorCode::UnknownTicket, ticket_id);
    }
    auto& records = links_[ticket_id];
    std::size_t added = 0;
    for (const auto& a : alert_ids) {
        if (std::find(records.begin(), records.end(), a) == records.end()) {
            records.push_back(a);
            ++added;
        }
    }
    if (consume_after_commit_failure()) {
        throw Error(ErrorCode::BackendUnavailable, "scripted failure after commit");
    }
    return {ticket_id, added};
}

CaseTicket FakeCaseBackend::get(const std::string& ticket_id) {
    std::lock_guard lock(mutex_);
    for (const auto& t : tickets_) {
        if (t.ticket_id == ticket_id) {
            return t;
        }
    }
    throw Error(ErrorCode::UnknownTicket, ticket_id);
}

void FakeCaseBackend::fail_next(int count, FailureMode mode) {
    std::lock_guard lock(mutex_);
    pending_failures_ = count;
    failure_mode_ = mode;
}

void FakeCaseBackend::reject_next(int count) {
    std::lock_guard lock(mutex_);
    pending_rejections_ = count;
}

void FakeCaseBackend::set_unavailable(bool unavailable) {
    std::lock_guard lock(mutex_);
    unavailable_ = unavailable;
}

std::vector<CaseTicket> FakeCaseBackend::tickets() const {
    std::lock_guard lock(mutex_);
    return tickets_;
}

std::vector<std::string> FakeCaseBackend::links(const std::string& ticket_id) const {
    std::lock_guard lock(mutex_);
    auto it = links_.find(ticket_id);
    return it == links_.end() ? std::vector<std::string>{} : it->second;
}

std::size_t FakeCaseBackend::create_requests() const {
    std::lock_guard lock(mutex_);
    return create_requests_;
}

FakeCaseServer::FakeCaseServer(std::shared_ptr<FakeCaseBackend> backend)
    : backend_(std::move(backend)), server_(std::make_unique<httplib::Server>()) {
    auto respond_error = [](httplib::Response& res, const Error& e) {
        switch (e.code()) {
            case ErrorCode::BackendUnavailable: res.status = 503; break;
            case ErrorCode::UnknownTicket: res.status = 404; break;
            default: res.status = 422; break;
        }
        res.set_content(error_body(e).dump(), "application/json");
    };

    server_->Post("/tickets", [this, respond_error](const httplib::Request& req, httplib::Response& res) {
        try {
            auto body = json::parse(req.body);
            TicketPayload payload{body.value("title", ""), body.value("body", ""),
                                  body.value("alert_id", ""), body.value("idempotency_key", "")};
            if (payload.idempotency_key.empty() && req.has_header("Idempotency-Key")) {
                payload.idempotency_key = req.get_header_value("Idempotency-Key");
            }
            auto ticket = backend_->create(payload);
            res.status = 201;
            res.set_content(json{{"ticket_id", ticket.ticket_id},
                                 {"status", to_string(ticket.status)},
                                 {"created_at", format_iso8601(ticket.created_at)}}
                                .dump(),
                            "application/json");
        } catch (const Error& e) {
            respond_error(res, e);
        } catch (const json::exception& e) {
            respond_error(res, Error(ErrorCode::BackendRejected, e.what()));
        }
    });
    server_->Post(R"(/tickets/([^/]+)/links)",
                  [this, respond_error](const httplib::Request& req, httplib::Response& res) {
                      try {
                          auto body = json::parse(req.body);
                          auto ids = body.value("alert_ids", std::vector<std::string>{});
                          auto ack = backend_->link(req.matches[1], ids);
                          res.set_content(json{{"ticket_id", ack.ticket_id}, {"linked", ack.linked}}.dump(),
                                          "application/json");
                      } catch (const Error& e) {
                          respond_error(res, e);
                      } catch (const json::exception& e) {
                          respond_error(res, Error(ErrorCode::BackendRejected, e.what()));
                      }
                  });
    server_->Get(R"(/tickets/([^/]+))", [this, respond_error](const httplib::Request& req, httplib::Response& res) {
        try {
            auto ticket = backend_->get(req.matches[1]);
            auto j = to_json(ticket);
            j["links"] = backend_->links(ticket.ticket_id);
            res.set_content(j.dump(), "application/json");
        } catch (const Error& e) {
            respond_error(res, e);
        }
    });
}

FakeCaseServer::~FakeCaseServer() { stop(); }

int FakeCaseServer::start(int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port("127.0.0.1");
    } else if (server_->bind_to_port("127.0.0.1", port)) {
        port_ = port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::IoError, "fake case server could not bind");
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void FakeCaseServer::stop() {
    if (thread_.joinable()) {
        server_->stop();
        thread_.join();
    }
}

std::string FakeCaseServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::string ticket_title(const Alert& alert) {
    return "[P" + std::to_string(alert.priority) + "] " + alert.title;
}

std::string ticket_body(const SuggestionCard& card) {
    std::string out;
    out.append("SUMMARY\n").append(card.summary).append("\n\n");
    out.append("RECOMMENDED ACTIONS\n");
    if (card.actions.empty()) {
        out.append("(none)\n");
    }
    int n = 0;
    for (const auto& a : card.actions) {
        out.append(std::to_string(++n)).append(". ").append(a.description).append("\n");
        if (a.command) {
            std::istringstream cmd(*a.command);
            std::string line;
            while (std::getline(cmd, line)) {
                out.append("   $ ").append(line).append("\n");
            }
        }
    }
    out.append("\nREASONING\n").append(card.reasoning).append("\n\n");
    out.append("CONTEXT\n");
    if (card.context_digest.items.empty()) {
        out.append("(none)\n");
    }
    for (const auto& item : card.context_digest.items) {
        out.append("- ").append(item.layer).append(" ").append(item.node_id);
        out.append(" (score ").append(format_score(item.score)).append(")\n");
    }
    if (!card.context_digest.truncated.empty()) {
        out.append("Truncated:");
        for (const auto& id : card.context_digest.truncated) out.append(" ").append(id);
        out.append("\n");
    }
    if (!card.context_digest.related_alerts.empty()) {
        out.append("Related alerts:");
        for (const auto& id : card.context_digest.related_alerts) out.append(" ").append(id);
        out.append("\n");
    }
    return out;
}

std::vector<std::string> parse_ticket_actions(const std::string& body) {
    std::vector<std::string> out;
    std::istringstream in(body);
    std::string line;
    bool inside = false;
    while (std::getline(in, line)) {
        if (!inside) {
            inside = line == "RECOMMENDED ACTIONS";
            continue;
        }
        if (line == "REASONING") {
            break;
        }
        std::size_t digits = 0;
        while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
            ++digits;
        }
        if (digits > 0 && line.compare(digits, 2, ". ") == 0) {
            out.push_back(line.substr(digits + 2));
        }
    }
    return out;
}

std::string idempotency_key(const SuggestionCard& card) {
    json content = to_json(card);
    content.erase("provider_meta");
    return sha256_hex(card.alert_id + '\x1f' + content.dump());
}

CaseTicket create_ticket(CaseBackend& backend, const SuggestionCard& card, const Alert& alert,
                         const CaseClientOptions& options) {
    if (card.alert_id != alert.id) {
        throw Error(ErrorCode::BundleMismatch, "card for " + card.alert_id + " used with alert " + alert.id);
    }
    TicketPayload payload{ticket_title(alert), ticket_body(card), alert.id, idempotency_key(card)};
    return with_retries(options, [&] { return backend.create(payload); });
}

LinkAck link_ticket(CaseBackend& backend, const std::string& ticket_id,
                    const std::vector<std::string>& related_alert_ids, const CaseClientOptions& options) {
    return with_retries(options, [&] { return backend.link(ticket_id, related_alert_ids); });
}

} // namespace cyberally
