#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/suggestion.hpp"
#include "cyberally/ticket.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace cyberally {

struct TicketPayload {
    std::string title;
    std::string body;
    std::string alert_id;
    std::string idempotency_key;
};

struct LinkAck {
    std::string ticket_id;
    std::size_t linked = 0;
};

/// Case-management backend contract:
///   POST /tickets {title, body, alert_id, idempotency_key} -> {ticket_id, status}
///   POST /tickets/{id}/links {alert_ids[]}
///   GET  /tickets/{id}
/// Transient failures throw BackendUnavailable, refusals BackendRejected.
class CaseBackend {
public:
    virtual ~CaseBackend() = default;
    virtual CaseTicket create(const TicketPayload& payload) = 0;
    virtual LinkAck link(const std::string& ticket_id, const std::vector<std::string>& alert_ids) = 0;
    virtual CaseTicket get(const std::string& ticket_id) = 0;
};

struct HttpCaseOptions {
    std::string base_url;
    std::string token; // CYBERALLY_CASES_TOKEN
    std::chrono::seconds timeout{15};
};

class HttpCaseBackend final : public CaseBackend {
public:
    explicit HttpCaseBackend(HttpCaseOptions options);
    static HttpCaseBackend from_environment(std::string base_url);

    CaseTicket create(const TicketPayload& payload) override;
    LinkAck link(const std::string& ticket_id, const std::vector<std::string>& alert_ids) override;
    CaseTicket get(const std::string& ticket_id) override;

private:
    HttpCaseOptions options_;
};

/// In-process backend that honours idempotency keys. Failures can be
/// injected: `AfterCommit` stores the ticket and then reports the request as
/// failed, which is the case retries must not duplicate.
class FakeCaseBackend final : public CaseBackend {
public:
    enum class FailureMode { BeforeCommit, AfterCommit };

    CaseTicket create(const TicketPayload& payload) override;
    LinkAck link(const std::string& ticket_id, const std::vector<std::string>& alert_ids) override;
    CaseTicket get(const std::string& ticket_id) override;

    void fail_next(int count, FailureMode mode = FailureMode::BeforeCommit);
    void reject_next(int count);
    // Every request fails until cleared.
    void set_unavailable(bool unavailable);

    std::vector<CaseTicket> tickets() const;
    std::vector<std::string> links(const std::string& ticket_id) const;
    std::size_t create_requests() const;

private:
    void maybe_fail_before();
    bool consume_after_commit_failure();

    mutable std::mutex mutex_;
    std::vector<CaseTicket> tickets_;
    std::map<std::string, std::string> by_key_;
    std::map<std::string, std::vector<std::string>> links_;
    int pending_failures_ = 0;
    FailureMode failure_mode_ = FailureMode::BeforeCommit;
    int pending_rejections_ = 0;
    bool unavailable_ = false;
    std::size_t create_requests_ = 0;
};

/// Serves a FakeCaseBackend over the REST contract on 127.0.0.1. Injected
/// failures surface as HTTP 503, rejections as 422.
class FakeCaseServer {
public:
    explicit FakeCaseServer(std::shared_ptr<FakeCaseBackend> backend);
    ~FakeCaseServer();
    FakeCaseServer(const FakeCaseServer&) = delete;
    FakeCaseServer& operator=(const FakeCaseServer&) = delete;

    // Binds an ephemeral port when `port` is 0; returns the bound port.
    int start(int port = 0);
    void stop();
    std::string base_url() const;
    FakeCaseBackend& backend() { return *backend_; }

private:
    std::shared_ptr<FakeCaseBackend> backend_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

struct CaseClientOptions {
    int retries = 2;
    std::chrono::milliseconds backoff{500};
};

std::string ticket_title(const Alert& alert);
std::string ticket_body(const SuggestionCard& card);
// Action descriptions listed in a ticket body, in order.
std::vector<std::string> parse_ticket_actions(const std::string& body);
std::string idempotency_key(const SuggestionCard& card);

/// Creates (or, on a retried request, re-finds) the ticket for an approved
/// card.
CaseTicket create_ticket(CaseBackend& backend, const SuggestionCard& card, const Alert& alert,
                         const CaseClientOptions& options = {});

LinkAck link_ticket(CaseBackend& backend, const std::string& ticket_id,
                    const std::vector<std::string>& related_alert_ids,
                    const CaseClientOptions& options = {});

} // namespace cyberally
