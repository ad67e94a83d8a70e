#include "cyberally/service.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <sstream>

namespace cyberally {

using nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownAlert:
        case ErrorCode::UnknownTicket:
        case ErrorCode::UnknownNode:
        case ErrorCode::UnknownAlertEvent:
            return 404;
        case ErrorCode::AlreadyDecided:
            return 409;
        case ErrorCode::RatingOutOfRange:
            return 422;
        case ErrorCode::BackendUnavailable:
        case ErrorCode::BackendRejected:
        case ErrorCode::ProviderUnavailable:
        case ErrorCode::ProviderRefusal:
            return 502;
        case ErrorCode::IoError:
            return 500;
        default:
            return 400;
    }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}});
}

void send_bad_request(httplib::Response& res, const std::string& message) {
    send_json(res, 400, {{"error", "MalformedRecord"}, {"message", message}});
}

// Wraps a handler so library errors become status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const json::exception& e) {
            send_bad_request(res, e.what());
        }
    };
}

std::vector<std::string> batch_records(const std::string& body) {
    std::vector<std::string> out;
    auto first = body.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && body[first] == '[') {
        for (const auto& item : json::parse(body)) {
            out.push_back(item.dump());
        }
        return out;
    }
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            out.push_back(line);
        }
    }
    return out;
}

std::string sse_frame(const PipelineEvent& event) {
    std::string out = "id: " + std::to_string(event.sequence) + "\n";
    out += "event: ";
    out += to_string(event.stage);
    out += "\ndata: " + to_json(event).dump() + "\n\n";
    return out;
}

std::uint64_t resume_point(const httplib::Request& req) {
    std::string raw;
    if (req.has_param("since")) {
        raw = req.get_param_value("since");
    } else if (req.has_header("Last-Event-ID")) {
        raw = req.get_header_value("Last-Event-ID");
    }
    if (raw.empty()) {
        return 0;
    }
    try {
        return std::stoull(raw);
    } catch (const std::exception&) {
        throw Error(ErrorCode::MalformedRecord, "bad resume sequence: " + raw);
    }
}

} // namespace

Service::Service(std::shared_ptr<Pipeline> pipeline)
    : pipeline_(std::move(pipeline)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
    server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
        res.status = 204;
    });

    server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });

    server_->Post("/alerts", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto events = pipeline_->process_alert(req.body);
        json out = json::array();
        for (const auto& e : events) out.push_back(to_json(e));
        bool rejected = events.size() == 1 && events.front().stage == Stage::Failed &&
                        events.front().payload.value("stage", "") == "parse";
        send_json(res, rejected ? 400 : 200, {{"events", out}});
    }));

    server_->Post("/alerts/batch", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto report = pipeline_->process_batch(batch_records(req.body));
        send_json(res, 200, to_json(report));
    }));

    server_->Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t after = 0;
        try {
            after = resume_point(req);
        } catch (const Error& e) {
            send_error(res, e);
            return;
        }
        bool once = req.has_param("once") && req.get_param_value("once") != "0";
        res.set_header("Cache-Control", "no-cache");
        auto cursor = std::make_shared<std::uint64_t>(after);
        res.set_chunked_content_provider(
            "text/event-stream", [this, cursor, once](std::size_t, httplib::DataSink& sink) {
                auto& bus = pipeline_->events();
                auto batch = once ? bus.since(*cursor) : bus.wait_since(*cursor, std::chrono::seconds(1));
                for (const auto& event : batch) {
                    auto frame = sse_frame(event);
                    if (!sink.write(frame.data(), frame.size())) {
                        return false;
                    }
                    *cursor = event.sequence;
                }
                if (once || bus.closed()) {
                    sink.done();
                    return true;
                }
                if (batch.empty()) {
                    static const std::string keepalive = ": keepalive\n\n";
                    if (!sink.write(keepalive.data(), keepalive.size())) {
                        return false;
                    }
                }
                return sink.is_writable();
            });
    });

    server_->Get("/cards", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& card : pipeline_->cards()) out.push_back(to_json(card));
        send_json(res, 200, out);
    });

    server_->Get(R"(/cards/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto card = pipeline_->card(req.matches[1]);
        if (!card) {
            send_error(res, Error(ErrorCode::UnknownAlert, req.matches[1]));
            return;
        }
        send_json(res, 200, to_json(*card));
    });

    server_->Post("/decisions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        Decision d;
        d.alert_id = body.at("alert_id").get<std::string>();
        d.verdict = parse_verdict(body.at("verdict").get<std::string>());
        d.analyst = body.value("analyst", "");
        auto ticket = pipeline_->submit_decision(d);
        auto recorded = pipeline_->decision(d.alert_id);
        send_json(res, 200,
                  {{"decision", recorded ? to_json(*recorded) : json(nullptr)},
                   {"ticket", ticket ? to_json(*ticket) : json(nullptr)}});
    }));

    server_->Get(R"(/decisions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto d = pipeline_->decision(req.matches[1]);
        if (!d) {
            send_error(res, Error(ErrorCode::UnknownAlert, req.matches[1]));
            return;
        }
        send_json(res, 200, to_json(*d));
    });

    server_->Post("/feedback", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        Feedback f;
        f.alert_id = body.at("alert_id").get<std::string>();
        f.rating = body.at("rating").get<int>();
        if (auto c = body.find("comment"); c != body.end() && c->is_string()) {
            f.comment = c->get<std::string>();
        }
        f.analyst = body.value("analyst", "");
        pipeline_->submit_feedback(f);
        send_json(res, 200, {{"status", "recorded"}});
    }));

    server_->Get(R"(/feedback/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        json out = json::array();
        for (const auto& f : pipeline_->feedback(req.matches[1])) out.push_back(to_json(f));
        send_json(res, 200, out);
    });

    server_->Get("/report", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, to_json(pipeline_->report()));
    });
}

int Service::start(const std::string& host, int port) {
    host_ = host;
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else if (server_->bind_to_port(host, port)) {
        port_ = port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void Service::run(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    spdlog::info("listening on http://{}:{}", host, port);
    if (!server_->listen(host, port)) {
        throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void Service::stop() {
    pipeline_->events().close();
    server_->stop();
    if (thread_.joinable()) {
        thread_.join();
    }
}

std::string Service::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

} // namespace cyberally
