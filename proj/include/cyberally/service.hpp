#pragma once

#include "cyberally/error.hpp"
#include "cyberally/pipeline.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace cyberally {

/// HTTP status for a pipeline error: bad input 400, unknown ids 404,
/// AlreadyDecided 409, RatingOutOfRange 422, backend trouble 502.
int http_status(ErrorCode code);

/// The pipeline's HTTP surface.
///
///   POST /alerts              one alert record -> {events}
///   POST /alerts/batch        JSON array or newline-delimited records -> report
///   GET  /events              server-sent PipelineEvents; resumes after
///                             ?since=N or Last-Event-ID, ?once=1 returns the
///                             backlog and closes
///   GET  /cards, /cards/{id}
///   POST /decisions           {alert_id, verdict, analyst} -> {decision, ticket}
///   GET  /decisions/{id}
///   POST /feedback            {alert_id, rating, comment?, analyst}
///   GET  /feedback/{id}
///   GET  /report, /health
class Service {
public:
    explicit Service(std::shared_ptr<Pipeline> pipeline);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Listens on a background thread; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Blocks in the calling thread until stop() is called elsewhere.
    void run(const std::string& host, int port);
    void stop();

    std::string base_url() const;
    Pipeline& pipeline() { return *pipeline_; }

private:
    void install_routes();

    std::shared_ptr<Pipeline> pipeline_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;
};

} // namespace cyberally
