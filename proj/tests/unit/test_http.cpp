// Everything that talks HTTP lives here so only one test file pulls in httplib.

#include "pipeline_fixture.hpp"

#include "cyberally/provider.hpp"
#include "cyberally/service.hpp"

#include <httplib.h>

#include <atomic>

using namespace cyberally;
using nlohmann::json;
using testutil::code_of;

namespace {

struct LiveService {
    testutil::PipelineRig rig = testutil::make_rig();
    Service service{rig.pipeline};
    int port = service.start();
    httplib::Client client{"127.0.0.1", port};

    ~LiveService() { service.stop(); }

    httplib::Result post(const std::string& path, const std::string& body,
                         const char* type = "application/json") {
        return client.Post(path, body, type);
    }
};

struct SseFrame {
    std::uint64_t id = 0;
    std::string event;
    json data;
};

std::vector<SseFrame> parse_sse(const std::string& text) {
    std::vector<SseFrame> frames;
    std::size_t pos = 0;
    while (true) {
        auto end = text.find("\n\n", pos);
        if (end == std::string::npos) break;
        std::istringstream block(text.substr(pos, end - pos));
        pos = end + 2;
        SseFrame f;
        std::string line;
        bool any = false;
        while (std::getline(block, line)) {
            if (line.rfind("id: ", 0) == 0) f.id = std::stoull(line.substr(4)), any = true;
            else if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
            else if (line.rfind("data: ", 0) == 0) f.data = json::parse(line.substr(6));
        }
        if (any) frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace

TEST_SUITE("http") {

TEST_CASE("status mapping") {
    CHECK(http_status(ErrorCode::MalformedRecord) == 400);
    CHECK(http_status(ErrorCode::UnknownAlert) == 404);
    CHECK(http_status(ErrorCode::AlreadyDecided) == 409);
    CHECK(http_status(ErrorCode::RatingOutOfRange) == 422);
    CHECK(http_status(ErrorCode::BackendUnavailable) == 502);
}

TEST_CASE("alert, card, decision and feedback round trip over HTTP") {
    LiveService live;
    REQUIRE(live.client.Get("/health"));

    auto r = live.post("/alerts", testutil::demo_line("evt-000005"));
    REQUIRE(r);
    CHECK(r->status == 200);
    auto events = json::parse(r->body)["events"];
    REQUIRE(events.size() == 3);
    CHECK(events[2]["stage"] == "CardReady");

    auto card = live.client.Get("/cards/evt-000005");
    REQUIRE(card);
    CHECK(card->status == 200);
    CHECK(json::parse(card->body)["alert_id"] == "evt-000005");
    CHECK(live.client.Get("/cards/unknown")->status == 404);
    CHECK(json::parse(live.client.Get("/cards")->body).size() == 1);

    auto d = live.post("/decisions", R"({"alert_id":"evt-000005","verdict":"approve","analyst":"ana"})");
    REQUIRE(d);
    CHECK(d->status == 200);
    auto decided = json::parse(d->body);
    CHECK(decided["ticket"]["ticket_id"].is_string());
    CHECK(decided["decision"]["verdict"] == "approve");
    CHECK(live.post("/decisions", R"({"alert_id":"evt-000005","verdict":"dismiss"})")->status == 409);
    CHECK(live.post("/decisions", R"({"alert_id":"nope","verdict":"dismiss"})")->status == 404);
    CHECK(live.post("/decisions", R"({"alert_id":"evt-000005","verdict":"maybe"})")->status == 400);
    CHECK(live.client.Get("/decisions/evt-000005")->status == 200);

    CHECK(live.post("/feedback", R"({"alert_id":"evt-000005","rating":5,"comment":"good","analyst":"ana"})")->status == 200);
    CHECK(live.post("/feedback", R"({"alert_id":"evt-000005","rating":9})")->status == 422);
    auto fb = json::parse(live.client.Get("/feedback/evt-000005")->body);
    REQUIRE(fb.size() == 1);
    CHECK(fb[0]["comment"] == "good");
}

TEST_CASE("bad alert bodies are rejected") {
    LiveService live;
    auto r = live.post("/alerts", "{not json");
    REQUIRE(r);
    CHECK(r->status == 400);
    CHECK(live.post("/feedback", "[]")->status == 400);
}

TEST_CASE("batch ingest accepts arrays and newline-delimited records") {
    LiveService live;
    const auto& lines = testutil::demo_lines();
    json array = json::array();
    for (std::size_t i = 0; i < 10; ++i) array.push_back(json::parse(lines[i]));
    auto r = live.post("/alerts/batch", array.dump());
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["ingested"] == 10);

    std::string nd;
    for (std::size_t i = 10; i < 20; ++i) nd += lines[i] + "\n";
    auto s = live.post("/alerts/batch", nd, "application/x-ndjson");
    REQUIRE(s);
    CHECK(json::parse(s->body)["ingested"] == 10);
    auto report = json::parse(live.client.Get("/report")->body);
    CHECK(report["ingested"] == 20);
    CHECK(report["conserved"] == true);
}

TEST_CASE("event stream backlog and resume") {
    LiveService live;
    const auto& lines = testutil::demo_lines();
    for (std::size_t i = 0; i < 12; ++i) live.post("/alerts", lines[i]);

    auto all = live.client.Get("/events?once=1");
    REQUIRE(all);
    CHECK(all->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
    auto frames = parse_sse(all->body);
    REQUIRE(frames.size() == live.rig.pipeline->events().last_sequence());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].id == i + 1);
        CHECK(frames[i].data["sequence"] == i + 1);
        CHECK(frames[i].data["stage"] == frames[i].event);
    }

    // resume from the middle: nothing lost, nothing repeated
    auto half = frames[frames.size() / 2].id;
    auto rest = parse_sse(live.client.Get("/events?once=1&since=" + std::to_string(half))->body);
    REQUIRE(rest.size() == frames.size() - half);
    CHECK(rest.front().id == half + 1);
    httplib::Headers h{{"Last-Event-ID", std::to_string(half)}};
    CHECK(parse_sse(live.client.Get("/events?once=1", h)->body).size() == rest.size());
    CHECK(live.client.Get("/events?since=abc")->status == 400);
}

TEST_CASE("live stream delivers cards as they are produced") {
    LiveService live;
    std::string received;
    std::atomic<bool> stop{false};
    std::thread reader([&] {
        httplib::Client c("127.0.0.1", live.port);
        c.set_read_timeout(10, 0);
        c.Get("/events", [&](const char* data, std::size_t n) {
            received.append(data, n);
            return !stop.load() && parse_sse(received).size() < 6;
        });
    });
    live.post("/alerts", testutil::demo_line("evt-000005"));
    live.post("/alerts", testutil::demo_line("evt-000006"));
    reader.join();
    stop = true;
    auto frames = parse_sse(received);
    REQUIRE(frames.size() >= 6);
    CHECK(frames[2].event == "CardReady");
    CHECK(frames[5].event == "CardReady");
    CHECK(frames[5].data["alert_id"] == "evt-000006");
}

TEST_CASE("CORS preflight") {
    LiveService live;
    auto r = live.client.Options("/decisions");
    REQUIRE(r);
    CHECK(r->status == 204);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("HTTP chat provider against a stub endpoint") {
    httplib::Server stub;
    std::atomic<int> calls{0};
    std::string seen_auth;
    json seen_body;
    stub.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int n = ++calls;
        seen_auth = req.get_header_value("Authorization");
        seen_body = json::parse(req.body);
        if (n == 1) {
            res.status = 503;
            return;
        }
        std::string content = "ALERT SUMMARY\nok\nRECOMMENDED ACTIONS\n- act\nREASONING\nwhy\n";
        res.set_content(to_wire(ProviderResponse{content, "stop", {12, 3, 15}}).dump(), "application/json");
    });
    stub.Post("/refuse/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(to_wire(ProviderResponse{"", "content_filter", {}}).dump(), "application/json");
    });
    stub.Post("/forbidden/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("{\"error\":\"policy\"}", "application/json");
    });
    int port = stub.bind_to_any_port("127.0.0.1");
    std::thread t([&] { stub.listen_after_bind(); });
    stub.wait_until_ready();

    std::string base = "http://127.0.0.1:" + std::to_string(port);
    HttpChatProvider provider({base + "/v1", "secret", std::chrono::seconds(5)});
    CHECK(code_of([&] { provider.complete({{{"user", "hi"}}, "gpt-4o", 0.0}); }) == ErrorCode::ProviderUnavailable);

    ContextBundle bundle;
    bundle.alert_id = "e1";
    GenerationOptions opts;
    opts.backoff = std::chrono::milliseconds(1);
    auto card = generate_card(provider, PromptTemplate::standard(),
                              testutil::alert("e1", "sshd failed", testutil::at("2024-05-01T10:00:00Z")), bundle, opts);
    CHECK(card.summary == "ok");
    CHECK(card.provider_meta.usage.total_tokens == 15);
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_body["temperature"] == 0.0);
    CHECK(seen_body["model"] == "gpt-4o");

    HttpChatProvider refusing({base + "/refuse", "", std::chrono::seconds(5)});
    CHECK(refusing.complete({{{"user", "hi"}}, "m", 0.0}).finish_reason == "content_filter");
    CHECK(code_of([&] {
              generate_card(refusing, PromptTemplate::standard(),
                            testutil::alert("e1", "sshd failed", testutil::at("2024-05-01T10:00:00Z")), bundle, opts);
          }) == ErrorCode::ProviderRefusal);

    HttpChatProvider forbidden({base + "/forbidden", "", std::chrono::seconds(5)});
    CHECK(code_of([&] { forbidden.complete({{{"user", "hi"}}, "m", 0.0}); }) == ErrorCode::ProviderRefusal);

    HttpChatProvider nowhere({"http://127.0.0.1:1", "", std::chrono::seconds(1)});
    CHECK(code_of([&] { nowhere.complete({{{"user", "hi"}}, "m", 0.0}); }) == ErrorCode::ProviderUnavailable);

    stub.stop();
    t.join();
}

TEST_CASE("HTTP case backend against the fake case server") {
    auto fake = std::make_shared<FakeCaseBackend>();
    FakeCaseServer server(fake);
    server.start();
    HttpCaseBackend backend({server.base_url(), "", std::chrono::seconds(5)});

    SuggestionCard card;
    card.alert_id = "e1";
    card.summary = "s";
    card.actions = {{"Block it", std::nullopt}, {"Tell someone", std::nullopt}};
    card.reasoning = "r";
    auto alert = testutil::alert("e1", "sshd failed", testutil::at("2024-05-01T10:00:00Z"));
    CaseClientOptions opts{2, std::chrono::milliseconds(1)};

    fake->fail_next(1, FakeCaseBackend::FailureMode::AfterCommit);
    auto t = create_ticket(backend, card, alert, opts);
    CHECK(fake->tickets().size() == 1);
    CHECK(create_ticket(backend, card, alert, opts).ticket_id == t.ticket_id);
    CHECK(fake->tickets().size() == 1);

    auto got = backend.get(t.ticket_id);
    CHECK(parse_ticket_actions(got.body) == std::vector<std::string>{"Block it", "Tell someone"});
    CHECK(link_ticket(backend, t.ticket_id, {"e0", "e2"}, opts).linked == 2);
    CHECK(fake->links(t.ticket_id).size() == 2);
    CHECK(code_of([&] { link_ticket(backend, "CASE-9", {"e0"}, opts); }) == ErrorCode::UnknownTicket);
    CHECK(code_of([&] { backend.get("CASE-9"); }) == ErrorCode::UnknownTicket);

    fake->set_unavailable(true);
    CHECK(code_of([&] { create_ticket(backend, card, alert, opts); }) == ErrorCode::BackendUnavailable);
    fake->set_unavailable(false);
    fake->reject_next(1);
    card.alert_id = "e2";
    alert.id = "e2";
    CHECK(code_of([&] { create_ticket(backend, card, alert, opts); }) == ErrorCode::BackendRejected);
    server.stop();
}

}
