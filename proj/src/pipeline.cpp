#include "cyberally/pipeline.hpp"

#include "cyberally/error.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <fstream>
#include <future>
#include <thread>

namespace cyberally {

using nlohmann::json;

namespace {

constexpr const char* kCardLog = "cards.ndjson";
constexpr const char* kDecisionLog = "decisions.ndjson";
constexpr const char* kFeedbackLog = "feedback.ndjson";

Decision decision_from_json(const json& j) {
    Decision d;
    d.alert_id = j.at("alert_id").get<std::string>();
    d.verdict = parse_verdict(j.at("verdict").get<std::string>());
    d.analyst = j.value("analyst", "");
    if (auto ts = parse_iso8601(j.value("at", ""))) {
        d.at = *ts;
    }
    if (auto t = j.find("ticket_id"); t != j.end() && t->is_string()) {
        d.ticket_id = t->get<std::string>();
    }
    return d;
}

Feedback feedback_from_json(const json& j) {
    Feedback f;
    f.alert_id = j.at("alert_id").get<std::string>();
    f.rating = j.at("rating").get<int>();
    if (auto c = j.find("comment"); c != j.end() && c->is_string()) {
        f.comment = c->get<std::string>();
    }
    f.analyst = j.value("analyst", "");
    if (auto ts = parse_iso8601(j.value("at", ""))) {
        f.at = *ts;
    }
    return f;
}

std::vector<json> read_log(const std::filesystem::path& path) {
    std::vector<json> out;
    if (!std::filesystem::exists(path)) {
        return out;
    }
    for (const auto& line : read_record_lines(path)) {
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            // A torn final line from a crash mid-append is skipped.
            spdlog::warn("skipping unreadable record in {}", path.string());
        }
    }
    return out;
}

} // namespace

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Ingested: return "Ingested";
        case Stage::Deduplicated: return "Deduplicated";
        case Stage::ClassifiedBenign: return "ClassifiedBenign";
        case Stage::ClassifiedSuspicious: return "ClassifiedSuspicious";
        case Stage::CardReady: return "CardReady";
        case Stage::TicketCreated: return "TicketCreated";
        case Stage::FeedbackRecorded: return "FeedbackRecorded";
        case Stage::Failed: return "Failed";
    }
    return "Failed";
}

json to_json(const PipelineEvent& event) {
    return {{"sequence", event.sequence},
            {"stage", to_string(event.stage)},
            {"alert_id", event.alert_id},
            {"payload", event.payload},
            {"at", format_iso8601(event.at)}};
}

PipelineEvent EventBus::publish(Stage stage, std::string alert_id, json payload) {
    PipelineEvent event;
    {
        std::lock_guard lock(mutex_);
        event.sequence = history_.size() + 1;
        event.stage = stage;
        event.alert_id = std::move(alert_id);
        event.payload = std::move(payload);
        event.at = now_utc();
        history_.push_back(event);
    }
    changed_.notify_all();
    return event;
}

std::vector<PipelineEvent> EventBus::since(std::uint64_t after) const {
    std::lock_guard lock(mutex_);
    if (after >= history_.size()) {
        return {};
    }
    return {history_.begin() + static_cast<std::ptrdiff_t>(after), history_.end()};
}

std::vector<PipelineEvent> EventBus::wait_since(std::uint64_t after,
                                                std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    changed_.wait_for(lock, timeout, [&] { return closed_ || history_.size() > after; });
    if (after >= history_.size()) {
        return {};
    }
    return {history_.begin() + static_cast<std::ptrdiff_t>(after), history_.end()};
}

std::uint64_t EventBus::last_sequence() const {
    std::lock_guard lock(mutex_);
    return history_.size();
}

void EventBus::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    changed_.notify_all();
}

bool EventBus::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::string_view to_string(Verdict verdict) {
    return verdict == Verdict::Approve ? "approve" : "dismiss";
}

Verdict parse_verdict(std::string_view text) {
    if (text == "approve" || text == "Approve") return Verdict::Approve;
    if (text == "dismiss" || text == "Dismiss") return Verdict::Dismiss;
    throw Error(ErrorCode::MalformedRecord, "verdict must be 'approve' or 'dismiss'");
}

json to_json(const Decision& d) {
    json j = {{"alert_id", d.alert_id},
              {"verdict", to_string(d.verdict)},
              {"analyst", d.analyst},
              {"at", format_iso8601(d.at)}};
    j["ticket_id"] = d.ticket_id ? json(*d.ticket_id) : json(nullptr);
    return j;
}

json to_json(const Feedback& f) {
    json j = {{"alert_id", f.alert_id},
              {"rating", f.rating},
              {"analyst", f.analyst},
              {"at", format_iso8601(f.at)}};
    j["comment"] = f.comment ? json(*f.comment) : json(nullptr);
    return j;
}

RunReport& RunReport::operator+=(const RunReport& o) {
    ingested += o.ingested;
    duplicates += o.duplicates;
    benign += o.benign;
    suspicious += o.suspicious;
    carded += o.carded;
    failed += o.failed;
    return *this;
}

json to_json(const RunReport& r) {
    return {{"ingested", r.ingested}, {"duplicates", r.duplicates}, {"benign", r.benign},
            {"suspicious", r.suspicious}, {"carded", r.carded}, {"failed", r.failed},
            {"conserved", r.conserved()}};
}

Pipeline::Pipeline(std::shared_ptr<const Lexicon> lexicon, LayeredGraph graph,
                   std::vector<LabeledExample> training, std::shared_ptr<ChatProvider> provider,
                   std::shared_ptr<CaseBackend> cases, PipelineOptions options)
    : lexicon_(std::move(lexicon)),
      graph_(std::move(graph)),
      training_(std::move(training)),
      provider_(std::move(provider)),
      cases_(std::move(cases)),
      options_(std::move(options)),
      dedup_(options_.dedup) {
    options_.knn.validate();
    options_.rag.validate();
    options_.prompt_template.validate();
    if (options_.card_concurrency < 1) {
        throw Error(ErrorCode::InvalidConfig, "card_concurrency must be >= 1");
    }
    if (!options_.state_dir.empty()) {
        std::filesystem::create_directories(options_.state_dir);
        restore_state();
    }
}

void Pipeline::append_log(const char* name, const json& record) const {
    if (options_.state_dir.empty()) {
        return;
    }
    std::lock_guard lock(log_);
    std::ofstream out(options_.state_dir / name, std::ios::app);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot append to " + (options_.state_dir / name).string());
    }
    out << record.dump() << '\n';
    out.flush();
}

void Pipeline::restore_state() {
    for (const auto& record : read_log(options_.state_dir / kCardLog)) {
        try {
            Alert alert = parse_alert(record.at("alert"));
            SuggestionCard card = card_from_json(record.at("card"));
            if (!cards_.contains(alert.id)) {
                card_order_.push_back(alert.id);
            }
            graph_.write([&](LayeredGraph& g) {
                if (!g.find_node(alert_node_id(alert.id))) {
                    g.record_alert(alert, embed(*lexicon_, alert_text(alert)));
                }
            });
            std::string id = alert.id;
            cards_.insert_or_assign(id, std::make_pair(std::move(alert), std::move(card)));
        } catch (const std::exception& e) {
            spdlog::warn("skipping card record: {}", e.what());
        }
    }
    for (const auto& record : read_log(options_.state_dir / kDecisionLog)) {
        try {
            Decision d = decision_from_json(record);
            auto found = cards_.find(d.alert_id);
            if (d.ticket_id && found != cards_.end()) {
                const auto& [alert, card] = found->second;
                CaseTicket t{*d.ticket_id, alert.id, ticket_title(alert), ticket_body(card),
                             TicketStatus::Open, d.at};
                graph_.write([&](LayeredGraph& g) {
                    if (!g.find_node(ticket_node_id(t.ticket_id))) {
                        g.record_ticket(t);
                    }
                });
            }
            std::string id = d.alert_id;
            decisions_.insert_or_assign(id, std::move(d));
        } catch (const std::exception& e) {
            spdlog::warn("skipping decision record: {}", e.what());
        }
    }
    for (const auto& record : read_log(options_.state_dir / kFeedbackLog)) {
        try {
            feedback_.push_back(feedback_from_json(record));
        } catch (const std::exception& e) {
            spdlog::warn("skipping feedback record: {}", e.what());
        }
    }
}

PipelineEvent Pipeline::fail(const std::string& alert_id, std::string_view stage,
                             const std::string& message) {
    return events_.publish(Stage::Failed, alert_id, {{"stage", stage}, {"error", message}});
}

Pipeline::Ingested Pipeline::ingest(std::string_view raw) {
    Ingested out;
    out.tally.ingested = 1;

    std::lock_guard lock(writer_);
    totals_.ingested += 1;
    auto failed = [&](const std::string& id, std::string_view stage, const std::string& message) {
        out.events.push_back(fail(id, stage, message));
        out.tally.failed = 1;
        totals_.failed += 1;
        return std::move(out);
    };

    Alert alert;
    try {
        alert = parse_alert(raw);
    } catch (const Error& e) {
        return failed("", "parse", e.what());
    }
    out.events.push_back(events_.publish(Stage::Ingested, alert.id,
                                         {{"priority", alert.priority},
                                          {"rule_id", alert.rule_id},
                                          {"agent", alert.agent},
                                          {"title", alert.title},
                                          {"timestamp", format_iso8601(alert.timestamp)}}));

    EmbeddingVector vec = embed(*lexicon_, alert_text(alert));

    DedupVerdict verdict;
    try {
        verdict = dedup_.check_and_admit(alert, vec);
    } catch (const Error& e) {
        return failed(alert.id, "dedup", e.what());
    }
    if (verdict.is_duplicate) {
        out.events.push_back(events_.publish(
            Stage::Deduplicated, alert.id,
            {{"matched_id", *verdict.matched_id}, {"similarity", verdict.similarity.value_or(1.0)}}));
        out.tally.duplicates = 1;
        totals_.duplicates += 1;
        return out;
    }

    TriageLabel label = TriageLabel::Suspicious;
    std::string reason = "knn";
    if (vec.is_zero()) {
        reason = "zero_embedding";
    } else {
        try {
            auto train = training_.snapshot();
            label = classify(*train, options_.knn, vec, alert.timestamp);
        } catch (const Error& e) {
            return failed(alert.id, "classify", e.what());
        }
    }
    if (label == TriageLabel::Benign) {
        out.events.push_back(events_.publish(Stage::ClassifiedBenign, alert.id, {{"reason", reason}}));
        out.tally.benign = 1;
        totals_.benign += 1;
        return out;
    }
    out.events.push_back(events_.publish(Stage::ClassifiedSuspicious, alert.id,
                                         {{"reason", reason}, {"coverage", vec.coverage}}));
    out.tally.suspicious = 1;
    totals_.suspicious += 1;

    try {
        graph_.write([&](LayeredGraph& g) { return g.record_alert(alert, vec); });
    } catch (const Error& e) {
        return failed(alert.id, "graph", e.what());
    }
    out.job = CardJob{std::move(alert), std::move(vec), graph_.snapshot()};
    return out;
}

Pipeline::CardResult Pipeline::make_card(const CardJob& job) const {
    CardResult result;
    try {
        auto bundle = retrieve(*job.graph, options_.rag, job.alert, job.vec);
        result.card = generate_card(*provider_, options_.prompt_template, job.alert, bundle,
                                    options_.generation);
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    return result;
}

PipelineEvent Pipeline::publish_card(const CardJob& job, CardResult result, RunReport& tally) {
    std::lock_guard lock(writer_);
    if (!result.card) {
        tally.failed += 1;
        totals_.failed += 1;
        return fail(job.alert.id, "card", result.error);
    }
    json card_json = to_json(*result.card);
    try {
        append_log(kCardLog, {{"alert", to_json(job.alert)}, {"card", card_json}});
    } catch (const Error& e) {
        tally.failed += 1;
        totals_.failed += 1;
        return fail(job.alert.id, "card", e.what());
    }
    {
        std::lock_guard state(state_);
        if (!cards_.contains(job.alert.id)) {
            card_order_.push_back(job.alert.id);
        }
        cards_.insert_or_assign(job.alert.id, std::make_pair(job.alert, *result.card));
    }
    tally.carded += 1;
    totals_.carded += 1;
    return events_.publish(Stage::CardReady, job.alert.id, std::move(card_json));
}

std::vector<PipelineEvent> Pipeline::process_alert(std::string_view raw) {
    auto in = ingest(raw);
    if (in.job) {
        in.events.push_back(publish_card(*in.job, make_card(*in.job), in.tally));
    }
    return std::move(in.events);
}

RunReport Pipeline::process_batch(const std::vector<std::string>& raws) {
    RunReport tally;
    std::deque<std::pair<CardJob, std::future<CardResult>>> in_flight;
    auto drain_one = [&] {
        auto& [job, future] = in_flight.front();
        publish_card(job, future.get(), tally);
        in_flight.pop_front();
    };
    for (const auto& raw : raws) {
        auto in = ingest(raw);
        tally += in.tally;
        if (!in.job) {
            continue;
        }
        while (in_flight.size() >= static_cast<std::size_t>(options_.card_concurrency)) {
            drain_one();
        }
        auto job = std::move(*in.job);
        auto future = std::async(std::launch::async, [this, job] { return make_card(job); });
        in_flight.emplace_back(std::move(job), std::move(future));
    }
    while (!in_flight.empty()) {
        drain_one();
    }
    return tally;
}

RunReport Pipeline::replay(const std::filesystem::path& file, double delay_scale) {
    auto lines = read_record_lines(file);
    if (delay_scale <= 0.0) {
        return process_batch(lines);
    }
    RunReport tally;
    std::optional<Timestamp> previous;
    for (const auto& line : lines) {
        std::optional<Timestamp> ts;
        try {
            ts = parse_alert(std::string_view(line)).timestamp;
        } catch (const Error&) {
        }
        if (ts && previous && *ts > *previous) {
            auto gap = std::chrono::duration<double, std::milli>(*ts - *previous) * delay_scale;
            std::this_thread::sleep_for(gap);
        }
        if (ts) {
            previous = ts;
        }
        tally += process_batch({line});
    }
    return tally;
}

std::optional<CaseTicket> Pipeline::submit_decision(const Decision& decision) {
    std::lock_guard deciding(deciding_);
    Alert alert;
    SuggestionCard card;
    {
        std::lock_guard state(state_);
        auto found = cards_.find(decision.alert_id);
        if (found == cards_.end()) {
            throw Error(ErrorCode::UnknownAlert, decision.alert_id);
        }
        if (decisions_.contains(decision.alert_id)) {
            throw Error(ErrorCode::AlreadyDecided, decision.alert_id);
        }
        alert = found->second.first;
        card = found->second.second;
    }

    Decision recorded = decision;
    if (recorded.at == Timestamp{}) {
        recorded.at = now_utc();
    }
    std::optional<CaseTicket> ticket;
    if (decision.verdict == Verdict::Approve) {
        try {
            ticket = create_ticket(*cases_, card, alert, options_.cases);
            link_ticket(*cases_, ticket->ticket_id, card.context_digest.related_alerts, options_.cases);
            graph_.write([&](LayeredGraph& g) {
                if (!g.find_node(ticket_node_id(ticket->ticket_id))) {
                    g.record_ticket(*ticket);
                }
            });
        } catch (const Error& e) {
            fail(decision.alert_id, "ticket", e.what());
            throw;
        }
        recorded.ticket_id = ticket->ticket_id;
    }

    append_log(kDecisionLog, to_json(recorded));
    {
        std::lock_guard state(state_);
        decisions_.emplace(recorded.alert_id, recorded);
    }
    if (options_.learn_from_decisions) {
        auto vec = embed(*lexicon_, alert_text(alert));
        training_.append({alert.id, std::move(vec),
                          decision.verdict == Verdict::Approve ? TriageLabel::Suspicious
                                                               : TriageLabel::Benign,
                          alert.timestamp});
    }
    if (ticket) {
        json payload = to_json(*ticket);
        payload["linked_alerts"] = card.context_digest.related_alerts;
        events_.publish(Stage::TicketCreated, decision.alert_id, std::move(payload));
    }
    return ticket;
}

void Pipeline::submit_feedback(const Feedback& feedback) {
    if (feedback.rating < 1 || feedback.rating > 5) {
        throw Error(ErrorCode::RatingOutOfRange, std::to_string(feedback.rating));
    }
    Feedback recorded = feedback;
    if (recorded.at == Timestamp{}) {
        recorded.at = now_utc();
    }
    {
        std::lock_guard state(state_);
        if (!cards_.contains(feedback.alert_id)) {
            throw Error(ErrorCode::UnknownAlert, feedback.alert_id);
        }
    }
    append_log(kFeedbackLog, to_json(recorded));
    {
        std::lock_guard state(state_);
        feedback_.push_back(recorded);
    }
    events_.publish(Stage::FeedbackRecorded, feedback.alert_id, to_json(recorded));
}

std::optional<SuggestionCard> Pipeline::card(const std::string& alert_id) const {
    std::lock_guard state(state_);
    auto found = cards_.find(alert_id);
    if (found == cards_.end()) {
        return std::nullopt;
    }
    return found->second.second;
}

std::vector<SuggestionCard> Pipeline::cards() const {
    std::lock_guard state(state_);
    std::vector<SuggestionCard> out;
    out.reserve(card_order_.size());
    for (const auto& id : card_order_) {
        out.push_back(cards_.at(id).second);
    }
    return out;
}

std::optional<Decision> Pipeline::decision(const std::string& alert_id) const {
    std::lock_guard state(state_);
    auto found = decisions_.find(alert_id);
    if (found == decisions_.end()) {
        return std::nullopt;
    }
    return found->second;
}

std::vector<Feedback> Pipeline::feedback(const std::string& alert_id) const {
    std::lock_guard state(state_);
    std::vector<Feedback> out;
    for (const auto& f : feedback_) {
        if (f.alert_id == alert_id) {
            out.push_back(f);
        }
    }
    return out;
}

RunReport Pipeline::report() const {
    std::lock_guard lock(const_cast<std::mutex&>(writer_));
    return totals_;
}

std::unique_ptr<Pipeline> make_pipeline(const ServiceConfig& config) {
    config.validate();
    if (config.lexicon.empty() || config.static_graph.empty() || config.training_corpus.empty()) {
        throw Error(ErrorCode::InvalidConfig,
                    "paths.lexicon, paths.static_graph and paths.training_corpus are required");
    }
    auto lexicon = std::make_shared<const Lexicon>(load_lexicon(config.lexicon));
    auto graph = load_static(config.static_graph, lexicon);
    auto labeled = load_labeled_corpus(config.training_corpus);
    auto training = make_examples(*lexicon, labeled);

    PipelineOptions options;
    options.dedup = config.dedup;
    options.knn = config.knn;
    if (config.knn_auto_weight) {
        options.knn.malicious_weight = fit_weight(training);
    }
    options.rag = config.rag;
    options.generation.prompt.model = config.llm_model;
    options.generation.prompt.max_prompt_chars = config.llm_max_prompt_chars;
    options.generation.retries = config.llm_retries;
    options.generation.backoff = config.llm_backoff;
    options.cases.retries = config.cases_retries;
    options.cases.backoff = config.cases_backoff;
    options.card_concurrency = config.card_concurrency;
    options.state_dir = config.state_dir;

    std::shared_ptr<ChatProvider> provider;
    if (config.llm_provider == "http") {
        provider = std::make_shared<HttpChatProvider>(HttpChatProvider::from_environment(config.llm_base_url));
    } else {
        provider = std::make_shared<ScriptedProvider>(demo_reply);
    }
    std::shared_ptr<CaseBackend> cases;
    if (config.cases_backend == "http") {
        cases = std::make_shared<HttpCaseBackend>(HttpCaseBackend::from_environment(config.cases_base_url));
    } else {
        cases = std::make_shared<FakeCaseBackend>();
    }
    spdlog::info("pipeline ready: {} lexicon tokens, {} static nodes, {} training examples, weight {}",
                 lexicon->size(), graph.node_count(), training.size(), options.knn.malicious_weight);
    return std::make_unique<Pipeline>(std::move(lexicon), std::move(graph), std::move(training),
                                      std::move(provider), std::move(cases), std::move(options));
}

} // namespace cyberally
