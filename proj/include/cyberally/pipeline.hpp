#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/case_management.hpp"
#include "cyberally/classifier.hpp"
#include "cyberally/config.hpp"
#include "cyberally/dedup.hpp"
#include "cyberally/knowledge_graph.hpp"
#include "cyberally/provider.hpp"
#include "cyberally/retrieval.hpp"
#include "cyberally/suggestion.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cyberally {

enum class Stage {
    Ingested,
    Deduplicated,
    ClassifiedBenign,
    ClassifiedSuspicious,
    CardReady,
    TicketCreated,
    FeedbackRecorded,
    Failed,
};

std::string_view to_string(Stage stage);

struct PipelineEvent {
    std::uint64_t sequence = 0;
    Stage stage = Stage::Ingested;
    std::string alert_id;
    nlohmann::json payload;
    Timestamp at{};
};

nlohmann::json to_json(const PipelineEvent& event);

/// Ordered, replayable event log. Sequence numbers start at 1 and are
/// assigned at publish time, so they are strictly increasing.
class EventBus {
public:
    PipelineEvent publish(Stage stage, std::string alert_id, nlohmann::json payload);

    std::vector<PipelineEvent> since(std::uint64_t after) const;
    // Blocks until something newer than `after` exists, the bus closes, or the
    // timeout passes.
    std::vector<PipelineEvent> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;
    std::uint64_t last_sequence() const;
    void close();
    bool closed() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::vector<PipelineEvent> history_;
    bool closed_ = false;
};

enum class Verdict { Approve, Dismiss };
std::string_view to_string(Verdict verdict);
Verdict parse_verdict(std::string_view text);

struct Decision {
    std::string alert_id;
    Verdict verdict = Verdict::Dismiss;
    std::string analyst;
    Timestamp at{};
    std::optional<std::string> ticket_id;
};

struct Feedback {
    std::string alert_id;
    int rating = 0;
    std::optional<std::string> comment;
    std::string analyst;
    Timestamp at{};
};

nlohmann::json to_json(const Decision& decision);
nlohmann::json to_json(const Feedback& feedback);

struct RunReport {
    std::size_t ingested = 0;   // records received, parseable or not
    std::size_t duplicates = 0;
    std::size_t benign = 0;
    std::size_t suspicious = 0; // classified Suspicious (carded or failed afterwards)
    std::size_t carded = 0;
    std::size_t failed = 0;

    bool conserved() const { return ingested == duplicates + benign + carded + failed; }
    RunReport& operator+=(const RunReport& other);
    bool operator==(const RunReport&) const = default;
};

nlohmann::json to_json(const RunReport& report);

struct PipelineOptions {
    DedupConfig dedup;
    KnnConfig knn;
    RetrievalConfig rag;
    PromptTemplate prompt_template = PromptTemplate::standard();
    GenerationOptions generation;
    CaseClientOptions cases;
    int card_concurrency = 4;
    // Decision, feedback and card logs live here; empty keeps state in memory.
    std::filesystem::path state_dir;
    // Approve/Dismiss decisions become new labeled examples.
    bool learn_from_decisions = false;
};

/// ingest -> embed -> dedup -> classify -> record in graph -> retrieve ->
/// generate card -> publish, plus the analyst decision and feedback paths.
///
/// One writer owns dedup, classification and graph writes. Retrieval and card
/// generation run on graph snapshots, up to `card_concurrency` at a time in
/// batch mode, and CardReady events are still published in ingest order.
class Pipeline {
public:
    Pipeline(std::shared_ptr<const Lexicon> lexicon, LayeredGraph graph,
             std::vector<LabeledExample> training, std::shared_ptr<ChatProvider> provider,
             std::shared_ptr<CaseBackend> cases, PipelineOptions options);

    /// Runs one record through every stage and returns the events it produced.
    /// A failing stage yields a Failed event; it never throws for bad input.
    std::vector<PipelineEvent> process_alert(std::string_view raw);

    RunReport process_batch(const std::vector<std::string>& raws);

    /// Feeds a newline-delimited alert file through the pipeline. Gaps between
    /// consecutive timestamps are waited out multiplied by `delay_scale`
    /// (1 = real time, 0 = no waiting).
    RunReport replay(const std::filesystem::path& file, double delay_scale);

    std::optional<CaseTicket> submit_decision(const Decision& decision);
    void submit_feedback(const Feedback& feedback);

    std::optional<SuggestionCard> card(const std::string& alert_id) const;
    std::vector<SuggestionCard> cards() const; // in publication order
    std::optional<Decision> decision(const std::string& alert_id) const;
    std::vector<Feedback> feedback(const std::string& alert_id) const;
    RunReport report() const;

    EventBus& events() { return events_; }
    const EventBus& events() const { return events_; }
    std::shared_ptr<const LayeredGraph> graph_snapshot() const { return graph_.snapshot(); }
    TrainingStore& training() { return training_; }
    const PipelineOptions& options() const { return options_; }

private:
    struct CardJob {
        Alert alert;
        EmbeddingVector vec;
        std::shared_ptr<const LayeredGraph> graph;
    };
    struct CardResult {
        std::optional<SuggestionCard> card;
        std::string error;
    };
    struct Ingested {
        std::vector<PipelineEvent> events;
        std::optional<CardJob> job;
        RunReport tally;
    };

    Ingested ingest(std::string_view raw);
    CardResult make_card(const CardJob& job) const;
    PipelineEvent publish_card(const CardJob& job, CardResult result, RunReport& tally);
    PipelineEvent fail(const std::string& alert_id, std::string_view stage, const std::string& message);

    void restore_state();
    void append_log(const char* name, const nlohmann::json& record) const;

    std::shared_ptr<const Lexicon> lexicon_;
    GraphStore graph_;
    TrainingStore training_;
    std::shared_ptr<ChatProvider> provider_;
    std::shared_ptr<CaseBackend> cases_;
    PipelineOptions options_;
    EventBus events_;

    std::mutex writer_;   // dedup, classification, graph writes, report
    std::mutex deciding_; // serializes decisions against each other
    DedupFilter dedup_;
    RunReport totals_;

    mutable std::mutex state_;
    std::map<std::string, std::pair<Alert, SuggestionCard>> cards_;
    std::vector<std::string> card_order_;
    std::map<std::string, Decision> decisions_;
    std::vector<Feedback> feedback_;
    mutable std::mutex log_;
};

/// Builds a pipeline from a service config: loads the lexicon, static graph
/// and training corpus and wires the configured provider and case backend.
std::unique_ptr<Pipeline> make_pipeline(const ServiceConfig& config);

} // namespace cyberally
