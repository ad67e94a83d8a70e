#pragma once

#include "cyberally/classifier.hpp"
#include "cyberally/dedup.hpp"
#include "cyberally/retrieval.hpp"

#include <nlohmann/json_fwd.hpp>

#include <chrono>
#include <filesystem>
#include <string>

namespace cyberally {

/// Everything `cyberally serve` / `replay` needs. Keys use the dotted names
/// below; the file may nest them ({"dedup": {"threshold": 0.9}}) or spell
/// them flat ({"dedup.threshold": 0.9}).
struct ServiceConfig {
    DedupConfig dedup;                // dedup.threshold, dedup.window_minutes, dedup.skew_seconds
    KnnConfig knn;                    // knn.k, knn.window_minutes, knn.malicious_weight
    bool knn_auto_weight = false;     // knn.malicious_weight = "auto"
    RetrievalConfig rag;              // rag.top_k_static, rag.top_k_dynamic, rag.hops, rag.min_score

    std::string llm_provider = "scripted"; // llm.provider: "scripted" | "http"
    std::string llm_base_url;              // llm.base_url
    std::string llm_model = "gpt-4o";      // llm.model
    std::size_t llm_max_prompt_chars = 8000;
    int llm_retries = 2;
    std::chrono::milliseconds llm_backoff{1000};

    std::string cases_backend = "fake";    // cases.backend: "fake" | "http"
    std::string cases_base_url;            // cases.base_url
    int cases_retries = 2;
    std::chrono::milliseconds cases_backoff{500};

    std::filesystem::path lexicon;         // paths.lexicon
    std::filesystem::path static_graph;    // paths.static_graph
    std::filesystem::path training_corpus; // paths.training_corpus
    std::filesystem::path state_dir;       // paths.state_dir (decision/feedback/card logs)

    std::string host = "127.0.0.1";        // server.host
    int port = 8080;                       // server.port
    int card_concurrency = 4;              // pipeline.card_concurrency

    void validate() const;
};

// Relative paths resolve against `base_dir`.
ServiceConfig parse_config(const nlohmann::json& document, const std::filesystem::path& base_dir);
ServiceConfig load_config(const std::filesystem::path& path);

} // namespace cyberally
