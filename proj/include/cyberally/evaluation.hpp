#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/classifier.hpp"
#include "cyberally/dedup.hpp"
#include "cyberally/embedding.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cyberally {

struct CorpusSpec {
    std::uint64_t seed = 42;
    std::map<int, std::size_t> per_priority_distinct;
    std::map<int, std::size_t> per_priority_total;
    double malicious_fraction = 0.1;          // share of distinct types labeled Suspicious
    std::optional<std::size_t> suspicious_types; // exact count; overrides the fraction
    Duration duration = minutes(24 * 60);
    Timestamp start{};

    // Distinct types are kept below `threshold` cosine from each other, and
    // duplicates land within `window` after their first occurrence.
    double threshold = 0.95;
    Duration window = minutes(30);

    std::size_t tokens_per_alert = 8;
    std::size_t title_tokens = 4;
    std::vector<std::string> agents;
    // Token pools per class. Empty pools split the lexicon in two.
    std::vector<std::string> benign_vocabulary;
    std::vector<std::string> suspicious_vocabulary;
    // Probability that a token is drawn from the type's own class pool.
    double class_affinity = 0.8;

    void validate() const;
    std::size_t total_distinct() const;
    std::size_t total_alerts() const;
};

CorpusSpec parse_corpus_spec(const nlohmann::json& document);
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

struct GeneratedCorpus {
    std::vector<Alert> alerts; // sorted by timestamp
    std::vector<TriageLabel> labels;
    std::size_t distinct_types = 0;
    std::size_t suspicious_types = 0;
};

/// Builds a corpus whose duplicate structure is exact: every distinct type
/// embeds below the threshold from every other type, and each duplicate is a
/// verbatim repeat inside the window of its type's first occurrence.
/// Throws UnsatisfiableSpec when that cannot be arranged.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, const Lexicon& lexicon);

// alerts.ndjson, labeled.ndjson and manifest.json under `dir`.
void write_corpus(const GeneratedCorpus& corpus, const CorpusSpec& spec,
                  const std::filesystem::path& dir);

std::vector<Alert> load_alerts(const std::filesystem::path& path);

struct DedupRow {
    std::size_t total = 0;
    std::size_t after_dedup = 0;
};

struct DedupTable {
    std::map<int, DedupRow> rows; // by priority
    std::size_t skipped_out_of_order = 0;

    DedupRow totals() const;
};

DedupTable run_dedup_eval(std::span<const Alert> alerts, const Lexicon& lexicon,
                          const DedupConfig& config = {});

struct WeightedMetrics {
    double weight = 1.0;
    Metrics metrics;
};

std::vector<WeightedMetrics> run_classifier_eval(std::span<const std::pair<Alert, TriageLabel>> corpus,
                                                 const Lexicon& lexicon, const KnnConfig& base,
                                                 const std::vector<double>& weights, int folds,
                                                 std::uint64_t seed);

std::string format_dedup_table(const DedupTable& table);
std::string format_classifier_table(const std::vector<WeightedMetrics>& columns);
nlohmann::json to_json(const DedupTable& table);
nlohmann::json to_json(const std::vector<WeightedMetrics>& columns);

} // namespace cyberally
