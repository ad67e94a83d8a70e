#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/time.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace cyberally {

struct LabeledExample {
    std::string id;
    EmbeddingVector vector;
    TriageLabel label = TriageLabel::Benign;
    Timestamp timestamp{};
};

// Embeds each alert and drops the ones with zero coverage.
std::vector<LabeledExample> make_examples(const Lexicon& lexicon,
                                          std::span<const std::pair<Alert, TriageLabel>> labeled);

struct KnnConfig {
    int k = 15;
    double malicious_weight = 1.0; // vote multiplier for Suspicious neighbours
    Duration window = minutes(30);

    void validate() const;
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    static Metrics from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
    bool operator==(const Metrics&) const = default;
};

// Harmonic mean; 0 when precision + recall == 0.
double f1_score(double precision, double recall);

/// Weighted kNN vote over cosine similarity.
///
/// Candidates are the examples stamped within [at - window, at]; when fewer
/// than k fall in that range the whole set is used instead. Neighbours are
/// ranked by similarity (ties: earlier timestamp, then smaller id). A zero
/// query is Suspicious without a vote, as is a tied vote.
TriageLabel classify(std::span<const LabeledExample> train, const KnnConfig& config,
                     const EmbeddingVector& query, Timestamp at);

/// Stratified k-fold cross-validation with one confusion matrix aggregated
/// over all folds (Suspicious is the positive class). Fold membership depends
/// only on the seed and the example ids, never on input order.
Metrics evaluate_cv(std::span<const LabeledExample> data, const KnnConfig& config, int folds,
                    std::uint64_t seed);

/// count(Benign) / count(Suspicious), clamped to at least 1.
double fit_weight(std::span<const LabeledExample> data);

/// Training set shared between the ingest worker and concurrent classifiers.
/// Readers take an immutable snapshot; append publishes a new version.
class TrainingStore {
public:
    using Snapshot = std::shared_ptr<const std::vector<LabeledExample>>;

    explicit TrainingStore(std::vector<LabeledExample> initial = {});

    Snapshot snapshot() const;
    std::uint64_t version() const;
    void append(LabeledExample example);

private:
    mutable std::mutex mutex_;
    Snapshot data_;
    std::uint64_t version_ = 0;
};

} // namespace cyberally
