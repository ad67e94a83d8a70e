#include "cyberally/classifier.hpp"

#include "cyberally/error.hpp"
#include "cyberally/hashing.hpp"

#include <algorithm>
#include <numeric>

namespace cyberally {

namespace {

struct Neighbour {
    double score;
    const LabeledExample* example;
};

bool ranks_before(const Neighbour& a, const Neighbour& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    if (a.example->timestamp != b.example->timestamp) {
        return a.example->timestamp < b.example->timestamp;
    }
    return a.example->id < b.example->id;
}

// Core vote over a pre-normed training view. `members` lists the indices of
// `all` that form the training set.
TriageLabel vote(std::span<const LabeledExample> all, std::span<const double> norms,
                 std::span<const std::size_t> members, const KnnConfig& config,
                 const std::vector<double>& query, double query_norm, Timestamp at) {
    const Timestamp earliest = at - config.window;
    std::vector<Neighbour> in_window;
    for (std::size_t i : members) {
        const auto& ex = all[i];
        if (ex.timestamp >= earliest && ex.timestamp <= at) {
            in_window.push_back({0.0, &ex});
        }
    }
    std::vector<Neighbour> candidates;
    if (in_window.size() >= static_cast<std::size_t>(config.k)) {
        candidates = std::move(in_window);
    } else {
        candidates.reserve(members.size());
        for (std::size_t i : members) {
            candidates.push_back({0.0, &all[i]});
        }
    }
    for (auto& c : candidates) {
        auto idx = static_cast<std::size_t>(c.example - all.data());
        c.score = cosine_with_norms(query, query_norm, c.example->vector.values, norms[idx]);
    }
    std::size_t k = std::min(candidates.size(), static_cast<std::size_t>(config.k));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), ranks_before);

    double suspicious = 0.0;
    double benign = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (candidates[i].example->label == TriageLabel::Suspicious) {
            suspicious += config.malicious_weight;
        } else {
            benign += 1.0;
        }
    }
    return suspicious >= benign ? TriageLabel::Suspicious : TriageLabel::Benign;
}

std::vector<double> norms_of(std::span<const LabeledExample> data) {
    std::vector<double> norms;
    norms.reserve(data.size());
    for (const auto& ex : data) {
        norms.push_back(norm(ex.vector.values));
    }
    return norms;
}

} // namespace

std::vector<LabeledExample> make_examples(const Lexicon& lexicon,
                                          std::span<const std::pair<Alert, TriageLabel>> labeled) {
    std::vector<LabeledExample> out;
    out.reserve(labeled.size());
    for (const auto& [alert, label] : labeled) {
        auto vec = embed(lexicon, alert_text(alert));
        if (vec.is_zero()) {
            continue;
        }
        out.push_back({alert.id, std::move(vec), label, alert.timestamp});
    }
    return out;
}

void KnnConfig::validate() const {
    if (k < 1) {
        throw Error(ErrorCode::InvalidConfig, "knn.k must be at least 1");
    }
    if (!(malicious_weight >= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "knn.malicious_weight must be >= 1");
    }
    if (window <= Duration::zero()) {
        throw Error(ErrorCode::InvalidConfig, "knn.window_minutes must be positive");
    }
}

double f1_score(double precision, double recall) {
    double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Metrics Metrics::from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

TriageLabel classify(std::span<const LabeledExample> train, const KnnConfig& config,
                     const EmbeddingVector& query, Timestamp at) {
    config.validate();
    if (train.empty()) {
        throw Error(ErrorCode::EmptyTrainingSet, "no labeled examples to vote with");
    }
    const double query_norm = norm(query.values);
    if (query.is_zero() || query_norm == 0.0) {
        return TriageLabel::Suspicious;
    }
    if (query.values.size() != train.front().vector.values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "query and training vectors differ in length");
    }
    auto norms = norms_of(train);
    std::vector<std::size_t> members;
    members.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (norms[i] > 0.0) {
            members.push_back(i);
        }
    }
    if (members.empty()) {
        throw Error(ErrorCode::EmptyTrainingSet, "all training vectors are zero");
    }
    return vote(train, norms, members, config, query.values, query_norm, at);
}

Metrics evaluate_cv(std::span<const LabeledExample> data, const KnnConfig& config, int folds,
                    std::uint64_t seed) {
    config.validate();
    if (folds < 2 || data.size() < static_cast<std::size_t>(folds)) {
        throw Error(ErrorCode::TooFewExamples, std::to_string(data.size()) + " examples for " +
                                                   std::to_string(folds) + " folds");
    }

    auto by_id = [&](std::size_t a, std::size_t b) {
        if (data[a].id != data[b].id) {
            return data[a].id < data[b].id;
        }
        return data[a].timestamp < data[b].timestamp;
    };
    std::vector<std::size_t> benign;
    std::vector<std::size_t> suspicious;
    for (std::size_t i = 0; i < data.size(); ++i) {
        (data[i].label == TriageLabel::Benign ? benign : suspicious).push_back(i);
    }
    std::sort(benign.begin(), benign.end(), by_id);
    std::sort(suspicious.begin(), suspicious.end(), by_id);

    DeterministicRng rng(seed);
    std::vector<int> fold_of(data.size(), 0);
    for (auto* group : {&benign, &suspicious}) {
        rng.shuffle(*group);
        for (std::size_t j = 0; j < group->size(); ++j) {
            fold_of[(*group)[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
        }
    }

    auto norms = norms_of(data);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (fold_of[i] == fold) {
                test.push_back(i);
            } else if (norms[i] > 0.0) {
                train.push_back(i);
            }
        }
        if (train.empty()) {
            throw Error(ErrorCode::EmptyTrainingSet, "fold " + std::to_string(fold));
        }
        for (std::size_t i : test) {
            const auto& ex = data[i];
            TriageLabel predicted =
                norms[i] == 0.0
                    ? TriageLabel::Suspicious
                    : vote(data, norms, train, config, ex.vector.values, norms[i], ex.timestamp);
            bool positive = predicted == TriageLabel::Suspicious;
            bool actual = ex.label == TriageLabel::Suspicious;
            if (positive && actual) {
                ++tp;
            } else if (positive) {
                ++fp;
            } else if (actual) {
                ++fn;
            } else {
                ++tn;
            }
        }
    }
    return Metrics::from_confusion(tp, fp, tn, fn);
}

double fit_weight(std::span<const LabeledExample> data) {
    std::size_t benign = 0;
    std::size_t suspicious = 0;
    for (const auto& ex : data) {
        (ex.label == TriageLabel::Benign ? benign : suspicious) += 1;
    }
    if (benign == 0 || suspicious == 0) {
        throw Error(ErrorCode::SingleClassData, std::to_string(benign) + " benign, " +
                                                    std::to_string(suspicious) + " suspicious");
    }
    return std::max(1.0, static_cast<double>(benign) / static_cast<double>(suspicious));
}

TrainingStore::TrainingStore(std::vector<LabeledExample> initial)
    : data_(std::make_shared<const std::vector<LabeledExample>>(std::move(initial))) {}

TrainingStore::Snapshot TrainingStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return data_;
}

std::uint64_t TrainingStore::version() const {
    std::lock_guard lock(mutex_);
    return version_;
}

void TrainingStore::append(LabeledExample example) {
    if (example.vector.is_zero()) {
        return;
    }
    std::lock_guard lock(mutex_);
    auto next = std::make_shared<std::vector<LabeledExample>>(*data_);
    next->push_back(std::move(example));
    data_ = std::move(next);
    ++version_;
}

} // namespace cyberally
