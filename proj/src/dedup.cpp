#include "cyberally/dedup.hpp"

#include "cyberally/error.hpp"

#include <algorithm>

namespace cyberally {

void DedupConfig::validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "dedup.threshold must lie in (0, 1]");
    }
    if (window <= Duration::zero()) {
        throw Error(ErrorCode::InvalidConfig, "dedup.window_minutes must be positive");
    }
    if (skew < Duration::zero()) {
        throw Error(ErrorCode::InvalidConfig, "dedup.skew_seconds must be non-negative");
    }
}

DedupFilter::DedupFilter(DedupConfig config) : config_(config) { config_.validate(); }

DedupVerdict DedupFilter::check_and_admit(const Alert& alert, const EmbeddingVector& vec) {
    if (latest_ && alert.timestamp < *latest_ - config_.skew) {
        throw Error(ErrorCode::OutOfOrderTimestamp,
                    alert.id + " at " + format_iso8601(alert.timestamp) + " precedes " +
                        format_iso8601(*latest_));
    }
    latest_ = latest_ ? std::max(*latest_, alert.timestamp) : alert.timestamp;

    const Timestamp cutoff = alert.timestamp - config_.window;
    std::erase_if(references_, [&](const Reference& r) { return r.timestamp < cutoff; });

    DedupVerdict verdict;
    const double vec_norm = norm(vec.values);
    if (vec.is_zero() || vec_norm == 0.0) {
        return verdict;
    }

    const Reference* best = nullptr;
    double best_score = 0.0;
    for (const auto& ref : references_) {
        double score = cosine_with_norms(vec.values, vec_norm, ref.values, ref.norm);
        if (!best || score > best_score || (score == best_score && ref.timestamp < best->timestamp)) {
            best = &ref;
            best_score = score;
        }
    }
    if (best) {
        verdict.similarity = best_score;
        if (best_score >= config_.threshold) {
            verdict.is_duplicate = true;
            verdict.matched_id = best->id;
            return verdict;
        }
    }
    references_.push_back(Reference{alert.id, vec.values, vec_norm, alert.timestamp});
    return verdict;
}

} // namespace cyberally
