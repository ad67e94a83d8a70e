#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/time.hpp"

#include <deque>
#include <optional>
#include <string>

namespace cyberally {

struct DedupConfig {
    double threshold = 0.95;    // duplicate iff similarity >= threshold
    Duration window = minutes(30);
    Duration skew = seconds(5); // tolerated out-of-order arrival

    void validate() const;
};

struct DedupVerdict {
    bool is_duplicate = false;
    std::optional<std::string> matched_id;
    std::optional<double> similarity;
};

/// Sliding-window near-duplicate filter. The first occurrence of a text is
/// kept as the reference; later alerts within the window whose embedding is
/// at least `threshold` cosine-similar to a reference are dropped.
///
/// Single writer: the owner must serialize calls.
class DedupFilter {
public:
    explicit DedupFilter(DedupConfig config = {});

    DedupVerdict check_and_admit(const Alert& alert, const EmbeddingVector& vec);

    const DedupConfig& config() const noexcept { return config_; }
    std::size_t reference_count() const noexcept { return references_.size(); }

private:
    struct Reference {
        std::string id;
        std::vector<double> values;
        double norm = 0.0;
        Timestamp timestamp;
    };

    DedupConfig config_;
    std::deque<Reference> references_;
    std::optional<Timestamp> latest_;
};

} // namespace cyberally
