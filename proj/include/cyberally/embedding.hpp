#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cyberally {

/// Word-vector table. Loaded once, then shared read-only by every stage.
class Lexicon {
public:
    Lexicon(std::size_t dimension, std::unordered_map<std::string, std::vector<double>> entries);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<double>* find(std::string_view token) const;

    // Tokens in lexicographic order.
    std::vector<std::string> tokens() const;

private:
    std::size_t dimension_;
    std::unordered_map<std::string, std::vector<double>> entries_;
};

// `token v1 ... vd` per line, single-space separated. Dimension comes from the
// first entry; later duplicates of a token replace earlier ones.
Lexicon parse_lexicon(std::istream& in);
Lexicon load_lexicon(const std::filesystem::path& path);
void write_lexicon(const Lexicon& lexicon, std::ostream& out);

// Deterministic lexicon: each token maps to a unit vector seeded from a hash of
// the token and `seed`.
Lexicon make_hashed_lexicon(const std::vector<std::string>& tokens, std::size_t dimension,
                            std::uint64_t seed);

// Like make_hashed_lexicon, but every token is pulled toward a per-group
// direction: v = normalize(cohesion * centroid + (1 - cohesion) * own).
// A token listed in several groups keeps its last group.
Lexicon make_grouped_lexicon(const std::vector<std::vector<std::string>>& groups, std::size_t dimension,
                             std::uint64_t seed, double cohesion);

struct EmbeddingVector {
    std::vector<double> values;
    double coverage = 0.0;

    bool is_zero() const noexcept { return coverage == 0.0; }
    bool operator==(const EmbeddingVector&) const = default;
};

/// Lowercases and splits on runs of non-alphanumeric characters.
std::vector<std::string> tokenize(std::string_view text);

/// Mean of the lexicon vectors of all in-lexicon tokens (with multiplicity).
/// Out-of-lexicon tokens are skipped; if none remain the result is the zero
/// vector with coverage 0.
EmbeddingVector embed(const Lexicon& lexicon, std::string_view text);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& v);

/// Cosine of the angle between the two vectors, clamped to [-1, 1]; nullopt
/// when either vector has zero norm. Throws DimensionMismatch on unequal
/// lengths.
std::optional<double> cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
std::optional<double> cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Same value as cosine_similarity when both norms are already known and nonzero.
double cosine_with_norms(const std::vector<double>& a, double norm_a, const std::vector<double>& b,
                         double norm_b);

} // namespace cyberally
