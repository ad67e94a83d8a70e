#include "cyberally/embedding.hpp"

#include "cyberally/error.hpp"
#include "cyberally/hashing.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cyberally {

Lexicon::Lexicon(std::size_t dimension,
                 std::unordered_map<std::string, std::vector<double>> entries)
    : dimension_(dimension), entries_(std::move(entries)) {
    if (dimension_ == 0) {
        throw Error(ErrorCode::MalformedLexicon, "dimension must be at least 1");
    }
    if (entries_.empty()) {
        throw Error(ErrorCode::MalformedLexicon, "lexicon has no entries");
    }
    for (const auto& [token, vec] : entries_) {
        if (vec.size() != dimension_) {
            throw Error(ErrorCode::MalformedLexicon, "vector for '" + token + "' has wrong length");
        }
    }
}

const std::vector<double>* Lexicon::find(std::string_view token) const {
    auto it = entries_.find(std::string(token));
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Lexicon::tokens() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [token, vec] : entries_) {
        out.push_back(token);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Lexicon parse_lexicon(std::istream& in) {
    std::unordered_map<std::string, std::vector<double>> entries;
    std::size_t dimension = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            auto sp = rest.find(' ');
            fields.push_back(rest.substr(0, sp));
            if (sp == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(sp + 1);
        }
        auto where = " (line " + std::to_string(line_no) + ")";
        if (fields.size() < 2 || fields[0].empty()) {
            throw Error(ErrorCode::MalformedLexicon, "expected token and values" + where);
        }
        std::vector<double> vec;
        vec.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v = 0;
            auto f = fields[i];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::MalformedLexicon, "bad number '" + std::string(f) + "'" + where);
            }
            vec.push_back(v);
        }
        if (dimension == 0) {
            dimension = vec.size();
        } else if (vec.size() != dimension) {
            throw Error(ErrorCode::MalformedLexicon, "inconsistent dimension" + where);
        }
        entries.insert_or_assign(std::string(fields[0]), std::move(vec));
    }
    if (entries.empty()) {
        throw Error(ErrorCode::MalformedLexicon, "lexicon has no entries");
    }
    return Lexicon(dimension, std::move(entries));
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open lexicon " + path.string());
    }
    return parse_lexicon(in);
}

void write_lexicon(const Lexicon& lexicon, std::ostream& out) {
    char buf[32];
    for (const auto& token : lexicon.tokens()) {
        out << token;
        for (double v : *lexicon.find(token)) {
            std::snprintf(buf, sizeof buf, " %.6f", v);
            out << buf;
        }
        out << '\n';
    }
}

namespace {

std::vector<double> unit_vector(std::uint64_t seed, std::size_t dimension) {
    DeterministicRng rng(seed);
    std::vector<double> vec(dimension);
    double n = 0.0;
    while (n < 1e-6) {
        for (auto& v : vec) {
            v = rng.unit() * 2.0 - 1.0;
        }
        n = norm(vec);
    }
    for (auto& v : vec) v /= n;
    return vec;
}

std::uint64_t token_seed(std::string_view token, std::uint64_t seed) {
    return fnv1a64(token) ^ (seed * 0x9e3779b97f4a7c15ULL);
}

// Rounded to the precision the file format stores.
void round_to_file_precision(std::vector<double>& vec) {
    for (auto& v : vec) v = std::round(v * 1e6) / 1e6;
}

} // namespace

Lexicon make_hashed_lexicon(const std::vector<std::string>& tokens, std::size_t dimension,
                            std::uint64_t seed) {
    return make_grouped_lexicon({tokens}, dimension, seed, 0.0);
}

Lexicon make_grouped_lexicon(const std::vector<std::vector<std::string>>& groups, std::size_t dimension,
                             std::uint64_t seed, double cohesion) {
    if (dimension == 0) {
        throw Error(ErrorCode::MalformedLexicon, "dimension must be positive");
    }
    if (!(cohesion >= 0.0 && cohesion < 1.0)) {
        throw Error(ErrorCode::MalformedLexicon, "cohesion must be in [0, 1)");
    }
    std::unordered_map<std::string, std::vector<double>> entries;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto centroid = unit_vector(token_seed("group:" + std::to_string(g), seed), dimension);
        for (const auto& token : groups[g]) {
            auto vec = unit_vector(token_seed(token, seed), dimension);
            if (cohesion > 0.0) {
                for (std::size_t i = 0; i < dimension; ++i) {
                    vec[i] = cohesion * centroid[i] + (1.0 - cohesion) * vec[i];
                }
                double n = norm(vec);
                for (auto& v : vec) v /= n;
            }
            round_to_file_precision(vec);
            entries.insert_or_assign(token, std::move(vec));
        }
    }
    return Lexicon(dimension, std::move(entries));
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

EmbeddingVector embed(const Lexicon& lexicon, std::string_view text) {
    EmbeddingVector out;
    out.values.assign(lexicon.dimension(), 0.0);
    auto tokens = tokenize(text);
    std::size_t hits = 0;
    for (const auto& token : tokens) {
        if (const auto* vec = lexicon.find(token)) {
            for (std::size_t i = 0; i < vec->size(); ++i) {
                out.values[i] += (*vec)[i];
            }
            ++hits;
        }
    }
    if (hits == 0) {
        return out;
    }
    for (auto& v : out.values) {
        v /= static_cast<double>(hits);
    }
    out.coverage = static_cast<double>(hits) / static_cast<double>(tokens.size());
    return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

double cosine_with_norms(const std::vector<double>& a, double norm_a, const std::vector<double>& b,
                         double norm_b) {
    return std::clamp(dot(a, b) / (norm_a * norm_b), -1.0, 1.0);
}

std::optional<double> cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        return std::nullopt;
    }
    return cosine_with_norms(a, na, b, nb);
}

std::optional<double> cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values, b.values);
}

} // namespace cyberally
