#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/error.hpp"
#include "cyberally/time.hpp"

#include <doctest.h>

#include <filesystem>
#include <initializer_list>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace testutil {

inline const std::filesystem::path kDataDir = CYBERALLY_DATA_DIR;
inline const std::filesystem::path kGoldenDir = CYBERALLY_GOLDEN_DIR;

inline cyberally::Lexicon lexicon(
    std::initializer_list<std::pair<const char*, std::vector<double>>> entries) {
    std::unordered_map<std::string, std::vector<double>> m;
    std::size_t dim = 0;
    for (const auto& [token, vec] : entries) {
        m.emplace(token, vec);
        dim = vec.size();
    }
    return cyberally::Lexicon(dim, std::move(m));
}

inline std::shared_ptr<const cyberally::Lexicon> shared(cyberally::Lexicon lex) {
    return std::make_shared<const cyberally::Lexicon>(std::move(lex));
}

inline std::shared_ptr<const cyberally::Lexicon> bundled_lexicon() {
    static auto lex = shared(cyberally::load_lexicon(kDataDir / "lexicon.txt"));
    return lex;
}

inline cyberally::Timestamp at(const char* iso) { return *cyberally::parse_iso8601(iso); }

inline cyberally::Alert alert(std::string id, std::string title, cyberally::Timestamp ts,
                              std::string agent = "web-01", std::string full_log = "", int priority = 5) {
    cyberally::Alert a;
    a.id = std::move(id);
    a.timestamp = ts;
    a.priority = priority;
    a.rule_id = "5710";
    a.title = std::move(title);
    a.full_log = std::move(full_log);
    a.agent = std::move(agent);
    return a;
}

template <typename F>
cyberally::ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const cyberally::Error& e) {
        return e.code();
    }
    FAIL("expected a cyberally::Error");
    return cyberally::ErrorCode::IoError;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cyberally-test-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testutil
