#include "cyberally/config.hpp"

#include "cyberally/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>

namespace cyberally {

using nlohmann::json;

namespace {

void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
    if (node.is_object()) {
        for (const auto& [key, value] : node.items()) {
            flatten(value, prefix.empty() ? key : prefix + "." + key, out);
        }
    } else {
        out[prefix] = node;
    }
}

template <typename T>
T number(const json& v, const std::string& key) {
    if (!v.is_number()) {
        throw Error(ErrorCode::InvalidConfig, key + " must be a number");
    }
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
            throw Error(ErrorCode::InvalidConfig, key + " must be an integer");
        }
    }
    return v.get<T>();
}

std::string text(const json& v, const std::string& key) {
    if (!v.is_string()) {
        throw Error(ErrorCode::InvalidConfig, key + " must be a string");
    }
    return v.get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.empty()) {
        return path;
    }
    return path.is_absolute() ? path : base / path;
}

} // namespace

void ServiceConfig::validate() const {
    dedup.validate();
    knn.validate();
    rag.validate();
    if (llm_provider != "scripted" && llm_provider != "http") {
        throw Error(ErrorCode::InvalidConfig, "llm.provider must be 'scripted' or 'http'");
    }
    if (llm_provider == "http" && llm_base_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "llm.base_url is required for the http provider");
    }
    if (cases_backend != "fake" && cases_backend != "http") {
        throw Error(ErrorCode::InvalidConfig, "cases.backend must be 'fake' or 'http'");
    }
    if (cases_backend == "http" && cases_base_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "cases.base_url is required for the http backend");
    }
    if (card_concurrency < 1) {
        throw Error(ErrorCode::InvalidConfig, "pipeline.card_concurrency must be >= 1");
    }
    if (llm_retries < 0 || cases_retries < 0) {
        throw Error(ErrorCode::InvalidConfig, "retry counts must be >= 0");
    }
}

ServiceConfig parse_config(const json& document, const std::filesystem::path& base_dir) {
    if (!document.is_object()) {
        throw Error(ErrorCode::InvalidConfig, "config must be an object");
    }
    std::map<std::string, json> flat;
    flatten(document, "", flat);

    ServiceConfig c;
    for (const auto& [key, v] : flat) {
        if (key == "dedup.threshold") c.dedup.threshold = number<double>(v, key);
        else if (key == "dedup.window_minutes") c.dedup.window = minutes(number<long long>(v, key));
        else if (key == "dedup.skew_seconds") c.dedup.skew = seconds(number<long long>(v, key));
        else if (key == "knn.k") c.knn.k = number<int>(v, key);
        else if (key == "knn.window_minutes") c.knn.window = minutes(number<long long>(v, key));
        else if (key == "knn.malicious_weight") {
            if (v.is_string() && v.get<std::string>() == "auto") {
                c.knn_auto_weight = true;
            } else {
                c.knn.malicious_weight = number<double>(v, key);
            }
        }
        else if (key == "rag.top_k_static") c.rag.top_k_static = number<int>(v, key);
        else if (key == "rag.top_k_dynamic") c.rag.top_k_dynamic = number<int>(v, key);
        else if (key == "rag.hops") c.rag.hops = number<int>(v, key);
        else if (key == "rag.min_score") c.rag.min_score = number<double>(v, key);
        else if (key == "llm.provider") c.llm_provider = text(v, key);
        else if (key == "llm.base_url") c.llm_base_url = text(v, key);
        else if (key == "llm.model") c.llm_model = text(v, key);
        else if (key == "llm.max_prompt_chars") c.llm_max_prompt_chars = number<std::size_t>(v, key);
        else if (key == "llm.retries") c.llm_retries = number<int>(v, key);
        else if (key == "llm.backoff_ms") c.llm_backoff = std::chrono::milliseconds(number<long long>(v, key));
        else if (key == "cases.backend") c.cases_backend = text(v, key);
        else if (key == "cases.base_url") c.cases_base_url = text(v, key);
        else if (key == "cases.retries") c.cases_retries = number<int>(v, key);
        else if (key == "cases.backoff_ms") c.cases_backoff = std::chrono::milliseconds(number<long long>(v, key));
        else if (key == "paths.lexicon") c.lexicon = resolve(base_dir, text(v, key));
        else if (key == "paths.static_graph") c.static_graph = resolve(base_dir, text(v, key));
        else if (key == "paths.training_corpus") c.training_corpus = resolve(base_dir, text(v, key));
        else if (key == "paths.state_dir") c.state_dir = resolve(base_dir, text(v, key));
        else if (key == "server.host") c.host = text(v, key);
        else if (key == "server.port") c.port = number<int>(v, key);
        else if (key == "pipeline.card_concurrency") c.card_concurrency = number<int>(v, key);
        else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    return parse_config(doc, path.parent_path());
}

} // namespace cyberally
