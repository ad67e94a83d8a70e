#include "cyberally/retrieval.hpp"

#include "cyberally/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace cyberally {

using nlohmann::json;

namespace {

struct Scored {
    const std::string* id;
    double score;
};

std::vector<RetrievedItem> top_items(const LayeredGraph& graph, LayerId layer, int top_k,
                                     const RetrievalConfig& config, const std::vector<double>& query,
                                     double query_norm, const std::string& exclude) {
    std::vector<RetrievedItem> items;
    if (top_k <= 0) {
        return items;
    }
    std::vector<Scored> scored;
    for (const auto& [id, vec] : graph.index(layer)) {
        if (id == exclude) {
            continue;
        }
        double n = norm(vec.values);
        if (n == 0.0) {
            continue;
        }
        double s = cosine_with_norms(query, query_norm, vec.values, n);
        if (s >= config.min_score) {
            scored.push_back({&id, s});
        }
    }
    auto better = [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : *a.id < *b.id;
    };
    std::size_t k = std::min(scored.size(), static_cast<std::size_t>(top_k));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                      better);
    items.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        RetrievedItem item;
        item.node = *graph.find_node(*scored[i].id);
        item.score = scored[i].score;
        item.excerpt = render_excerpt(graph.neighborhood(*scored[i].id, config.hops));
        items.push_back(std::move(item));
    }
    return items;
}

json item_to_json(const RetrievedItem& item) {
    return {{"id", item.node.id},
            {"kind", to_string(item.node.kind)},
            {"label", item.node.label},
            {"score", item.score},
            {"excerpt", item.excerpt}};
}

} // namespace

void RetrievalConfig::validate() const {
    if (top_k_static < 0 || top_k_dynamic < 0 || top_k_static + top_k_dynamic < 1) {
        throw Error(ErrorCode::InvalidConfig, "rag.top_k_* must be >= 0 and sum to at least 1");
    }
    if (hops < 0) {
        throw Error(ErrorCode::InvalidConfig, "rag.hops must be >= 0");
    }
    if (!(min_score >= -1.0 && min_score <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "rag.min_score must lie in [-1, 1]");
    }
}

ContextBundle retrieve(const LayeredGraph& graph, const RetrievalConfig& config, const Alert& alert,
                       const EmbeddingVector& vec) {
    config.validate();
    ContextBundle bundle;
    bundle.alert_id = alert.id;
    const double query_norm = norm(vec.values);
    if (vec.is_zero() || query_norm == 0.0) {
        bundle.skipped = true;
        return bundle;
    }
    if (vec.values.size() != graph.lexicon().dimension()) {
        throw Error(ErrorCode::DimensionMismatch, "alert embedding does not match graph lexicon");
    }
    const std::string self = alert_node_id(alert.id);
    bundle.static_items =
        top_items(graph, LayerId::Static, config.top_k_static, config, vec.values, query_norm, self);
    bundle.dynamic_items = top_items(graph, LayerId::Dynamic, config.top_k_dynamic, config,
                                     vec.values, query_norm, self);
    for (const auto& item : bundle.dynamic_items) {
        if (item.node.kind == NodeKind::AlertEvent) {
            auto it = item.node.attrs.find("alert_id");
            bundle.related_alerts.push_back(it != item.node.attrs.end() ? it->second : item.node.id);
        }
    }
    return bundle;
}

std::string render_excerpt(const Subgraph& subgraph) {
    std::vector<const GraphNode*> nodes;
    nodes.reserve(subgraph.nodes.size());
    for (const auto& n : subgraph.nodes) {
        nodes.push_back(&n);
    }
    std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });
    auto edges = subgraph.edges;
    std::sort(edges.begin(), edges.end());

    std::string out;
    for (const auto* n : nodes) {
        out.append(to_string(n->kind)).append(" ").append(n->label).append(": ");
        out.append(n->description).append("\n");
    }
    for (const auto& e : edges) {
        out.append(e.src).append(" -").append(to_string(e.relation)).append("-> ");
        out.append(e.dst).append("\n");
    }
    return out;
}

json to_json(const ContextBundle& bundle) {
    json statics = json::array();
    json dynamics = json::array();
    for (const auto& item : bundle.static_items) {
        statics.push_back(item_to_json(item));
    }
    for (const auto& item : bundle.dynamic_items) {
        dynamics.push_back(item_to_json(item));
    }
    return {{"alert_id", bundle.alert_id},
            {"skipped", bundle.skipped},
            {"static_items", std::move(statics)},
            {"dynamic_items", std::move(dynamics)},
            {"related_alerts", bundle.related_alerts}};
}

} // namespace cyberally
