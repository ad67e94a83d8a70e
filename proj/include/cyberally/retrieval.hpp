#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/knowledge_graph.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace cyberally {

struct RetrievalConfig {
    int top_k_static = 5;
    int top_k_dynamic = 3;
    int hops = 1;
    double min_score = 0.3;

    void validate() const;
};

struct RetrievedItem {
    GraphNode node;
    double score = 0.0;
    std::string excerpt; // render_excerpt of the node's neighbourhood
};

struct ContextBundle {
    std::string alert_id;
    std::vector<RetrievedItem> static_items;
    std::vector<RetrievedItem> dynamic_items;
    std::vector<std::string> related_alerts; // alert ids of AlertEvent items in dynamic_items
    bool skipped = false;                    // query embedding was zero; nothing retrieved
};

/// Scores every indexed node of each layer against the alert's embedding and
/// keeps the best `top_k` per layer with score >= min_score. Ties rank by
/// node id. The alert's own AlertEvent node is never returned.
ContextBundle retrieve(const LayeredGraph& graph, const RetrievalConfig& config, const Alert& alert,
                       const EmbeddingVector& vec);

/// One `Kind label: description` line per node (sorted by id), then one
/// `src -Relation-> dst` line per edge (sorted by src, dst, relation).
std::string render_excerpt(const Subgraph& subgraph);

nlohmann::json to_json(const ContextBundle& bundle);

} // namespace cyberally
