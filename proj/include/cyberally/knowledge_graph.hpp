#pragma once

#include "cyberally/alert.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/ticket.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cyberally {

enum class NodeKind { Host, Service, Rule, AlertEvent, Ticket, TechniqueRef, PastIncident, Note };
enum class Relation { ConnectsTo, Hosts, Triggered, Mitigates, RelatesTo, CreatedFrom, ObservedDuring };
enum class LayerId { Static, Dynamic };

std::string_view to_string(NodeKind kind);
std::string_view to_string(Relation relation);
std::string_view to_string(LayerId layer);
std::optional<NodeKind> parse_node_kind(std::string_view text);
std::optional<Relation> parse_relation(std::string_view text);

struct GraphNode {
    std::string id;
    NodeKind kind = NodeKind::Note;
    std::string label;
    std::string description;
    std::map<std::string, std::string> attrs;

    bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
    std::string src;
    std::string dst;
    Relation relation = Relation::RelatesTo;

    bool operator==(const GraphEdge&) const = default;
    auto operator<=>(const GraphEdge&) const = default;
};

struct Subgraph {
    std::vector<GraphNode> nodes; // breadth-first, id order within each ring
    std::vector<GraphEdge> edges; // sorted by (src, dst, relation)
};

// Text a node is embedded from.
std::string node_text(const GraphNode& node);

inline constexpr std::string_view kCurrentEventNodeId = "event:current";
std::string alert_node_id(std::string_view alert_id);
std::string ticket_node_id(std::string_view ticket_id);

/// Two-layer property graph. The static layer (past exercises, infrastructure,
/// technique references) is sealed after loading; the dynamic layer collects
/// the live event's alerts and tickets. Edges may cross layers, so live
/// alerts attach to static infrastructure by reference.
///
/// Copying a LayeredGraph shares the sealed static layer and copies the
/// dynamic one, which is what GraphStore snapshots rely on.
class LayeredGraph {
public:
    explicit LayeredGraph(std::shared_ptr<const Lexicon> lexicon);

    void add_node(LayerId layer, GraphNode node);
    void add_edge(LayerId layer, GraphEdge edge);
    // Replaces a dynamic node's fields and re-embeds it.
    void update_node(GraphNode node);
    void seal_static();
    bool sealed() const noexcept { return sealed_; }

    const GraphNode* find_node(std::string_view id) const;
    std::optional<LayerId> layer_of(std::string_view id) const;
    std::span<const GraphNode> nodes(LayerId layer) const;
    std::span<const GraphEdge> edges(LayerId layer) const;
    std::size_t node_count() const;
    std::size_t edge_count() const;

    // Embedding of node_text(node); null for nodes with zero coverage.
    const EmbeddingVector* embedding(std::string_view id) const;
    const std::map<std::string, EmbeddingVector>& index(LayerId layer) const;

    /// Induced subgraph over every node within `hops` edges of `id`,
    /// following edges in either direction and across layers.
    Subgraph neighborhood(std::string_view id, int hops) const;

    /// Adds an AlertEvent node for an admitted alert, a Triggered edge from
    /// the Host whose label equals the alert's agent (if any), and an
    /// ObservedDuring edge to the current-event note. `vec` becomes the
    /// node's index entry.
    std::string record_alert(const Alert& alert, const EmbeddingVector& vec);

    /// Adds a Ticket node with a CreatedFrom edge to its alert's node.
    std::string record_ticket(const CaseTicket& ticket);

    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    const Lexicon& lexicon() const noexcept { return *lexicon_; }
    std::shared_ptr<const Lexicon> lexicon_ptr() const noexcept { return lexicon_; }

    // Both layers, each node and edge tagged with its `layer`.
    nlohmann::json to_snapshot_json() const;
    void save_snapshot(const std::filesystem::path& path) const;

private:
    struct Layer {
        std::vector<GraphNode> nodes;
        std::unordered_map<std::string, std::size_t> position;
        std::vector<GraphEdge> edges;
        std::map<std::string, EmbeddingVector> index;
        // Neighbour ids contributed by this layer's edges; keys may be nodes
        // of the other layer.
        std::unordered_map<std::string, std::vector<std::string>> adjacency;
    };

    Layer& mutable_layer(LayerId layer);
    const Layer& layer(LayerId layer) const;
    void insert_node(Layer& target, GraphNode node, const EmbeddingVector* precomputed);
    void ensure_current_event_node();

    std::shared_ptr<const Lexicon> lexicon_;
    std::shared_ptr<Layer> static_;  // never mutated once sealed_ is true
    Layer dynamic_;
    bool sealed_ = false;
    std::vector<std::string> warnings_;
};

/// Loads a graph file into the static layer and seals it.
LayeredGraph load_static(const std::filesystem::path& path, std::shared_ptr<const Lexicon> lexicon);
LayeredGraph load_static(const nlohmann::json& document, std::shared_ptr<const Lexicon> lexicon);
/// Restores a save_snapshot file: `layer` fields choose the destination.
LayeredGraph load_snapshot(const std::filesystem::path& path, std::shared_ptr<const Lexicon> lexicon);

/// Single-writer / many-reader wrapper. Readers get an immutable snapshot that
/// stays valid while the writer keeps mutating.
class GraphStore {
public:
    explicit GraphStore(LayeredGraph graph);

    std::shared_ptr<const LayeredGraph> snapshot() const;
    std::uint64_t version() const;

    template <typename F>
    auto write(F&& mutate) {
        std::lock_guard lock(mutex_);
        cached_.reset();
        ++version_;
        return mutate(graph_);
    }

private:
    mutable std::mutex mutex_;
    LayeredGraph graph_;
    mutable std::shared_ptr<const LayeredGraph> cached_;
    std::uint64_t version_ = 0;
};

} // namespace cyberally
