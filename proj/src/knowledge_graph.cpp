#include "cyberally/knowledge_graph.hpp"

#include "cyberally/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

namespace cyberally {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<NodeKind, std::string_view>, 8> kKinds{{
    {NodeKind::Host, "Host"},
    {NodeKind::Service, "Service"},
    {NodeKind::Rule, "Rule"},
    {NodeKind::AlertEvent, "AlertEvent"},
    {NodeKind::Ticket, "Ticket"},
    {NodeKind::TechniqueRef, "TechniqueRef"},
    {NodeKind::PastIncident, "PastIncident"},
    {NodeKind::Note, "Note"},
}};

constexpr std::array<std::pair<Relation, std::string_view>, 7> kRelations{{
    {Relation::ConnectsTo, "ConnectsTo"},
    {Relation::Hosts, "Hosts"},
    {Relation::Triggered, "Triggered"},
    {Relation::Mitigates, "Mitigates"},
    {Relation::RelatesTo, "RelatesTo"},
    {Relation::CreatedFrom, "CreatedFrom"},
    {Relation::ObservedDuring, "ObservedDuring"},
}};

void validate_node(const GraphNode& node) {
    if (node.id.empty()) {
        throw Error(ErrorCode::MalformedGraphFile, "node without id");
    }
    // AlertEvent nodes carry the alert title as label and the (possibly
    // empty) raw log as description.
    if (node.kind != NodeKind::AlertEvent && node.description.empty()) {
        throw Error(ErrorCode::MalformedGraphFile, "node '" + node.id + "' has no description");
    }
    if (node.kind == NodeKind::TechniqueRef && !node.attrs.contains("technique_id")) {
        throw Error(ErrorCode::MalformedGraphFile,
                    "TechniqueRef '" + node.id + "' lacks attrs.technique_id");
    }
}

GraphNode node_from_json(const json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::MalformedGraphFile, "node entry must be an object");
    }
    try {
        GraphNode node;
        node.id = j.at("id").get<std::string>();
        auto kind_text = j.at("kind").get<std::string>();
        auto kind = parse_node_kind(kind_text);
        if (!kind) {
            throw Error(ErrorCode::MalformedGraphFile, "unknown node kind '" + kind_text + "'");
        }
        node.kind = *kind;
        node.label = j.value("label", "");
        node.description = j.value("description", "");
        if (auto attrs = j.find("attrs"); attrs != j.end() && !attrs->is_null()) {
            for (const auto& [key, value] : attrs->items()) {
                node.attrs[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }
        return node;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedGraphFile, e.what());
    }
}

GraphEdge edge_from_json(const json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::MalformedGraphFile, "edge entry must be an object");
    }
    try {
        GraphEdge edge;
        edge.src = j.at("src").get<std::string>();
        edge.dst = j.at("dst").get<std::string>();
        auto rel_text = j.at("relation").get<std::string>();
        auto rel = parse_relation(rel_text);
        if (!rel) {
            throw Error(ErrorCode::MalformedGraphFile, "unknown relation '" + rel_text + "'");
        }
        edge.relation = *rel;
        return edge;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedGraphFile, e.what());
    }
}

json node_to_json(const GraphNode& node) {
    json attrs = json::object();
    for (const auto& [k, v] : node.attrs) {
        attrs[k] = v;
    }
    return {{"id", node.id},
            {"kind", to_string(node.kind)},
            {"label", node.label},
            {"description", node.description},
            {"attrs", attrs}};
}

json edge_to_json(const GraphEdge& edge) {
    return {{"src", edge.src}, {"dst", edge.dst}, {"relation", to_string(edge.relation)}};
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open graph file " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedGraphFile, e.what());
    }
}

const json& array_field(const json& doc, const char* name) {
    static const json empty = json::array();
    auto it = doc.find(name);
    if (it == doc.end() || it->is_null()) {
        return empty;
    }
    if (!it->is_array()) {
        throw Error(ErrorCode::MalformedGraphFile, std::string(name) + " must be an array");
    }
    return *it;
}

} // namespace

std::string_view to_string(NodeKind kind) {
    for (const auto& [k, name] : kKinds) {
        if (k == kind) return name;
    }
    return "Note";
}

std::string_view to_string(Relation relation) {
    for (const auto& [r, name] : kRelations) {
        if (r == relation) return name;
    }
    return "RelatesTo";
}

std::string_view to_string(LayerId layer) { return layer == LayerId::Static ? "static" : "dynamic"; }

std::optional<NodeKind> parse_node_kind(std::string_view text) {
    for (const auto& [k, name] : kKinds) {
        if (name == text) return k;
    }
    return std::nullopt;
}

std::optional<Relation> parse_relation(std::string_view text) {
    for (const auto& [r, name] : kRelations) {
        if (name == text) return r;
    }
    return std::nullopt;
}

std::string node_text(const GraphNode& node) { return node.label + " " + node.description; }

std::string alert_node_id(std::string_view alert_id) { return "alert:" + std::string(alert_id); }
std::string ticket_node_id(std::string_view ticket_id) { return "ticket:" + std::string(ticket_id); }

LayeredGraph::LayeredGraph(std::shared_ptr<const Lexicon> lexicon)
    : lexicon_(std::move(lexicon)), static_(std::make_shared<Layer>()) {}

LayeredGraph::Layer& LayeredGraph::mutable_layer(LayerId id) {
    if (id == LayerId::Static) {
        if (sealed_) {
            throw Error(ErrorCode::SealedLayer, "static layer is sealed");
        }
        return *static_;
    }
    return dynamic_;
}

const LayeredGraph::Layer& LayeredGraph::layer(LayerId id) const {
    return id == LayerId::Static ? *static_ : dynamic_;
}

void LayeredGraph::insert_node(Layer& target, GraphNode node, const EmbeddingVector* precomputed) {
    EmbeddingVector vec = precomputed ? *precomputed : embed(*lexicon_, node_text(node));
    if (!vec.is_zero()) {
        target.index.insert_or_assign(node.id, std::move(vec));
    }
    target.position.emplace(node.id, target.nodes.size());
    target.nodes.push_back(std::move(node));
}

void LayeredGraph::add_node(LayerId id, GraphNode node) {
    Layer& target = mutable_layer(id);
    validate_node(node);
    if (find_node(node.id)) {
        throw Error(ErrorCode::DuplicateNodeId, node.id);
    }
    insert_node(target, std::move(node), nullptr);
}

void LayeredGraph::add_edge(LayerId id, GraphEdge edge) {
    Layer& target = mutable_layer(id);
    if (edge.src == edge.dst) {
        throw Error(ErrorCode::MalformedGraphFile, "self-loop on '" + edge.src + "'");
    }
    for (const auto* endpoint : {&edge.src, &edge.dst}) {
        if (!find_node(*endpoint)) {
            throw Error(ErrorCode::DanglingEdge, "edge endpoint '" + *endpoint + "' does not exist");
        }
    }
    for (auto which : {LayerId::Static, LayerId::Dynamic}) {
        const auto& existing = layer(which).edges;
        if (std::find(existing.begin(), existing.end(), edge) != existing.end()) {
            return;
        }
    }
    target.adjacency[edge.src].push_back(edge.dst);
    target.adjacency[edge.dst].push_back(edge.src);
    target.edges.push_back(std::move(edge));
}

void LayeredGraph::update_node(GraphNode node) {
    auto where = layer_of(node.id);
    if (!where) {
        throw Error(ErrorCode::UnknownNode, node.id);
    }
    if (*where == LayerId::Static) {
        throw Error(ErrorCode::SealedLayer, "cannot update static node '" + node.id + "'");
    }
    validate_node(node);
    auto vec = embed(*lexicon_, node_text(node));
    if (vec.is_zero()) {
        dynamic_.index.erase(node.id);
    } else {
        dynamic_.index.insert_or_assign(node.id, std::move(vec));
    }
    dynamic_.nodes[dynamic_.position.at(node.id)] = std::move(node);
}

void LayeredGraph::seal_static() { sealed_ = true; }

const GraphNode* LayeredGraph::find_node(std::string_view id) const {
    for (const Layer* l : std::initializer_list<const Layer*>{static_.get(), &dynamic_}) {
        if (auto it = l->position.find(std::string(id)); it != l->position.end()) {
            return &l->nodes[it->second];
        }
    }
    return nullptr;
}

std::optional<LayerId> LayeredGraph::layer_of(std::string_view id) const {
    if (static_->position.contains(std::string(id))) {
        return LayerId::Static;
    }
    if (dynamic_.position.contains(std::string(id))) {
        return LayerId::Dynamic;
    }
    return std::nullopt;
}

std::span<const GraphNode> LayeredGraph::nodes(LayerId id) const { return layer(id).nodes; }
std::span<const GraphEdge> LayeredGraph::edges(LayerId id) const { return layer(id).edges; }

std::size_t LayeredGraph::node_count() const { return static_->nodes.size() + dynamic_.nodes.size(); }
std::size_t LayeredGraph::edge_count() const { return static_->edges.size() + dynamic_.edges.size(); }

const EmbeddingVector* LayeredGraph::embedding(std::string_view id) const {
    for (const Layer* l : std::initializer_list<const Layer*>{static_.get(), &dynamic_}) {
        if (auto it = l->index.find(std::string(id)); it != l->index.end()) {
            return &it->second;
        }
    }
    return nullptr;
}

const std::map<std::string, EmbeddingVector>& LayeredGraph::index(LayerId id) const {
    return layer(id).index;
}

Subgraph LayeredGraph::neighborhood(std::string_view id, int hops) const {
    if (!find_node(id)) {
        throw Error(ErrorCode::UnknownNode, std::string(id));
    }
    if (hops < 0) {
        throw Error(ErrorCode::InvalidConfig, "hops must be non-negative");
    }
    std::set<std::string> visited{std::string(id)};
    std::vector<std::string> order{std::string(id)};
    std::vector<std::string> ring{std::string(id)};
    for (int h = 0; h < hops && !ring.empty(); ++h) {
        std::set<std::string> next;
        for (const auto& current : ring) {
            for (const Layer* l : std::initializer_list<const Layer*>{static_.get(), &dynamic_}) {
                auto it = l->adjacency.find(current);
                if (it == l->adjacency.end()) {
                    continue;
                }
                for (const auto& neighbour : it->second) {
                    if (!visited.contains(neighbour)) {
                        next.insert(neighbour);
                    }
                }
            }
        }
        ring.assign(next.begin(), next.end());
        for (const auto& n : ring) {
            visited.insert(n);
            order.push_back(n);
        }
    }

    Subgraph out;
    out.nodes.reserve(order.size());
    for (const auto& n : order) {
        out.nodes.push_back(*find_node(n));
    }
    for (const Layer* l : std::initializer_list<const Layer*>{static_.get(), &dynamic_}) {
        for (const auto& e : l->edges) {
            if (visited.contains(e.src) && visited.contains(e.dst)) {
                out.edges.push_back(e);
            }
        }
    }
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

void LayeredGraph::ensure_current_event_node() {
    if (find_node(kCurrentEventNodeId)) {
        return;
    }
    GraphNode note;
    note.id = std::string(kCurrentEventNodeId);
    note.kind = NodeKind::Note;
    note.label = "current event";
    note.description = "live exercise alerts and tickets observed during the current event";
    insert_node(dynamic_, std::move(note), nullptr);
}

std::string LayeredGraph::record_alert(const Alert& alert, const EmbeddingVector& vec) {
    ensure_current_event_node();

    GraphNode node;
    node.id = alert_node_id(alert.id);
    node.kind = NodeKind::AlertEvent;
    // label + " " + description reproduces alert_text, so the node's index
    // entry is exactly the alert's embedding.
    node.label = alert.title;
    node.description = alert.full_log;
    node.attrs = {{"alert_id", alert.id},
                  {"rule_id", alert.rule_id},
                  {"priority", std::to_string(alert.priority)},
                  {"agent", alert.agent},
                  {"timestamp", format_iso8601(alert.timestamp)}};
    if (find_node(node.id)) {
        throw Error(ErrorCode::DuplicateNodeId, node.id);
    }
    const std::string id = node.id;
    insert_node(dynamic_, std::move(node), &vec);

    const GraphNode* host = nullptr;
    for (const Layer* l : std::initializer_list<const Layer*>{static_.get(), &dynamic_}) {
        for (const auto& candidate : l->nodes) {
            if (candidate.kind == NodeKind::Host && candidate.label == alert.agent) {
                host = &candidate;
                break;
            }
        }
        if (host) {
            break;
        }
    }
    if (host) {
        add_edge(LayerId::Dynamic, {host->id, id, Relation::Triggered});
    } else {
        warnings_.push_back("no Host node for agent '" + alert.agent + "' (alert " + alert.id + ")");
    }
    add_edge(LayerId::Dynamic, {id, std::string(kCurrentEventNodeId), Relation::ObservedDuring});
    return id;
}

std::string LayeredGraph::record_ticket(const CaseTicket& ticket) {
    const std::string alert_node = alert_node_id(ticket.alert_id);
    const GraphNode* event = find_node(alert_node);
    if (!event || event->kind != NodeKind::AlertEvent) {
        throw Error(ErrorCode::UnknownAlertEvent, ticket.alert_id);
    }
    GraphNode node;
    node.id = ticket_node_id(ticket.ticket_id);
    node.kind = NodeKind::Ticket;
    node.label = ticket.title;
    node.description = ticket.body.empty() ? ticket.title : ticket.body;
    node.attrs = {{"ticket_id", ticket.ticket_id},
                  {"alert_id", ticket.alert_id},
                  {"status", std::string(to_string(ticket.status))}};
    add_node(LayerId::Dynamic, std::move(node));
    add_edge(LayerId::Dynamic, {ticket_node_id(ticket.ticket_id), alert_node, Relation::CreatedFrom});
    return ticket_node_id(ticket.ticket_id);
}

json LayeredGraph::to_snapshot_json() const {
    json nodes = json::array();
    json edges = json::array();
    for (auto which : {LayerId::Static, LayerId::Dynamic}) {
        for (const auto& n : layer(which).nodes) {
            json j = node_to_json(n);
            j["layer"] = to_string(which);
            nodes.push_back(std::move(j));
        }
        for (const auto& e : layer(which).edges) {
            json j = edge_to_json(e);
            j["layer"] = to_string(which);
            edges.push_back(std::move(j));
        }
    }
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

void LayeredGraph::save_snapshot(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write snapshot " + path.string());
    }
    out << to_snapshot_json().dump(2) << '\n';
}

LayeredGraph load_static(const json& doc, std::shared_ptr<const Lexicon> lexicon) {
    if (!doc.is_object()) {
        throw Error(ErrorCode::MalformedGraphFile, "graph document must be an object");
    }
    LayeredGraph graph(std::move(lexicon));
    for (const auto& n : array_field(doc, "nodes")) {
        graph.add_node(LayerId::Static, node_from_json(n));
    }
    for (const auto& e : array_field(doc, "edges")) {
        graph.add_edge(LayerId::Static, edge_from_json(e));
    }
    graph.seal_static();
    return graph;
}

LayeredGraph load_static(const std::filesystem::path& path, std::shared_ptr<const Lexicon> lexicon) {
    return load_static(read_json_file(path), std::move(lexicon));
}

LayeredGraph load_snapshot(const std::filesystem::path& path, std::shared_ptr<const Lexicon> lexicon) {
    json doc = read_json_file(path);
    if (!doc.is_object()) {
        throw Error(ErrorCode::MalformedGraphFile, "graph document must be an object");
    }
    auto layer_field = [](const json& j) {
        auto l = j.value("layer", "static");
        if (l != "static" && l != "dynamic") {
            throw Error(ErrorCode::MalformedGraphFile, "unknown layer '" + l + "'");
        }
        return l == "static" ? LayerId::Static : LayerId::Dynamic;
    };
    LayeredGraph graph(std::move(lexicon));
    const auto& nodes = array_field(doc, "nodes");
    const auto& edges = array_field(doc, "edges");
    for (auto pass : {LayerId::Static, LayerId::Dynamic}) {
        for (const auto& n : nodes) {
            if (layer_field(n) == pass) {
                graph.add_node(pass, node_from_json(n));
            }
        }
        if (pass == LayerId::Static) {
            for (const auto& e : edges) {
                if (layer_field(e) == LayerId::Static) {
                    graph.add_edge(LayerId::Static, edge_from_json(e));
                }
            }
            graph.seal_static();
        }
    }
    for (const auto& e : edges) {
        if (layer_field(e) == LayerId::Dynamic) {
            graph.add_edge(LayerId::Dynamic, edge_from_json(e));
        }
    }
    return graph;
}

GraphStore::GraphStore(LayeredGraph graph) : graph_(std::move(graph)) {}

std::shared_ptr<const LayeredGraph> GraphStore::snapshot() const {
    std::lock_guard lock(mutex_);
    if (!cached_) {
        cached_ = std::make_shared<const LayeredGraph>(graph_);
    }
    return cached_;
}

std::uint64_t GraphStore::version() const {
    std::lock_guard lock(mutex_);
    return version_;
}

} // namespace cyberally
