#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anglenas/errors.hpp"
#include "anglenas/rng.hpp"

namespace anglenas {

constexpr const char* kSpaceSchema = "anglenas-space-v1";

enum class OpKind { parametric, identity, pooling, none };

inline const char* to_string(OpKind k) {
    switch (k) {
    case OpKind::parametric: return "parametric";
    case OpKind::identity: return "identity";
    case OpKind::pooling: return "pooling";
    case OpKind::none: return "none";
    }
    return "?";
}

inline OpKind op_kind_from_string(const std::string& s) {
    if (s == "parametric") return OpKind::parametric;
    if (s == "identity") return OpKind::identity;
    if (s == "pooling") return OpKind::pooling;
    if (s == "none") return OpKind::none;
    throw ConfigError("unknown operator kind: " + s);
}

// Identity of a candidate operator: (edge index, slot index) as assigned by
// the original space. Shrunk spaces keep the original ids so that scores,
// logs and benchmark encodings stay comparable across shrink iterations.
struct OperatorId {
    std::uint32_t edge = 0;
    std::uint32_t slot = 0;

    auto operator<=>(const OperatorId&) const = default;
};

struct OperatorSpec {
    OpKind kind = OpKind::parametric;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t pool_k = 0; // pooling only
    OperatorId id;

    // Entries of the associated weight tensor: a parametric operator owns an
    // [out x in] matrix, a pooling operator a fixed k*k kernel of 1/k^2.
    std::size_t weight_count() const {
        switch (kind) {
        case OpKind::parametric: return in_dim * out_dim;
        case OpKind::pooling: return pool_k * pool_k;
        default: return 0;
        }
    }
};

struct Edge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::vector<OperatorSpec> ops;
};

// A search space: DAG with a unique root (node 0), a unique leaf (last
// node) and one candidate-operator list per edge. Immutable after
// construction; shrinking produces new instances via without_operators().
class SupernetGraph {
public:
    SupernetGraph(std::vector<std::string> node_names, std::vector<Edge> edges,
                  std::size_t width, std::size_t input_dim, std::size_t num_classes,
                  std::vector<std::vector<std::uint32_t>> blocks = {})
        : nodes_(std::move(node_names)), edges_(std::move(edges)), width_(width),
          input_dim_(input_dim), num_classes_(num_classes), blocks_(std::move(blocks)) {
        validate();
        index();
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<std::string>& node_names() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(std::size_t e) const { return edges_[e]; }
    std::size_t width() const { return width_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    std::uint32_t root() const { return 0; }
    std::uint32_t leaf() const { return std::uint32_t(nodes_.size() - 1); }

    bool has_blocks() const { return !blocks_.empty(); }
    const std::vector<std::vector<std::uint32_t>>& blocks() const { return blocks_; }

    // Out-edge indices per node, sorted by (target node, edge index); path
    // enumeration order derives from this.
    const std::vector<std::uint32_t>& out_edges(std::uint32_t node) const {
        return out_edges_[node];
    }

    std::size_t total_operator_count() const {
        std::size_t n = 0;
        for (const auto& e : edges_) n += e.ops.size();
        return n;
    }

    std::vector<OperatorId> all_operator_ids() const {
        std::vector<OperatorId> ids;
        ids.reserve(total_operator_count());
        for (const auto& e : edges_)
            for (const auto& op : e.ops) ids.push_back(op.id);
        return ids;
    }

    // Slot index in the current candidate list of the operator with the
    // given original id, if still live.
    std::optional<std::uint32_t> find_slot(OperatorId id) const {
        if (id.edge >= edges_.size()) return std::nullopt;
        const auto& ops = edges_[id.edge].ops;
        for (std::uint32_t s = 0; s < ops.size(); ++s)
            if (ops[s].id == id) return s;
        return std::nullopt;
    }

    // A copy of this space with the listed operators removed. Throws if a
    // removal would empty an edge.
    SupernetGraph without_operators(const std::vector<OperatorId>& removed) const {
        std::vector<Edge> kept = edges_;
        for (const auto& id : removed) {
            if (id.edge >= kept.size()) throw Error("without_operators: bad edge index");
            auto& ops = kept[id.edge].ops;
            auto it = std::find_if(ops.begin(), ops.end(),
                                   [&](const OperatorSpec& o) { return o.id == id; });
            if (it == ops.end()) throw Error("without_operators: operator not live");
            ops.erase(it);
            if (ops.empty()) throw Error("without_operators: edge would become empty");
        }
        return SupernetGraph(nodes_, std::move(kept), width_, input_dim_, num_classes_, blocks_);
    }

    // Structural hash used to key checkpoints and benchmark tables.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL; // FNV-1a 64
        auto feed = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 1099511628211ULL;
            }
        };
        auto feed_str = [&](const std::string& s) {
            feed(s.size());
            for (char c : s) {
                h ^= std::uint8_t(c);
                h *= 1099511628211ULL;
            }
        };
        feed(width_);
        feed(input_dim_);
        feed(num_classes_);
        feed(nodes_.size());
        for (const auto& n : nodes_) feed_str(n);
        feed(edges_.size());
        for (const auto& e : edges_) {
            feed(e.src);
            feed(e.dst);
            feed(e.ops.size());
            for (const auto& op : e.ops) {
                feed(std::uint64_t(op.kind));
                feed(op.in_dim);
                feed(op.out_dim);
                feed(op.pool_k);
                feed(op.id.edge);
                feed(op.id.slot);
            }
        }
        feed(blocks_.size());
        for (const auto& b : blocks_) {
            feed(b.size());
            for (auto e : b) feed(e);
        }
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema"] = kSpaceSchema;
        j["width"] = width_;
        j["input_dim"] = input_dim_;
        j["num_classes"] = num_classes_;
        j["nodes"] = nodes_;
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& e : edges_) {
            nlohmann::json je;
            je["src"] = e.src;
            je["dst"] = e.dst;
            nlohmann::json ops = nlohmann::json::array();
            for (const auto& op : e.ops) {
                nlohmann::json jo;
                jo["kind"] = to_string(op.kind);
                if (op.kind == OpKind::pooling) jo["k"] = op.pool_k;
                jo["id"] = {op.id.edge, op.id.slot};
                ops.push_back(jo);
            }
            je["ops"] = ops;
            edges.push_back(je);
        }
        j["edges"] = edges;
        if (!blocks_.empty()) j["blocks"] = blocks_;
        return j;
    }

    static SupernetGraph from_json(const nlohmann::json& j) {
        if (!j.contains("schema") || j["schema"] != kSpaceSchema)
            throw ConfigError("space file: missing or unsupported schema id");
        const std::size_t width = j.at("width").get<std::size_t>();
        const std::size_t input_dim = j.value("input_dim", std::size_t(2));
        const std::size_t num_classes = j.value("num_classes", std::size_t(4));
        std::vector<std::string> nodes = j.at("nodes").get<std::vector<std::string>>();
        std::vector<Edge> edges;
        std::uint32_t edge_idx = 0;
        for (const auto& je : j.at("edges")) {
            Edge e;
            e.src = je.at("src").get<std::uint32_t>();
            e.dst = je.at("dst").get<std::uint32_t>();
            std::uint32_t slot_idx = 0;
            for (const auto& jo : je.at("ops")) {
                OperatorSpec op;
                op.kind = op_kind_from_string(jo.at("kind").get<std::string>());
                op.in_dim = op.out_dim = (op.kind == OpKind::none) ? 0 : width;
                if (op.kind == OpKind::pooling) op.pool_k = jo.at("k").get<std::size_t>();
                if (jo.contains("id"))
                    op.id = {jo["id"][0].get<std::uint32_t>(), jo["id"][1].get<std::uint32_t>()};
                else
                    op.id = {edge_idx, slot_idx};
                ++slot_idx;
                e.ops.push_back(op);
            }
            ++edge_idx;
            edges.push_back(std::move(e));
        }
        std::vector<std::vector<std::uint32_t>> blocks;
        if (j.contains("blocks")) blocks = j["blocks"].get<std::vector<std::vector<std::uint32_t>>>();
        return SupernetGraph(std::move(nodes), std::move(edges), width, input_dim, num_classes,
                             std::move(blocks));
    }

    static SupernetGraph load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoFailure("cannot open space file: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("space file " + path.string() + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoFailure("cannot write space file: " + path.string());
        out << to_json().dump(2) << "\n";
    }

private:
    void validate() const {
        const std::size_t m = nodes_.size();
        if (m < 2) throw ConfigError("space needs at least two nodes");
        std::vector<std::size_t> indeg(m, 0), outdeg(m, 0);
        for (const auto& e : edges_) {
            if (e.src >= m || e.dst >= m) throw ConfigError("edge endpoint out of range");
            // Nodes must be listed in topological order; acyclicity, the
            // unique root at index 0 and the unique leaf at the last index
            // all follow from src < dst plus the degree checks below.
            if (e.src >= e.dst) throw ConfigError("edges must go from lower to higher node index");
            if (e.ops.empty()) throw ConfigError("edge carries no candidate operator");
            indeg[e.dst]++;
            outdeg[e.src]++;
        }
        for (std::size_t n = 1; n < m; ++n)
            if (indeg[n] == 0) throw ConfigError("only the first node may be a root");
        for (std::size_t n = 0; n + 1 < m; ++n)
            if (outdeg[n] == 0) throw ConfigError("only the last node may be a leaf");
        if (!blocks_.empty()) {
            std::vector<int> owner(edges_.size(), -1);
            for (std::size_t b = 0; b < blocks_.size(); ++b)
                for (auto e : blocks_[b]) {
                    if (e >= edges_.size()) throw ConfigError("block references unknown edge");
                    if (owner[e] != -1) throw ConfigError("blocks overlap on an edge");
                    owner[e] = int(b);
                }
            for (std::size_t e = 0; e < edges_.size(); ++e)
                if (owner[e] == -1) throw ConfigError("blocks do not cover every edge");
        }
    }

    void index() {
        out_edges_.assign(nodes_.size(), {});
        for (std::uint32_t e = 0; e < edges_.size(); ++e) out_edges_[edges_[e].src].push_back(e);
        for (auto& v : out_edges_)
            std::sort(v.begin(), v.end(), [this](std::uint32_t a, std::uint32_t b) {
                if (edges_[a].dst != edges_[b].dst) return edges_[a].dst < edges_[b].dst;
                return a < b;
            });
    }

    std::vector<std::string> nodes_;
    std::vector<Edge> edges_;
    std::size_t width_;
    std::size_t input_dim_;
    std::size_t num_classes_;
    std::vector<std::vector<std::uint32_t>> blocks_;
    std::vector<std::vector<std::uint32_t>> out_edges_;
};

// A child model: one chosen slot per edge of the parent space. Edges whose
// chosen operator is "none" are absent from the derived subgraph.
struct ChildModel {
    const SupernetGraph* space = nullptr;
    std::vector<std::uint32_t> choice; // slot index per edge

    const OperatorSpec& op_on(std::size_t e) const { return space->edge(e).ops[choice[e]]; }

    bool edge_present(std::size_t e) const { return op_on(e).kind != OpKind::none; }

    // Original-id encoding, the persistent key for benchmark tables.
    std::vector<std::int32_t> encoding() const {
        std::vector<std::int32_t> enc(choice.size());
        for (std::size_t e = 0; e < choice.size(); ++e) enc[e] = std::int32_t(op_on(e).id.slot);
        return enc;
    }

    bool contains(OperatorId id) const {
        return id.edge < choice.size() && op_on(id.edge).id == id;
    }

    // Root-to-leaf connectivity over the present edges.
    bool is_valid() const {
        std::vector<bool> reach(space->node_count(), false);
        reach[space->root()] = true;
        for (std::uint32_t n = 0; n < space->node_count(); ++n) {
            if (!reach[n]) continue;
            for (auto e : space->out_edges(n))
                if (edge_present(e)) reach[space->edge(e).dst] = true;
        }
        return reach[space->leaf()];
    }

    // Edges lying on at least one root-to-leaf path of the subgraph; forward
    // execution and training touch exactly these.
    std::vector<std::uint32_t> active_edges() const {
        const std::size_t m = space->node_count();
        std::vector<bool> from_root(m, false), to_leaf(m, false);
        from_root[space->root()] = true;
        for (std::uint32_t n = 0; n < m; ++n) {
            if (!from_root[n]) continue;
            for (auto e : space->out_edges(n))
                if (edge_present(e)) from_root[space->edge(e).dst] = true;
        }
        to_leaf[space->leaf()] = true;
        for (std::uint32_t n = std::uint32_t(m); n-- > 0;) {
            for (auto e : space->out_edges(n))
                if (edge_present(e) && to_leaf[space->edge(e).dst]) to_leaf[n] = true;
        }
        std::vector<std::uint32_t> act;
        for (std::uint32_t e = 0; e < space->edge_count(); ++e) {
            if (!edge_present(e)) continue;
            if (from_root[space->edge(e).src] && to_leaf[space->edge(e).dst]) act.push_back(e);
        }
        return act;
    }
};

using Path = std::vector<std::uint32_t>; // edge indices, root to leaf

// Number of root-to-leaf paths of the child, without materializing them.
inline std::uint64_t count_paths(const ChildModel& child) {
    const auto& g = *child.space;
    std::vector<std::uint64_t> ways(g.node_count(), 0);
    ways[g.root()] = 1;
    for (std::uint32_t n = 0; n < g.node_count(); ++n) {
        if (ways[n] == 0) continue;
        for (auto e : g.out_edges(n))
            if (child.edge_present(e)) ways[g.edge(e).dst] += ways[n];
    }
    return ways[g.leaf()];
}

// All root-to-leaf paths of the child as edge sequences, in lexicographic
// order of the visited node sequence (slot order breaks parallel-edge ties).
inline std::vector<Path> enumerate_paths(const ChildModel& child) {
    const auto& g = *child.space;
    std::vector<Path> paths;
    Path current;
    auto dfs = [&](auto&& self, std::uint32_t node) -> void {
        if (node == g.leaf()) {
            paths.push_back(current);
            return;
        }
        for (auto e : g.out_edges(node)) {
            if (!child.edge_present(e)) continue;
            current.push_back(e);
            self(self, g.edge(e).dst);
            current.pop_back();
        }
    };
    dfs(dfs, g.root());
    if (paths.empty()) throw InvalidChild("child has no root-to-leaf path");
    return paths;
}

// Combinatorial size |G|: product over edges of live candidate counts.
// Children invalidated by "none" choices are not excluded. Saturates at
// uint64 max.
inline std::uint64_t space_size(const SupernetGraph& space) {
    std::uint64_t prod = 1;
    for (const auto& e : space.edges()) {
        const std::uint64_t n = e.ops.size();
        if (n != 0 && prod > std::numeric_limits<std::uint64_t>::max() / n)
            return std::numeric_limits<std::uint64_t>::max();
        prod *= n;
    }
    return prod;
}

constexpr std::size_t kSampleRetryBudget = 1000;

// Uniform child sample; the optional constraint pins one edge to the given
// operator. Children disconnected by "none" choices are rejected and
// resampled.
inline ChildModel sample_child(const SupernetGraph& space, Rng& rng,
                               std::optional<OperatorId> containing = std::nullopt,
                               std::size_t retry_budget = kSampleRetryBudget) {
    std::optional<std::uint32_t> forced_slot;
    if (containing) {
        forced_slot = space.find_slot(*containing);
        if (!forced_slot) throw Error("sample_child: constrained operator is not in the space");
    }
    for (std::size_t attempt = 0; attempt < retry_budget; ++attempt) {
        ChildModel child{&space, {}};
        child.choice.resize(space.edge_count());
        for (std::uint32_t e = 0; e < space.edge_count(); ++e) {
            if (containing && containing->edge == e)
                child.choice[e] = *forced_slot;
            else
                child.choice[e] = std::uint32_t(rng.uniform_index(space.edge(e).ops.size()));
        }
        if (child.is_valid()) return child;
    }
    throw SamplingExhausted("no valid child found within the retry budget");
}

// --- builders -------------------------------------------------------------

struct OpMenuItem {
    OpKind kind;
    std::size_t pool_k = 2;
};

inline std::vector<OperatorSpec> make_op_list(const std::vector<OpMenuItem>& menu,
                                              std::uint32_t edge, std::size_t width) {
    std::vector<OperatorSpec> ops;
    for (std::uint32_t s = 0; s < menu.size(); ++s) {
        OperatorSpec op;
        op.kind = menu[s].kind;
        op.in_dim = op.out_dim = (op.kind == OpKind::none) ? 0 : width;
        if (op.kind == OpKind::pooling) op.pool_k = menu[s].pool_k;
        op.id = {edge, s};
        ops.push_back(op);
    }
    return ops;
}

// Complete DAG cell on n nodes: one edge per ordered pair (i, j), i < j,
// each carrying the same candidate menu.
inline SupernetGraph make_complete_cell(std::size_t n_nodes, std::size_t width,
                                        const std::vector<OpMenuItem>& menu,
                                        std::size_t input_dim = 2, std::size_t num_classes = 4) {
    std::vector<std::string> nodes;
    for (std::size_t i = 0; i < n_nodes; ++i) nodes.push_back("n" + std::to_string(i));
    std::vector<Edge> edges;
    std::uint32_t e = 0;
    for (std::uint32_t i = 0; i < n_nodes; ++i)
        for (std::uint32_t j = i + 1; j < n_nodes; ++j)
            edges.push_back({i, j, make_op_list(menu, e++, width)});
    return SupernetGraph(std::move(nodes), std::move(edges), width, input_dim, num_classes);
}

// Linear chain of n_nodes - 1 edges, same menu everywhere.
inline SupernetGraph make_chain(std::size_t n_nodes, std::size_t width,
                                const std::vector<OpMenuItem>& menu, std::size_t input_dim = 2,
                                std::size_t num_classes = 4) {
    std::vector<std::string> nodes;
    for (std::size_t i = 0; i < n_nodes; ++i) nodes.push_back("n" + std::to_string(i));
    std::vector<Edge> edges;
    for (std::uint32_t i = 0; i + 1 < n_nodes; ++i)
        edges.push_back({i, i + 1, make_op_list(menu, i, width)});
    return SupernetGraph(std::move(nodes), std::move(edges), width, input_dim, num_classes);
}

// Chain of complete cells sharing boundary nodes; one block per cell.
inline SupernetGraph make_cell_chain(std::size_t n_cells, std::size_t nodes_per_cell,
                                     std::size_t width, const std::vector<OpMenuItem>& menu,
                                     std::size_t input_dim = 2, std::size_t num_classes = 4) {
    std::vector<std::string> nodes;
    const std::size_t total_nodes = n_cells * (nodes_per_cell - 1) + 1;
    for (std::size_t i = 0; i < total_nodes; ++i) nodes.push_back("n" + std::to_string(i));
    std::vector<Edge> edges;
    std::vector<std::vector<std::uint32_t>> blocks;
    std::uint32_t e = 0;
    for (std::size_t c = 0; c < n_cells; ++c) {
        const std::uint32_t base = std::uint32_t(c * (nodes_per_cell - 1));
        std::vector<std::uint32_t> block;
        for (std::uint32_t i = 0; i < nodes_per_cell; ++i)
            for (std::uint32_t j = i + 1; j < nodes_per_cell; ++j) {
                edges.push_back({base + i, base + j, make_op_list(menu, e, width)});
                block.push_back(e++);
            }
        blocks.push_back(std::move(block));
    }
    return SupernetGraph(std::move(nodes), std::move(edges), width, input_dim, num_classes,
                         std::move(blocks));
}

} // namespace anglenas
