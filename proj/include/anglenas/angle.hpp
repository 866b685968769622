#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "anglenas/graph.hpp"
#include "anglenas/weight_store.hpp"

namespace anglenas {

enum class WeightSource { current, init, base };
enum class VectorMode { full_graph, block_wise };

inline const char* to_string(VectorMode m) {
    return m == VectorMode::full_graph ? "full-graph" : "block-wise";
}

inline VectorMode vector_mode_from_string(const std::string& s) {
    if (s == "full-graph") return VectorMode::full_graph;
    if (s == "block-wise") return VectorMode::block_wise;
    throw ConfigError("unknown vector mode: " + s);
}

constexpr std::size_t kDefaultPathCap = 64;

struct SegmentProvenance {
    std::uint32_t path = 0; // path ordinal within the enumeration
    OperatorId op;
    std::size_t offset = 0;
    std::size_t length = 0;
};

// Concatenation of operator weights along every root-to-leaf path of a
// child. Identity contributes a zero-length segment, pooling its constant
// kernel, so two children with different structures produce different
// vectors even when their learnable weights coincide.
struct WeightVector {
    std::vector<double> values;
    std::vector<SegmentProvenance> provenance;
};

namespace detail {

inline const Matrix& source_tensor(const WeightStore& store, OperatorId id, WeightSource src) {
    switch (src) {
    case WeightSource::current: return store.entry(id).weight.value;
    case WeightSource::init: return store.init_of(id);
    case WeightSource::base: return store.base_of(id);
    }
    throw Error("unreachable");
}

inline void append_paths(const ChildModel& child, const WeightStore& store, WeightSource source,
                         const std::vector<Path>& paths, WeightVector& out) {
    for (std::uint32_t p = 0; p < paths.size(); ++p) {
        for (auto e : paths[p]) {
            const OperatorSpec& op = child.op_on(e);
            SegmentProvenance seg;
            seg.path = p;
            seg.op = op.id;
            seg.offset = out.values.size();
            if (op.kind == OpKind::parametric || op.kind == OpKind::pooling) {
                const Matrix& w = source_tensor(store, op.id, source);
                out.values.insert(out.values.end(), w.data.begin(), w.data.end());
                seg.length = w.data.size();
            } else {
                seg.length = 0; // identity
            }
            out.provenance.push_back(seg);
        }
    }
}

// Paths of the child restricted to one block, from the block's entry node
// to its exit node.
inline std::vector<Path> block_paths(const ChildModel& child,
                                     const std::vector<std::uint32_t>& block) {
    const SupernetGraph& g = *child.space;
    std::vector<std::uint32_t> present;
    for (auto e : block)
        if (child.edge_present(e)) present.push_back(e);
    if (present.empty()) return {};

    // entry/exit of the block, determined by the block's full edge set
    std::vector<std::uint32_t> nodes;
    for (auto e : block) {
        nodes.push_back(g.edge(e).src);
        nodes.push_back(g.edge(e).dst);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::vector<bool> has_in(g.node_count(), false), has_out(g.node_count(), false);
    for (auto e : block) {
        has_in[g.edge(e).dst] = true;
        has_out[g.edge(e).src] = true;
    }
    std::uint32_t entry = 0, exit = 0;
    std::size_t entries = 0, exits = 0;
    for (auto n : nodes) {
        if (!has_in[n]) {
            entry = n;
            ++entries;
        }
        if (!has_out[n]) {
            exit = n;
            ++exits;
        }
    }
    if (entries != 1 || exits != 1)
        throw Error("block-wise mode requires a unique entry and exit node per block");

    std::vector<std::vector<std::uint32_t>> out_edges(g.node_count());
    for (auto e : present) out_edges[g.edge(e).src].push_back(e);
    for (auto& v : out_edges)
        std::sort(v.begin(), v.end(), [&g](std::uint32_t a, std::uint32_t b) {
            if (g.edge(a).dst != g.edge(b).dst) return g.edge(a).dst < g.edge(b).dst;
            return a < b;
        });
    std::vector<Path> paths;
    Path current;
    auto dfs = [&](auto&& self, std::uint32_t node) -> void {
        if (node == exit) {
            paths.push_back(current);
            return;
        }
        for (auto e : out_edges[node]) {
            current.push_back(e);
            self(self, g.edge(e).dst);
            current.pop_back();
        }
    };
    dfs(dfs, entry);
    return paths;
}

} // namespace detail

// Algorithm: enumerate the child's root-to-leaf paths in deterministic
// order, concatenate the flattened weights of each path's operators in path
// order, then concatenate across paths. Block-wise mode applies the same
// rule within each block (entry/exit standing in for root/leaf) and
// concatenates blocks in order; it exists because the full-graph path count
// grows exponentially with the node count.
inline WeightVector build_weight_vector(const ChildModel& child, const WeightStore& store,
                                        WeightSource source,
                                        VectorMode mode = VectorMode::full_graph,
                                        std::size_t path_cap = kDefaultPathCap) {
    WeightVector out;
    if (mode == VectorMode::full_graph) {
        const std::uint64_t n_paths = count_paths(child);
        if (n_paths == 0) throw InvalidChild("child has no root-to-leaf path");
        if (n_paths > path_cap)
            throw PathExplosion("child has " + std::to_string(n_paths) +
                                " root-to-leaf paths (cap " + std::to_string(path_cap) +
                                "); use block-wise mode");
        detail::append_paths(child, store, source, enumerate_paths(child), out);
    } else {
        if (!child.space->has_blocks())
            throw Error("block-wise vector construction needs block boundaries");
        if (!child.is_valid()) throw InvalidChild("child has no root-to-leaf path");
        for (const auto& block : child.space->blocks()) {
            const auto paths = detail::block_paths(child, block);
            if (paths.size() > path_cap)
                throw PathExplosion("block has " + std::to_string(paths.size()) +
                                    " paths (cap " + std::to_string(path_cap) + ")");
            detail::append_paths(child, store, source, paths, out);
        }
    }
    if (out.values.empty())
        throw EmptyVector("weight vector has length zero (all-identity child)");
    return out;
}

// arccos of the normalized inner product of two equally-built vectors.
// Accumulation runs in extended precision and the cosine is clamped before
// acos; bitwise-identical vectors short-circuit to exactly zero.
inline double vector_angle(const WeightVector& a, const WeightVector& b) {
    if (a.values.size() != b.values.size())
        throw Error("vector_angle: mismatched construction");
    const std::size_t n = a.values.size();
    if (n > 0 &&
        std::memcmp(a.values.data(), b.values.data(), n * sizeof(double)) == 0)
        return 0.0;
    long double dot = 0.0L, na = 0.0L, nb = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        dot += (long double)a.values[i] * b.values[i];
        na += (long double)a.values[i] * a.values[i];
        nb += (long double)b.values[i] * b.values[i];
    }
    if (na == 0.0L || nb == 0.0L)
        throw ZeroNormVector("weight vector has zero norm");
    long double c = dot / (std::sqrt(na) * std::sqrt(nb));
    if (c > 1.0L) c = 1.0L;
    if (c < -1.0L) c = -1.0L;
    return double(std::acos(c));
}

// The angle-based metric of a child model: angle between the reference
// weight vector (initialization or resettable base) and the current one.
inline double angle_of_child(const ChildModel& child, const WeightStore& store,
                             WeightSource reference = WeightSource::base,
                             VectorMode mode = VectorMode::full_graph,
                             std::size_t path_cap = kDefaultPathCap) {
    if (reference == WeightSource::current)
        throw Error("angle_of_child: reference must be init or base");
    WeightVector ref, cur;
    try {
        ref = build_weight_vector(child, store, reference, mode, path_cap);
        cur = build_weight_vector(child, store, WeightSource::current, mode, path_cap);
    } catch (const EmptyVector& e) {
        throw ZeroNormVector(e.what());
    }
    return vector_angle(ref, cur);
}

} // namespace anglenas
