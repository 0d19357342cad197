#pragma once

// Road graphs over raster street maps and their partition into the four
// geographic quadrant subgraphs.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gunet/error.hpp"
#include "gunet/raster.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

enum class Quadrant : std::uint8_t { NE = 0, SE = 1, SW = 2, NW = 3, SELF = 4 };

inline constexpr std::size_t kNumQuadrants = 5;
inline constexpr std::array<Quadrant, kNumQuadrants> kQuadrants = {Quadrant::NE, Quadrant::SE, Quadrant::SW,
                                                                   Quadrant::NW, Quadrant::SELF};

inline std::string_view quadrant_name(Quadrant q) {
    constexpr std::array<std::string_view, kNumQuadrants> names = {"NE", "SE", "SW", "NW", "SELF"};
    return names[static_cast<std::size_t>(q)];
}

inline Quadrant parse_quadrant(std::string_view s) {
    for (auto q : kQuadrants)
        if (quadrant_name(q) == s) return q;
    throw DataError("unknown quadrant label '" + std::string(s) + "'");
}

/// Label of a displacement with north = decreasing row. Cardinal directions
/// fall to the quadrant clockwise of them: E->NE, S->SE, W->SW, N->NW.
constexpr Quadrant classify_edge(long d_row, long d_col) {
    if (d_row == 0 && d_col == 0) return Quadrant::SELF;
    if (d_row <= 0 && d_col > 0) return Quadrant::NE;
    if (d_row > 0 && d_col >= 0) return Quadrant::SE;
    if (d_row >= 0 && d_col < 0) return Quadrant::SW;
    return Quadrant::NW;
}

/// Label permutation induced by point reflection: NE<->SW, SE<->NW, SELF fixed.
constexpr Quadrant mirror_quadrant(Quadrant q) {
    switch (q) {
        case Quadrant::NE: return Quadrant::SW;
        case Quadrant::SE: return Quadrant::NW;
        case Quadrant::SW: return Quadrant::NE;
        case Quadrant::NW: return Quadrant::SE;
        case Quadrant::SELF: return Quadrant::SELF;
    }
    return q;
}

struct Pos {
    long row = 0;
    long col = 0;
    friend auto operator<=>(const Pos&, const Pos&) = default;
};

struct Edge {
    Index sender = 0;
    Index receiver = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Edges of one message-passing group, in edge-id order.
struct EdgeGroup {
    std::vector<Index> edge_ids;
    std::vector<Index> senders;
    std::vector<Index> receivers;
    std::size_t size() const { return edge_ids.size(); }
};

/// Index lists a GN block needs: the per-quadrant partition and the full set.
struct MessageTopology {
    std::size_t num_nodes = 0;
    std::size_t num_edges = 0;
    std::array<EdgeGroup, kNumQuadrants> by_quadrant;
    EdgeGroup all;

    const EdgeGroup& group(Quadrant q) const { return by_quadrant[static_cast<std::size_t>(q)]; }

    static MessageTopology make(std::size_t num_nodes, const std::vector<Edge>& edges, const std::vector<Quadrant>& labels) {
        MessageTopology t;
        t.num_nodes = num_nodes;
        t.num_edges = edges.size();
        for (std::size_t k = 0; k < edges.size(); ++k) {
            for (EdgeGroup* g : {&t.by_quadrant[static_cast<std::size_t>(labels[k])], &t.all}) {
                g->edge_ids.push_back(static_cast<Index>(k));
                g->senders.push_back(edges[k].sender);
                g->receivers.push_back(edges[k].receiver);
            }
        }
        return t;
    }
};

enum class Adjacency { Four = 4, Eight = 8 };

class RoadGraph {
public:
    RoadGraph() = default;

    /// Validates positions and endpoints and labels every edge by
    /// classify_edge(receiver - sender).
    static RoadGraph from_parts(std::size_t height, std::size_t width, std::vector<Pos> nodes, std::vector<Edge> edges) {
        RoadGraph g;
        g.height_ = height;
        g.width_ = width;
        g.node_at_.assign(height * width, -1);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& p = nodes[i];
            if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= height || static_cast<std::size_t>(p.col) >= width) {
                throw DataError("road graph: node " + std::to_string(i) + " lies outside the raster");
            }
            auto& slot = g.node_at_[static_cast<std::size_t>(p.row) * width + static_cast<std::size_t>(p.col)];
            if (slot >= 0) throw DataError("road graph: duplicate node position");
            slot = static_cast<Index>(i);
        }
        g.labels_.reserve(edges.size());
        for (const auto& e : edges) {
            if (e.sender < 0 || e.receiver < 0 || static_cast<std::size_t>(e.sender) >= nodes.size() ||
                static_cast<std::size_t>(e.receiver) >= nodes.size()) {
                throw DataError("road graph: edge endpoint out of range");
            }
            const auto& s = nodes[static_cast<std::size_t>(e.sender)];
            const auto& r = nodes[static_cast<std::size_t>(e.receiver)];
            g.labels_.push_back(classify_edge(r.row - s.row, r.col - s.col));
        }
        g.nodes_ = std::move(nodes);
        g.edges_ = std::move(edges);
        g.topology_ = MessageTopology::make(g.nodes_.size(), g.edges_, g.labels_);
        return g;
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_edges() const { return edges_.size(); }
    const std::vector<Pos>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Quadrant>& labels() const { return labels_; }
    Quadrant label(std::size_t k) const { return labels_[k]; }
    const MessageTopology& topology() const { return topology_; }

    /// Node id at a pixel, or -1.
    Index node_at(long row, long col) const {
        if (row < 0 || col < 0 || static_cast<std::size_t>(row) >= height_ || static_cast<std::size_t>(col) >= width_) return -1;
        return node_at_[static_cast<std::size_t>(row) * width_ + static_cast<std::size_t>(col)];
    }

    /// Row-major pixel index of every node.
    std::vector<Index> pixel_index() const {
        std::vector<Index> out;
        out.reserve(nodes_.size());
        for (const auto& p : nodes_) out.push_back(p.row * static_cast<long>(width_) + p.col);
        return out;
    }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Pos> nodes_;
    std::vector<Edge> edges_;
    std::vector<Quadrant> labels_;
    std::vector<Index> node_at_;
    MessageTopology topology_;
};

/// One node per pixel with intensity > 0 (row-major ids) and one directed
/// edge per ordered pair of adjacent street pixels, sorted by (sender, receiver).
template <typename T>
RoadGraph build_road_graph(const Raster<T>& street, Adjacency adjacency = Adjacency::Eight) {
    if (street.height == 0 || street.width == 0) throw DataError("road graph: raster has zero extent");
    std::vector<Pos> nodes;
    for (std::size_t r = 0; r < street.height; ++r)
        for (std::size_t c = 0; c < street.width; ++c)
            if (street.at(r, c) > T{}) nodes.push_back({static_cast<long>(r), static_cast<long>(c)});
    if (nodes.empty()) throw DataError("empty road graph");

    std::vector<Index> id(street.height * street.width, -1);
    for (std::size_t i = 0; i < nodes.size(); ++i)
        id[static_cast<std::size_t>(nodes[i].row) * street.width + static_cast<std::size_t>(nodes[i].col)] = static_cast<Index>(i);

    // Row-major neighbour order keeps receivers ascending per sender.
    std::vector<Pos> offsets;
    for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (adjacency == Adjacency::Four && dr != 0 && dc != 0) continue;
            offsets.push_back({dr, dc});
        }

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (const auto& o : offsets) {
            const long r = nodes[i].row + o.row;
            const long c = nodes[i].col + o.col;
            if (r < 0 || c < 0 || r >= static_cast<long>(street.height) || c >= static_cast<long>(street.width)) continue;
            const Index j = id[static_cast<std::size_t>(r) * street.width + static_cast<std::size_t>(c)];
            if (j >= 0) edges.push_back({static_cast<Index>(i), j});
        }
    }
    return RoadGraph::from_parts(street.height, street.width, std::move(nodes), std::move(edges));
}

/// Point reflection (r,c) -> (H-1-r, W-1-c). Nodes are renumbered row-major
/// and edges sorted, so mirror_graph(build(S)) == build(mirror(S)).
inline RoadGraph mirror_graph(const RoadGraph& g) {
    const std::size_t n = g.num_nodes();
    const long H = static_cast<long>(g.height());
    const long W = static_cast<long>(g.width());
    std::vector<Pos> nodes(n);
    // Row-major keys reverse exactly under point reflection.
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = g.nodes()[i];
        nodes[n - 1 - i] = {H - 1 - p.row, W - 1 - p.col};
    }
    std::vector<Edge> edges;
    edges.reserve(g.num_edges());
    for (const auto& e : g.edges())
        edges.push_back({static_cast<Index>(n) - 1 - e.sender, static_cast<Index>(n) - 1 - e.receiver});
    std::sort(edges.begin(), edges.end());
    return RoadGraph::from_parts(g.height(), g.width(), std::move(nodes), std::move(edges));
}

/// Debug export: one "r1 c1 r2 c2 quadrant" line per edge.
inline std::string export_edges(const RoadGraph& g) {
    std::ostringstream os;
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto& s = g.nodes()[static_cast<std::size_t>(g.edges()[k].sender)];
        const auto& r = g.nodes()[static_cast<std::size_t>(g.edges()[k].receiver)];
        os << s.row << ' ' << s.col << ' ' << r.row << ' ' << r.col << ' ' << quadrant_name(g.label(k)) << '\n';
    }
    return os.str();
}

}  // namespace gunet
