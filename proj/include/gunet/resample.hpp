#pragma once

// Grid-aware graph resampling: 2x2/stride-2 max pooling of road graphs and
// upsampling through a bipartite coarse->fine graph processed by a GN block.

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gunet/gn_block.hpp"
#include "gunet/graph.hpp"
#include "gunet/ops.hpp"

namespace gunet {

struct PoolResult {
    RoadGraph graph;                      // half resolution, extents ceil(H/2) x ceil(W/2)
    std::vector<Index> node_assignment;   // fine node -> coarse node
    std::vector<Index> edge_assignment;   // fine edge -> coarse edge, -1 when window-internal
};

/// Structure of the pooled graph. A coarse edge exists iff some fine edge
/// joins two different windows; window-internal edges vanish.
inline PoolResult pool_graph(const RoadGraph& g) {
    if (g.num_nodes() == 0) throw DataError("pool: empty graph");
    const std::size_t ch = (g.height() + 1) / 2;
    const std::size_t cw = (g.width() + 1) / 2;

    std::vector<char> occupied(ch * cw, 0);
    for (const auto& p : g.nodes()) occupied[static_cast<std::size_t>(p.row / 2) * cw + static_cast<std::size_t>(p.col / 2)] = 1;
    std::vector<Pos> nodes;
    std::vector<Index> window_id(ch * cw, -1);
    for (std::size_t w = 0; w < ch * cw; ++w) {
        if (!occupied[w]) continue;
        window_id[w] = static_cast<Index>(nodes.size());
        nodes.push_back({static_cast<long>(w / cw), static_cast<long>(w % cw)});
    }

    PoolResult out;
    out.node_assignment.reserve(g.num_nodes());
    for (const auto& p : g.nodes())
        out.node_assignment.push_back(window_id[static_cast<std::size_t>(p.row / 2) * cw + static_cast<std::size_t>(p.col / 2)]);

    std::vector<Edge> coarse_edges;
    for (const auto& e : g.edges()) {
        const Index a = out.node_assignment[static_cast<std::size_t>(e.sender)];
        const Index b = out.node_assignment[static_cast<std::size_t>(e.receiver)];
        if (a != b) coarse_edges.push_back({a, b});
    }
    std::sort(coarse_edges.begin(), coarse_edges.end());
    coarse_edges.erase(std::unique(coarse_edges.begin(), coarse_edges.end()), coarse_edges.end());

    out.edge_assignment.reserve(g.num_edges());
    for (const auto& e : g.edges()) {
        const Edge ce{out.node_assignment[static_cast<std::size_t>(e.sender)], out.node_assignment[static_cast<std::size_t>(e.receiver)]};
        if (ce.sender == ce.receiver) {
            out.edge_assignment.push_back(-1);
            continue;
        }
        const auto it = std::lower_bound(coarse_edges.begin(), coarse_edges.end(), ce);
        out.edge_assignment.push_back(static_cast<Index>(it - coarse_edges.begin()));
    }
    out.graph = RoadGraph::from_parts(ch, cw, std::move(nodes), std::move(coarse_edges));
    return out;
}

/// Feature-wise max over each window's nodes and over the fine edges merged
/// into each coarse edge.
inline std::pair<Tensor, Tensor> pool_features(const PoolResult& pr, const Tensor& nodes, const Tensor& edges) {
    return {segment_max(nodes, pr.node_assignment, pr.graph.num_nodes()),
            segment_max(edges, pr.edge_assignment, pr.graph.num_edges())};
}

struct Pooled {
    PoolResult result;
    Tensor nodes;
    Tensor edges;
};

inline Pooled pool(const RoadGraph& g, const Tensor& nodes, const Tensor& edges) {
    PoolResult pr = pool_graph(g);
    auto [v, e] = pool_features(pr, nodes, edges);
    return {std::move(pr), std::move(v), std::move(e)};
}

/// Where a coarse node sits inside its 2x2 window of the fine grid.
///   Corner: at the scaled position (2R, 2C); the four cells classify as
///           SELF, NE, SE, SE and the block needs a SELF transform.
///   Center: at the window centre (2R+1/2, 2C+1/2); the cells classify as
///           NW, NE, SW, SE. This is the anchor that commutes with point
///           reflection of even-extent grids.
enum class UpsampleAnchor { Center, Corner };

/// Node ids 0..num_input-1 are the coarse (input) nodes, followed by the
/// num_target fine nodes. Edges only run input -> target.
struct UpsamplingGraph {
    std::size_t num_input = 0;
    std::size_t num_target = 0;
    UpsampleAnchor anchor = UpsampleAnchor::Center;
    std::vector<Edge> edges;
    std::vector<Quadrant> labels;
    MessageTopology topology;
};

inline Quadrant upsample_label(UpsampleAnchor anchor, long coarse_row, long coarse_col, long fine_row, long fine_col) {
    if (anchor == UpsampleAnchor::Corner) return classify_edge(fine_row - 2 * coarse_row, fine_col - 2 * coarse_col);
    // Doubled coordinates keep the half-pixel offset integral; the delta is odd, never zero.
    return classify_edge(2 * fine_row - (4 * coarse_row + 1), 2 * fine_col - (4 * coarse_col + 1));
}

inline UpsamplingGraph build_upsampling_graph(const RoadGraph& input, const RoadGraph& target,
                                              UpsampleAnchor anchor = UpsampleAnchor::Center) {
    if (input.height() != (target.height() + 1) / 2 || input.width() != (target.width() + 1) / 2) {
        throw ShapeError("build_upsampling_graph", Shape{input.height(), input.width()}, Shape{target.height(), target.width()},
                         "input extent must be ceil(target extent / 2)");
    }
    UpsamplingGraph ug;
    ug.num_input = input.num_nodes();
    ug.num_target = target.num_nodes();
    ug.anchor = anchor;
    std::vector<std::vector<Index>> in_window(input.num_nodes());
    for (std::size_t t = 0; t < target.num_nodes(); ++t) {
        const auto& p = target.nodes()[t];
        const Index c = input.node_at(p.row / 2, p.col / 2);
        if (c >= 0) in_window[static_cast<std::size_t>(c)].push_back(static_cast<Index>(t));
    }
    for (std::size_t c = 0; c < input.num_nodes(); ++c) {
        const auto& cp = input.nodes()[c];
        for (Index t : in_window[c]) {
            const auto& tp = target.nodes()[static_cast<std::size_t>(t)];
            ug.edges.push_back({static_cast<Index>(c), static_cast<Index>(ug.num_input) + t});
            ug.labels.push_back(upsample_label(anchor, cp.row, cp.col, tp.row, tp.col));
        }
    }
    ug.topology = MessageTopology::make(ug.num_input + ug.num_target, ug.edges, ug.labels);
    return ug;
}

struct Upsampled {
    Tensor nodes;   // [num_target, d_v]
    Tensor global;  // [1, d_u]
};

/// Zero-initialised target nodes receive messages from the input nodes in one
/// GN pass over the upsampling graph; edge features start as zero vectors.
inline Upsampled upsample(const UpsamplingGraph& ug, const Tensor& input_nodes, const Tensor& global,
                          const GnBlockParams& params, const GnOptions& opts = {}) {
    if (ug.anchor == UpsampleAnchor::Corner && params.directional && !params.with_self) {
        throw ConfigError("upsample: corner-anchored upsampling requires a SELF edge transform");
    }
    const std::size_t dv = params.dims.node_in;
    const Tensor nodes = concat_rows({input_nodes, Tensor::zeros({ug.num_target, dv})});
    const Tensor edges = Tensor::zeros({ug.edges.size(), params.dims.edge_in});
    const GraphState out = gn_forward(ug.topology, {nodes, edges, global}, params, opts);
    std::vector<Index> targets(ug.num_target);
    for (std::size_t t = 0; t < ug.num_target; ++t) targets[t] = static_cast<Index>(ug.num_input + t);
    return {gather_rows(out.nodes, targets), out.global};
}

}  // namespace gunet
