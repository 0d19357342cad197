#pragma once

// Direction-sensitive full GN block.
//
// Every edge k in quadrant subgraph g is updated by its own transform,
//   e'_k = ReLU([e_k | v_recv | v_send | u] W_g + b_g),
// nodes aggregate incoming messages per quadrant and concatenate the sums in
// the fixed order NE, SE, SW, NW[, SELF],
//   v'_i = ReLU([v_i | sum_NE | sum_SE | sum_SW | sum_NW | u] W_v + b_v),
// and the global state sees the summed new nodes and per-quadrant edge sums,
//   u' = ReLU([u | sum_i v'_i | sum_NE e' | ... ] W_u + b_u).
// With directional = false a single shared edge transform is used and the
// node update sees one aggregate over all incoming edges.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gunet/graph.hpp"
#include "gunet/ops.hpp"
#include "gunet/optim.hpp"

namespace gunet {

struct Affine {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    std::size_t in() const { return weight.dim(0); }
    std::size_t out() const { return weight.dim(1); }

    /// He-uniform weights, zero bias.
    static Affine init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
        const double limit = in > 0 ? std::sqrt(6.0 / static_cast<double>(in)) : 0.0;
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> w(in * out);
        for (auto& v : w) v = dist(rng);
        return {Tensor(Shape{in, out}, std::move(w), true), Tensor(Shape{out}, std::vector<double>(out, 0.0), true)};
    }
    static Affine zeros(std::size_t in, std::size_t out) {
        return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
    }

    Tensor apply(const Tensor& x) const { return affine(x, weight, bias); }

    Affine clone() const { return {copy_leaf(weight), copy_leaf(bias)}; }

    void append_named(NamedParams& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".W", weight);
        out.emplace_back(prefix + ".b", bias);
    }

    static Tensor copy_leaf(const Tensor& t) { return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true); }
};

struct GnDims {
    std::size_t node_in = 0;
    std::size_t edge_in = 0;
    std::size_t global_in = 0;
    std::size_t node_out = 0;
    std::size_t edge_out = 0;
    std::size_t global_out = 0;
};

struct GraphState {
    Tensor nodes;   // [N, d_v]
    Tensor edges;   // [M, d_e]
    Tensor global;  // [1, d_u]
};

struct GnOptions {
    /// Diagnostic mode: every transform sees u = 0 instead of the global state.
    bool zero_global = false;
};

struct GnBlockParams {
    GnDims dims;
    bool directional = true;
    bool with_self = false;
    std::vector<Affine> edge;  // NE, SE, SW, NW[, SELF] or one shared transform
    Affine node;
    Affine global;

    std::size_t num_groups() const { return directional ? (with_self ? 5 : 4) : 1; }

    static GnBlockParams init(const GnDims& d, bool directional, bool with_self, std::mt19937_64& rng) {
        GnBlockParams p;
        p.dims = d;
        p.directional = directional;
        p.with_self = directional && with_self;
        const std::size_t groups = p.num_groups();
        for (std::size_t g = 0; g < groups; ++g)
            p.edge.push_back(Affine::init(d.edge_in + 2 * d.node_in + d.global_in, d.edge_out, rng));
        p.node = Affine::init(d.node_in + groups * d.edge_out + d.global_in, d.node_out, rng);
        p.global = Affine::init(d.global_in + d.node_out + groups * d.edge_out, d.global_out, rng);
        // Rows reading the node and edge sums start at zero. The sums scale with
        // graph size and u feeds every node of the next block, so random rows
        // here compound the magnitude by roughly the node count per block.
        auto w = p.global.weight.data_mut();
        std::fill(w.begin() + static_cast<std::ptrdiff_t>(d.global_in * d.global_out), w.end(), 0.0);
        return p;
    }

    GnBlockParams clone() const {
        GnBlockParams p = *this;
        for (auto& e : p.edge) e = e.clone();
        p.node = node.clone();
        p.global = global.clone();
        return p;
    }

    std::string edge_name(std::size_t g) const {
        return directional ? std::string(quadrant_name(kQuadrants[g])) : std::string("shared");
    }

    void append_named(NamedParams& out, const std::string& prefix) const {
        for (std::size_t g = 0; g < edge.size(); ++g) edge[g].append_named(out, prefix + ".edge." + edge_name(g));
        node.append_named(out, prefix + ".node");
        global.append_named(out, prefix + ".global");
    }
};

namespace detail {

inline void check_cols(const std::string& what, const Tensor& t, std::size_t rows, std::size_t cols) {
    if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) throw ShapeError(what, t.shape(), Shape{rows, cols});
}

inline void check_affine(const std::string& what, const Affine& a, std::size_t in, std::size_t out) {
    if (a.weight.rank() != 2 || a.weight.dim(0) != in || a.weight.dim(1) != out) throw ShapeError(what + ".W", a.weight.shape(), Shape{in, out});
    if (a.bias.numel() != out) throw ShapeError(what + ".b", a.bias.shape(), Shape{out});
}

}  // namespace detail

inline GraphState gn_forward(const MessageTopology& topo, const GraphState& state, const GnBlockParams& p,
                             const GnOptions& opts = {}) {
    const auto& d = p.dims;
    const std::size_t n = topo.num_nodes;
    const std::size_t m = topo.num_edges;
    const std::size_t groups = p.num_groups();
    detail::check_cols("gn_forward: nodes", state.nodes, n, d.node_in);
    detail::check_cols("gn_forward: edges", state.edges, m, d.edge_in);
    detail::check_cols("gn_forward: global", state.global, 1, d.global_in);
    if (p.edge.size() != groups) throw ConfigError("gn_forward: expected " + std::to_string(groups) + " edge transforms");
    for (std::size_t g = 0; g < groups; ++g)
        detail::check_affine("gn_forward: edge." + p.edge_name(g), p.edge[g], d.edge_in + 2 * d.node_in + d.global_in, d.edge_out);
    detail::check_affine("gn_forward: node", p.node, d.node_in + groups * d.edge_out + d.global_in, d.node_out);
    detail::check_affine("gn_forward: global", p.global, d.global_in + d.node_out + groups * d.edge_out, d.global_out);
    if (p.directional && !p.with_self && topo.group(Quadrant::SELF).size() > 0) {
        throw ConfigError("gn_forward: graph has SELF edges but the block has no SELF transform");
    }

    const Tensor u = opts.zero_global ? Tensor::zeros({1, d.global_in}) : state.global;

    std::vector<Tensor> node_inputs{state.nodes};
    std::vector<Tensor> global_inputs{u};
    std::vector<Tensor> edge_sums;
    Tensor new_edges;
    for (std::size_t g = 0; g < groups; ++g) {
        const EdgeGroup& grp = p.directional ? topo.by_quadrant[g] : topo.all;
        const Tensor x = concat_cols({gather_rows(state.edges, grp.edge_ids), gather_rows(state.nodes, grp.receivers),
                                      gather_rows(state.nodes, grp.senders), tile_rows(u, grp.size())});
        const Tensor msg = relu(p.edge[g].apply(x));
        node_inputs.push_back(segment_sum(msg, grp.receivers, n));
        edge_sums.push_back(sum_rows(msg));
        if (!p.directional) {
            new_edges = msg;
        } else {
            const Tensor placed = scatter_rows(msg, grp.edge_ids, m);
            new_edges = new_edges.defined() ? add(new_edges, placed) : placed;
        }
    }
    node_inputs.push_back(tile_rows(u, n));
    const Tensor new_nodes = relu(p.node.apply(concat_cols(node_inputs)));

    global_inputs.push_back(sum_rows(new_nodes));
    for (auto& s : edge_sums) global_inputs.push_back(s);
    const Tensor new_global = relu(p.global.apply(concat_cols(global_inputs)));
    return {new_nodes, new_edges, new_global};
}

/// Parameters of the block that acts on point-reflected graphs exactly as `p`
/// acts on the originals: edge transforms move to sigma(g), and the
/// per-quadrant blocks inside the node and global weights follow them.
inline GnBlockParams mirror_block_params(const GnBlockParams& p) {
    GnBlockParams out = p.clone();
    if (!p.directional) return out;
    const std::size_t groups = p.num_groups();
    const std::size_t de = p.dims.edge_out;
    for (std::size_t g = 0; g < groups; ++g) {
        const auto target = static_cast<std::size_t>(mirror_quadrant(kQuadrants[g]));
        out.edge[target] = p.edge[g].clone();
    }
    auto permute_blocks = [&](const Affine& src, Affine& dst, std::size_t first_row) {
        const std::size_t cols = src.out();
        const auto s = src.weight.data();
        auto t = dst.weight.data_mut();
        for (std::size_t g = 0; g < groups; ++g) {
            const auto target = static_cast<std::size_t>(mirror_quadrant(kQuadrants[g]));
            for (std::size_t r = 0; r < de; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    t[(first_row + target * de + r) * cols + c] = s[(first_row + g * de + r) * cols + c];
        }
    };
    permute_blocks(p.node, out.node, p.dims.node_in);
    permute_blocks(p.global, out.global, p.dims.global_in + p.dims.node_out);
    return out;
}

}  // namespace gunet
