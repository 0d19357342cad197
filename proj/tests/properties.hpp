#pragma once

// Oracles and property checks shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gunet/data_io.hpp"
#include "gunet/gradcheck.hpp"
#include "gunet/graph.hpp"
#include "gunet/model.hpp"
#include "gunet/resample.hpp"
#include "gunet/synth.hpp"

namespace props {

using namespace gunet;

/// Random street raster with extents in [1, max_extent] and a random density.
inline Raster<std::uint8_t> random_raster(std::mt19937_64& rng, std::size_t max_extent = 12) {
    std::uniform_int_distribution<std::size_t> extent(1, max_extent);
    const std::size_t h = extent(rng), w = extent(rng);
    const double density = std::uniform_real_distribution<double>(0.15, 0.9)(rng);
    return gunet::detail::random_street(h, w, density, rng);
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Tensor t = gunet::detail::random_tensor({rows, cols}, rng);
    t.set_requires_grad(false);
    return t;
}

inline double linf(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------- partition

/// Quadrant groups are disjoint, cover every edge, agree with labels
/// recomputed from positions, and map through sigma under mirror_graph.
inline bool check_partition(const RoadGraph& g, std::string& why) {
    const auto& topo = g.topology();
    std::vector<int> hits(g.num_edges(), 0);
    for (Quadrant q : kQuadrants)
        for (Index k : topo.group(q).edge_ids) {
            ++hits[static_cast<std::size_t>(k)];
            if (g.label(static_cast<std::size_t>(k)) != q) {
                why = "edge in the wrong group";
                return false;
            }
        }
    for (std::size_t k = 0; k < hits.size(); ++k)
        if (hits[k] != 1) {
            why = "edge " + std::to_string(k) + " appears in " + std::to_string(hits[k]) + " groups";
            return false;
        }
    if (!topo.group(Quadrant::SELF).edge_ids.empty()) {
        why = "road graph has SELF edges";
        return false;
    }
    // Independent label oracle from the geometry.
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto& s = g.nodes()[static_cast<std::size_t>(g.edges()[k].sender)];
        const auto& r = g.nodes()[static_cast<std::size_t>(g.edges()[k].receiver)];
        const long dr = r.row - s.row, dc = r.col - s.col;
        Quadrant expect;
        if (dr <= 0 && dc > 0) expect = Quadrant::NE;
        else if (dr > 0 && dc >= 0) expect = Quadrant::SE;
        else if (dr >= 0 && dc < 0) expect = Quadrant::SW;
        else expect = Quadrant::NW;
        if (g.label(k) != expect) {
            why = "label disagrees with geometry";
            return false;
        }
    }
    const RoadGraph m = mirror_graph(g);
    std::map<std::pair<Pos, Pos>, Quadrant> mirrored;
    for (std::size_t k = 0; k < m.num_edges(); ++k)
        mirrored[{m.nodes()[static_cast<std::size_t>(m.edges()[k].sender)], m.nodes()[static_cast<std::size_t>(m.edges()[k].receiver)]}] = m.label(k);
    if (mirrored.size() != g.num_edges()) {
        why = "mirror changed the edge count";
        return false;
    }
    const long H = static_cast<long>(g.height()), W = static_cast<long>(g.width());
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto& s = g.nodes()[static_cast<std::size_t>(g.edges()[k].sender)];
        const auto& r = g.nodes()[static_cast<std::size_t>(g.edges()[k].receiver)];
        const auto it = mirrored.find({Pos{H - 1 - s.row, W - 1 - s.col}, Pos{H - 1 - r.row, W - 1 - r.col}});
        if (it == mirrored.end() || it->second != mirror_quadrant(g.label(k))) {
            why = "mirrored label is not sigma(label)";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- pooling oracle

struct PoolOracle {
    std::vector<Pos> nodes;
    std::vector<std::pair<Pos, Pos>> edges;
    std::vector<double> node_features;
    std::vector<double> edge_features;
};

/// Enumerates coarse windows and all window pairs directly from the fine graph.
inline PoolOracle brute_force_pool(const RoadGraph& g, const Tensor& V, const Tensor& E) {
    PoolOracle o;
    const std::size_t dv = V.cols(), de = E.cols();
    auto window = [](const Pos& p) { return Pos{p.row / 2, p.col / 2}; };
    std::set<Pos> windows;
    for (const auto& p : g.nodes()) windows.insert(window(p));
    o.nodes.assign(windows.begin(), windows.end());  // Pos ordering is row-major
    for (const auto& w : o.nodes)
        for (std::size_t f = 0; f < dv; ++f) {
            double best = -INFINITY;
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
                if (window(g.nodes()[i]) == w) best = std::max(best, V.data()[i * dv + f]);
            o.node_features.push_back(best);
        }
    for (const auto& a : o.nodes)
        for (const auto& b : o.nodes) {
            if (a == b) continue;
            std::vector<double> best(de, -INFINITY);
            bool any = false;
            for (std::size_t k = 0; k < g.num_edges(); ++k) {
                const auto& s = g.nodes()[static_cast<std::size_t>(g.edges()[k].sender)];
                const auto& r = g.nodes()[static_cast<std::size_t>(g.edges()[k].receiver)];
                if (window(s) == a && window(r) == b) {
                    any = true;
                    for (std::size_t f = 0; f < de; ++f) best[f] = std::max(best[f], E.data()[k * de + f]);
                }
            }
            if (!any) continue;
            o.edges.push_back({a, b});
            o.edge_features.insert(o.edge_features.end(), best.begin(), best.end());
        }
    return o;
}

inline bool check_pool_against_oracle(const RoadGraph& g, const Tensor& V, const Tensor& E, std::string& why) {
    const Pooled p = pool(g, V, E);
    const PoolOracle o = brute_force_pool(g, V, E);
    if (p.result.graph.nodes() != o.nodes) {
        why = "node sets differ";
        return false;
    }
    std::vector<std::pair<Pos, Pos>> edges;
    for (const auto& e : p.result.graph.edges())
        edges.push_back({p.result.graph.nodes()[static_cast<std::size_t>(e.sender)], p.result.graph.nodes()[static_cast<std::size_t>(e.receiver)]});
    // Oracle enumerates (a, b) in node order, which is also the pooled edge order.
    if (edges != o.edges) {
        why = "edge sets differ";
        return false;
    }
    if (!std::equal(p.nodes.data().begin(), p.nodes.data().end(), o.node_features.begin(), o.node_features.end())) {
        why = "node features differ";
        return false;
    }
    if (!std::equal(p.edges.data().begin(), p.edges.data().end(), o.edge_features.begin(), o.edge_features.end())) {
        why = "edge features differ";
        return false;
    }
    for (std::size_t k = 0; k < p.result.graph.num_edges(); ++k) {
        const auto& [a, b] = edges[k];
        if (p.result.graph.label(k) != classify_edge(b.row - a.row, b.col - a.col)) {
            why = "coarse label not recomputed from coarse positions";
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- star graphs

/// Centre (1,1) with neighbours at `moved` and (2,1), connected both ways.
inline RoadGraph star_graph(Pos moved) {
    std::vector<Pos> nodes{moved, {1, 1}, {2, 1}};
    std::vector<Edge> edges{{0, 1}, {1, 0}, {1, 2}, {2, 1}};
    return RoadGraph::from_parts(3, 3, nodes, edges);
}

/// Centre-node output difference between the NE-neighbour and NW-neighbour
/// star graphs under one random weight draw.
inline double star_difference(bool directional, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const GnDims d{6, 4, 4, 8, 4, 4};
    GnBlockParams p = GnBlockParams::init(d, directional, false, rng);
    NamedParams named;
    p.append_named(named, "b");
    gunet::detail::randomize_zero_init(named, rng);
    const Tensor V = random_matrix(3, d.node_in, rng);
    const Tensor E = random_matrix(4, d.edge_in, rng);
    const Tensor u = random_matrix(1, d.global_in, rng);
    const RoadGraph ne = star_graph({0, 2});
    const RoadGraph nw = star_graph({0, 0});
    const GraphState a = gn_forward(ne.topology(), {V, E, u}, p);
    const GraphState b = gn_forward(nw.topology(), {V, E, u}, p);
    const auto ra = a.nodes.data().subspan(d.node_out, d.node_out);
    const auto rb = b.nodes.data().subspan(d.node_out, d.node_out);
    return linf(ra, rb);
}

// ---------------------------------------------------------------- mirror equivariance

inline ModelParams random_model_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = ModelParams::init(cfg, seed);
    std::mt19937_64 rng(seed ^ 0xABCDEFULL);
    gunet::detail::randomize_zero_init(p.named(), rng);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& x : p.head.weight.data_mut()) x = u(rng);
    return p;
}

struct MirrorRun {
    double linf = 0.0;
    double scale = 0.0;  // max |prediction|, to show the check is not vacuous
};

/// Prediction on the mirrored city with mirrored parameters versus the
/// mirrored prediction on the original city, compared as full rasters.
inline MirrorRun mirror_equivariance(const ModelConfig& cfg, const ModelParams& params, const CityDataset& city, std::size_t start) {
    const CityDataset mc = mirror_dataset(city);
    const ModelParams mp = mirror_params(params, cfg);
    auto predict = [&](const CityDataset& c, const ModelParams& p) {
        const RoadGraph g = build_road_graph(c.street, cfg.adjacency);
        const CityGraphs graphs = CityGraphs::build(g, cfg.depth, cfg.anchor);
        const auto& day = c.days[0];
        const Tensor x = init_node_features(day.movie, start, g, cfg.in_frames);
        const Tensor y = model_forward(cfg, p, graphs, x, static_map_tensor(c.street), timestamp_of(day, start));
        return render_to_raster(y, g, cfg.out_frames, cfg.channels);
    };
    const Frames original = mirror_movie(predict(city, params));
    const Frames mirrored = predict(mc, mp);
    MirrorRun r;
    r.linf = linf(original.data, mirrored.data);
    for (double v : original.data) r.scale = std::max(r.scale, std::abs(v));
    return r;
}

}  // namespace props
