#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gunet/gn_block.hpp"
#include "gunet/gradcheck.hpp"
#include "properties.hpp"

using namespace gunet;

namespace {

using Vec = std::vector<double>;

Vec affine_relu(const Affine& a, const Vec& x) {
    const std::size_t in = a.in(), out = a.out();
    Vec y(out);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = a.bias.data()[o];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * a.weight.data()[i * out + o];
        y[o] = std::max(acc, 0.0);
    }
    return y;
}

Vec row(const Tensor& t, std::size_t r) { return {t.data().begin() + static_cast<long>(r * t.cols()), t.data().begin() + static_cast<long>((r + 1) * t.cols())}; }

void append(Vec& a, const Vec& b) { a.insert(a.end(), b.begin(), b.end()); }

/// Loop-level evaluation of the block equations, one edge and one node at a time.
GraphState naive_gn(const RoadGraph& g, const GraphState& s, const GnBlockParams& p) {
    const auto& d = p.dims;
    const std::size_t groups = p.num_groups();
    const Vec u = row(s.global, 0);
    std::vector<Vec> e_new(g.num_edges());
    std::vector<std::size_t> group_of(g.num_edges());
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto& e = g.edges()[k];
        group_of[k] = p.directional ? static_cast<std::size_t>(g.label(k)) : 0;
        Vec x = row(s.edges, k);
        append(x, row(s.nodes, static_cast<std::size_t>(e.receiver)));
        append(x, row(s.nodes, static_cast<std::size_t>(e.sender)));
        append(x, u);
        e_new[k] = affine_relu(p.edge[group_of[k]], x);
    }
    GraphState out;
    Vec vn, en, un;
    Vec vsum(d.node_out, 0.0);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        Vec agg(groups * d.edge_out, 0.0);
        for (std::size_t k = 0; k < g.num_edges(); ++k)
            if (static_cast<std::size_t>(g.edges()[k].receiver) == i)
                for (std::size_t f = 0; f < d.edge_out; ++f) agg[group_of[k] * d.edge_out + f] += e_new[k][f];
        Vec x = row(s.nodes, i);
        append(x, agg);
        append(x, u);
        const Vec v = affine_relu(p.node, x);
        for (std::size_t f = 0; f < d.node_out; ++f) vsum[f] += v[f];
        append(vn, v);
    }
    Vec esum(groups * d.edge_out, 0.0);
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        for (std::size_t f = 0; f < d.edge_out; ++f) esum[group_of[k] * d.edge_out + f] += e_new[k][f];
        append(en, e_new[k]);
    }
    Vec x = u;
    append(x, vsum);
    append(x, esum);
    un = affine_relu(p.global, x);
    return {Tensor(Shape{g.num_nodes(), d.node_out}, vn), Tensor(Shape{g.num_edges(), d.edge_out}, en), Tensor(Shape{1, d.global_out}, un)};
}

GnBlockParams random_block(const GnDims& d, bool directional, std::mt19937_64& rng, bool self = false) {
    GnBlockParams p = GnBlockParams::init(d, directional, self, rng);
    NamedParams named;
    p.append_named(named, "b");
    gunet::detail::randomize_zero_init(named, rng);
    return p;
}

GraphState random_state(const RoadGraph& g, const GnDims& d, std::mt19937_64& rng) {
    return {props::random_matrix(g.num_nodes(), d.node_in, rng), props::random_matrix(g.num_edges(), d.edge_in, rng),
            props::random_matrix(1, d.global_in, rng)};
}

void expect_state_near(const GraphState& a, const GraphState& b, double tol) {
    EXPECT_LE(props::linf(a.nodes.data(), b.nodes.data()), tol);
    EXPECT_LE(props::linf(a.edges.data(), b.edges.data()), tol);
    EXPECT_LE(props::linf(a.global.data(), b.global.data()), tol);
}

}  // namespace

TEST(GnBlock, GoldenTwoNodesOneEdge) {
    const RoadGraph g = RoadGraph::from_parts(1, 2, {{0, 0}, {0, 1}}, {{0, 1}});
    ASSERT_EQ(g.label(0), Quadrant::NE);
    const GnDims d{2, 2, 2, 2, 2, 2};
    GnBlockParams p;
    p.dims = d;
    for (int q = 0; q < 4; ++q) p.edge.push_back(Affine::zeros(8, 2));
    p.node = Affine::zeros(12, 2);
    p.global = Affine::zeros(12, 2);
    auto w = [](Affine& a, std::size_t r, std::size_t c, double v) { a.weight.data_mut()[r * a.out() + c] = v; };
    Affine& ne = p.edge[0];
    w(ne, 0, 0, 1);
    w(ne, 1, 1, 1);
    ne.bias.data_mut()[1] = 0.5;
    w(p.node, 0, 0, 1);
    w(p.node, 1, 1, 1);
    w(p.node, 2, 0, 1);  // NE aggregate block
    w(p.node, 3, 1, 1);
    w(p.node, 10, 1, 2);  // u[0] -> output 1
    w(p.global, 0, 0, 1);
    w(p.global, 1, 1, 1);
    w(p.global, 2, 0, 1);  // node sum
    w(p.global, 3, 1, 1);
    w(p.global, 4, 0, 1);  // NE edge sum
    w(p.global, 5, 1, 1);

    const GraphState in{Tensor::matrix(2, 2, {0.5, 0.25, -1, 3}), Tensor::matrix(1, 2, {1, -2}), Tensor::matrix(1, 2, {0.1, -0.2})};
    const GraphState out = gn_forward(g.topology(), in, p);
    // e' = relu([1, -2 + 0.5]) = [1, 0]
    // v0' = relu([0.5, 0.25 + 2*0.1]) = [0.5, 0.45], no incoming edges
    // v1' = relu([-1 + 1, 3 + 0 + 0.2]) = [0, 3.2]
    // u'  = relu([0.1 + 0.5 + 1, -0.2 + 3.65 + 0]) = [1.6, 3.45]
    EXPECT_EQ(std::vector<double>(out.edges.data().begin(), out.edges.data().end()), (std::vector<double>{1, 0}));
    const std::vector<double> vexp{0.5, 0.45, 0, 3.2};
    EXPECT_LE(props::linf(out.nodes.data(), vexp), 1e-15);
    const std::vector<double> uexp{1.6, 3.45};
    EXPECT_LE(props::linf(out.global.data(), uexp), 1e-15);
}

TEST(GnBlock, IsolatedNodeSeesZeroAggregate) {
    std::mt19937_64 rng(1);
    const RoadGraph g = RoadGraph::from_parts(3, 3, {{1, 1}}, {});
    const GnDims d{3, 2, 2, 4, 2, 2};
    const GnBlockParams p = random_block(d, true, rng);
    const GraphState s = random_state(g, d, rng);
    const GraphState out = gn_forward(g.topology(), s, p);
    Vec x = row(s.nodes, 0);
    append(x, Vec(4 * d.edge_out, 0.0));
    append(x, row(s.global, 0));
    EXPECT_LE(props::linf(out.nodes.data(), affine_relu(p.node, x)), 1e-14);
    EXPECT_EQ(out.edges.shape(), (Shape{0, 2}));
}

TEST(GnBlock, MatchesLoopOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 40; ++t) {
        const RoadGraph g = build_road_graph(props::random_raster(rng, 7));
        const GnDims d{3, 2, 4, 5, 3, 2};
        const bool directional = t % 3 != 0;
        const GnBlockParams p = random_block(d, directional, rng);
        const GraphState s = random_state(g, d, rng);
        expect_state_near(gn_forward(g.topology(), s, p), naive_gn(g, s, p), 1e-12);
    }
}

TEST(GnBlock, DirectionalSensitivityOnStarGraphs) {
    int differs = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        if (props::star_difference(true, seed) > 1e-6) ++differs;
        EXPECT_LE(props::star_difference(false, seed), 1e-9) << seed;
        EXPECT_EQ(props::star_difference(false, seed), 0.0) << seed;
    }
    EXPECT_GE(differs, 99);
}

TEST(GnBlock, AblationCollapse) {
    // Equal edge transforms plus equal quadrant blocks in the node/global
    // weights reduce the directional block to the shared one.
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const RoadGraph g = build_road_graph(props::random_raster(rng, 8));
        const GnDims d{3, 2, 2, 4, 3, 2};
        const GnBlockParams shared = random_block(d, false, rng);
        GnBlockParams dir = random_block(d, true, rng);
        for (auto& e : dir.edge) e = shared.edge[0].clone();
        auto spread = [&](const Affine& src, Affine& dst, std::size_t first) {
            const std::size_t cols = src.out();
            for (std::size_t r = 0; r < dst.in(); ++r) {
                std::size_t sr = r;
                if (r >= first && r < first + 4 * d.edge_out) sr = first + (r - first) % d.edge_out;
                else if (r >= first + 4 * d.edge_out) sr = r - 3 * d.edge_out;
                for (std::size_t c = 0; c < cols; ++c) dst.weight.data_mut()[r * cols + c] = src.weight.data()[sr * cols + c];
            }
            std::copy(src.bias.data().begin(), src.bias.data().end(), dst.bias.data_mut().begin());
        };
        spread(shared.node, dir.node, d.node_in);
        spread(shared.global, dir.global, d.global_in + d.node_out);
        const GraphState s = random_state(g, d, rng);
        const GraphState a = gn_forward(g.topology(), s, shared);
        const GraphState b = gn_forward(g.topology(), s, dir);
        expect_state_near(a, b, 1e-9);
    }
}

TEST(GnBlock, NodeRelabelingEquivariance) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const RoadGraph g = build_road_graph(props::random_raster(rng, 9));
        const std::size_t n = g.num_nodes();
        std::vector<Index> perm(n);  // old id -> new id
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Pos> nodes(n);
        for (std::size_t i = 0; i < n; ++i) nodes[static_cast<std::size_t>(perm[i])] = g.nodes()[i];
        std::vector<Edge> edges;
        for (const auto& e : g.edges()) edges.push_back({perm[static_cast<std::size_t>(e.sender)], perm[static_cast<std::size_t>(e.receiver)]});
        const RoadGraph h = RoadGraph::from_parts(g.height(), g.width(), nodes, edges);

        const GnDims d{3, 2, 2, 3, 2, 2};
        const GnBlockParams p = random_block(d, true, rng);
        const GraphState s = random_state(g, d, rng);
        std::vector<Index> inverse(n);
        for (std::size_t i = 0; i < n; ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i);
        const GraphState sp{gather_rows(s.nodes, inverse), s.edges, s.global};
        const GraphState a = gn_forward(g.topology(), s, p);
        const GraphState b = gn_forward(h.topology(), sp, p);
        EXPECT_LE(props::linf(gather_rows(a.nodes, inverse).data(), b.nodes.data()), 1e-6);
        EXPECT_LE(props::linf(a.edges.data(), b.edges.data()), 1e-6);
        EXPECT_LE(props::linf(a.global.data(), b.global.data()), 1e-6);
    }
}

TEST(GnBlock, WeightPermutationEquivarianceUnderMirror) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const RoadGraph g = build_road_graph(props::random_raster(rng, 10));
        const RoadGraph m = mirror_graph(g);
        const std::size_t n = g.num_nodes();
        const GnDims d{3, 2, 2, 3, 2, 2};
        const GnBlockParams p = random_block(d, true, rng);
        const GraphState s = random_state(g, d, rng);
        // Node i maps to n-1-i; edge k maps to the sorted position of its image.
        std::vector<Index> node_back(n), edge_back(g.num_edges());
        for (std::size_t i = 0; i < n; ++i) node_back[i] = static_cast<Index>(n - 1 - i);
        for (std::size_t k = 0; k < g.num_edges(); ++k) {
            const Edge image{static_cast<Index>(n) - 1 - g.edges()[k].sender, static_cast<Index>(n) - 1 - g.edges()[k].receiver};
            const auto it = std::lower_bound(m.edges().begin(), m.edges().end(), image);
            edge_back[static_cast<std::size_t>(it - m.edges().begin())] = static_cast<Index>(k);
        }
        const GraphState ms{gather_rows(s.nodes, node_back), gather_rows(s.edges, edge_back), s.global};
        const GraphState a = gn_forward(g.topology(), s, p);
        const GraphState b = gn_forward(m.topology(), ms, mirror_block_params(p));
        EXPECT_LE(props::linf(gather_rows(a.nodes, node_back).data(), b.nodes.data()), 1e-6);
        EXPECT_LE(props::linf(gather_rows(a.edges, edge_back).data(), b.edges.data()), 1e-6);
        EXPECT_LE(props::linf(a.global.data(), b.global.data()), 1e-6);
    }
}

TEST(GnBlock, DimensionMismatchNamesTransform) {
    std::mt19937_64 rng(6);
    const RoadGraph g = build_road_graph(Raster<std::uint8_t>(2, 2, 1));
    const GnDims d{3, 2, 2, 3, 2, 2};
    GnBlockParams p = random_block(d, true, rng);
    const GraphState s = random_state(g, d, rng);
    p.edge[2] = Affine::zeros(5, 2);
    try {
        gn_forward(g.topology(), s, p);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(e.op().find("edge.SW"), std::string::npos) << e.op();
    }
    const GraphState bad{props::random_matrix(4, 2, rng), s.edges, s.global};
    EXPECT_THROW(gn_forward(g.topology(), bad, random_block(d, true, rng)), ShapeError);
}

TEST(GnBlock, SelfEdgesNeedSelfTransform) {
    std::mt19937_64 rng(7);
    const std::vector<Edge> edges{{0, 1}};
    const std::vector<Quadrant> labels{Quadrant::SELF};
    const MessageTopology topo = MessageTopology::make(2, edges, labels);
    const GnDims d{2, 2, 2, 2, 2, 2};
    const GraphState s{props::random_matrix(2, 2, rng), props::random_matrix(1, 2, rng), props::random_matrix(1, 2, rng)};
    EXPECT_THROW(gn_forward(topo, s, random_block(d, true, rng)), ConfigError);
    EXPECT_NO_THROW(gn_forward(topo, s, random_block(d, true, rng, true)));
    EXPECT_NO_THROW(gn_forward(topo, s, random_block(d, false, rng)));
}

TEST(GnBlock, ZeroGlobalMode) {
    std::mt19937_64 rng(8);
    const RoadGraph g = build_road_graph(props::random_raster(rng, 6));
    const GnDims d{3, 2, 2, 3, 2, 2};
    const GnBlockParams p = random_block(d, true, rng);
    GraphState s = random_state(g, d, rng);
    const GraphState a = gn_forward(g.topology(), s, p, {true});
    s.global = Tensor::zeros({1, 2});
    const GraphState b = gn_forward(g.topology(), s, p);
    EXPECT_EQ(props::linf(a.nodes.data(), b.nodes.data()), 0.0);
    EXPECT_EQ(props::linf(a.global.data(), b.global.data()), 0.0);
}

TEST(GnBlock, ParameterNames) {
    std::mt19937_64 rng(9);
    NamedParams named;
    random_block({1, 1, 1, 1, 1, 1}, true, rng).append_named(named, "block0");
    std::vector<std::string> names;
    for (const auto& [n, t] : named) names.push_back(n);
    EXPECT_EQ(names, (std::vector<std::string>{"block0.edge.NE.W", "block0.edge.NE.b", "block0.edge.SE.W", "block0.edge.SE.b",
                                               "block0.edge.SW.W", "block0.edge.SW.b", "block0.edge.NW.W", "block0.edge.NW.b",
                                               "block0.node.W", "block0.node.b", "block0.global.W", "block0.global.b"}));
}

TEST(GnBlock, GradientsMatchFiniteDifferences) {
    for (const auto& r : gradcheck_gn(12, 10)) EXPECT_TRUE(r.passed()) << r.case_name << " " << r.worst();
}
