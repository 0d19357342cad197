#pragma once

// Central finite-difference checks of the analytic gradients, grouped into
// suites per module. Shared by the unit tests and `gunet gradcheck`.
//
// Error per tensor: max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12).

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gunet/features.hpp"
#include "gunet/gn_block.hpp"
#include "gunet/model.hpp"
#include "gunet/ops.hpp"
#include "gunet/resample.hpp"
#include "gunet/synth.hpp"

namespace gunet {

struct TensorCheck {
    std::string name;
    double rel_error = 0.0;
    double max_grad = 0.0;
};

struct GradCheckReport {
    std::string case_name;
    double tolerance = 1e-5;
    std::vector<TensorCheck> tensors;

    double worst() const {
        double w = 0.0;
        for (const auto& t : tensors) w = std::max(w, t.rel_error);
        return w;
    }
    bool passed() const { return worst() <= tolerance; }
};

/// `loss` must rebuild the graph from the current values of `leaves` on every call.
inline std::vector<TensorCheck> check_gradients(const std::function<Tensor()>& loss, NamedParams leaves, double h = 1e-6) {
    for (auto& [name, t] : leaves) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    backward(loss());
    std::vector<TensorCheck> out;
    for (auto& [name, t] : leaves) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto w = t.data_mut();
        double diff = 0.0, amax = 0.0, nmax = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            const double up = loss().item();
            w[i] = keep - h;
            const double down = loss().item();
            w[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            diff = std::max(diff, std::abs(analytic[i] - numeric));
            amax = std::max(amax, std::abs(analytic[i]));
            nmax = std::max(nmax, std::abs(numeric));
        }
        out.push_back({name, diff / std::max({amax, nmax, 1e-12}), amax});
        t.zero_grad();
    }
    return out;
}

namespace detail {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

/// Random-weighted sum so every output element carries a distinct gradient.
inline Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

inline Tensor probe_weights(const Tensor& like, std::mt19937_64& rng) {
    Tensor w = random_tensor(like.shape(), rng);
    w.set_requires_grad(false);
    return w;
}

/// Random biases, plus small random values for weights that start at zero
/// (the head and the sum-reading rows of global transforms), so that checks
/// exercise every path.
inline void randomize_zero_init(NamedParams params, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> bias(-0.3, 0.3), weight(-0.05, 0.05);
    for (auto& [name, t] : params) {
        const bool is_bias = name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
        for (auto& v : t.data_mut())
            if (is_bias) v = bias(rng);
            else if (v == 0.0) v = weight(rng);
    }
}

/// Random street raster with roughly `density` street pixels, never empty.
inline Raster<std::uint8_t> random_street(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> level(1, 255);
    Raster<std::uint8_t> r(h, w, 0);
    for (auto& p : r.pixels)
        if (u(rng) < density) p = static_cast<std::uint8_t>(level(rng));
    if (std::none_of(r.pixels.begin(), r.pixels.end(), [](auto p) { return p > 0; })) r.pixels[0] = 200;
    return r;
}

}  // namespace detail

inline std::vector<GradCheckReport> gradcheck_tensor(std::size_t trials, std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    std::mt19937_64 rng(seed);
    auto dim = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    using detail::probe;
    using detail::probe_weights;
    using detail::random_tensor;
    auto check = [&](std::string name, const std::function<Tensor()>& f, NamedParams leaves) {
        out.push_back({std::move(name), 1e-5, check_gradients(f, std::move(leaves))});
    };
    for (std::size_t t = 0; t < trials; ++t) {
        const std::string tag = "#" + std::to_string(t);
        const std::size_t n = dim(1, 5), k = dim(1, 5), m = dim(1, 5);
        {
            Tensor a = random_tensor({n, k}, rng), b = random_tensor({k, m}, rng);
            const Tensor w = probe_weights(Tensor::zeros({n, m}), rng);
            check("matmul" + tag, [=] { return probe(matmul(a, b), w); }, {{"a", a}, {"b", b}});
        }
        {
            Tensor x = random_tensor({n, m}, rng), b = random_tensor({m}, rng);
            const Tensor w = probe_weights(x, rng);
            check("add_bias" + tag, [=] { return probe(add_bias(x, b), w); }, {{"x", x}, {"b", b}});
        }
        {
            Tensor a = random_tensor({n, k}, rng), b = random_tensor({n, m}, rng);
            const Tensor w1 = probe_weights(Tensor::zeros({n, k + m}), rng);
            check("concat_cols" + tag, [=] { return probe(concat_cols({a, b}), w1); }, {{"a", a}, {"b", b}});
            Tensor c = random_tensor({k, k}, rng), d = random_tensor({m, k}, rng);
            const Tensor w2 = probe_weights(Tensor::zeros({k + m, k}), rng);
            check("concat_rows" + tag, [=] { return probe(concat_rows({c, d}), w2); }, {{"c", c}, {"d", d}});
        }
        {
            // Keep values away from the kink so the central difference is smooth.
            Tensor x = random_tensor({n, m}, rng);
            for (auto& v : x.data_mut())
                if (std::abs(v) < 0.05) v += 0.1;
            const Tensor w = probe_weights(x, rng);
            check("relu" + tag, [=] { return probe(relu(x), w); }, {{"x", x}});
        }
        {
            Tensor a = random_tensor({n, m}, rng), b = random_tensor({n, m}, rng);
            const Tensor w = probe_weights(a, rng);
            check("add" + tag, [=] { return probe(add(a, b), w); }, {{"a", a}, {"b", b}});
            check("sub" + tag, [=] { return probe(sub(a, b), w); }, {{"a", a}, {"b", b}});
            check("mul" + tag, [=] { return probe(mul(a, b), w); }, {{"a", a}, {"b", b}});
            check("scale" + tag, [=] { return probe(scale(a, -1.7), w); }, {{"a", a}});
            check("mse_loss" + tag, [=] { return mse_loss(a, b); }, {{"a", a}, {"b", b}});
            check("mean" + tag, [=] { return mul(mean(a), mean(a)); }, {{"a", a}});
            const Tensor wr = probe_weights(Tensor::zeros({m, n}), rng);
            check("reshape" + tag, [=] { return probe(reshape(a, {m, n}), wr); }, {{"a", a}});
            const Tensor ws = probe_weights(Tensor::zeros({1, m}), rng);
            check("sum_rows" + tag, [=] { return probe(sum_rows(a), ws); }, {{"a", a}});
            Tensor u = random_tensor({1, m}, rng);
            check("tile_rows" + tag, [=] { return probe(tile_rows(u, n), w); }, {{"u", u}});
        }
        {
            const std::size_t rows = dim(1, 8), segs = dim(1, 4);
            Tensor x = random_tensor({rows, m}, rng);
            std::vector<Index> seg(rows);
            for (auto& s : seg) s = static_cast<Index>(dim(0, segs)) - 1;  // -1 drops the row
            const Tensor w = probe_weights(Tensor::zeros({segs, m}), rng);
            check("segment_sum" + tag, [=] { return probe(segment_sum(x, seg, segs), w); }, {{"x", x}});
            check("segment_max" + tag, [=] { return probe(segment_max(x, seg, segs), w); }, {{"x", x}});
            std::vector<Index> gidx(dim(1, 8));
            for (auto& g : gidx) g = static_cast<Index>(dim(0, rows)) - 1;
            const Tensor wg = probe_weights(Tensor::zeros({gidx.size(), m}), rng);
            check("gather_rows" + tag, [=] { return probe(gather_rows(x, gidx), wg); }, {{"x", x}});
            std::vector<Index> perm(rows);
            for (std::size_t i = 0; i < rows; ++i) perm[i] = static_cast<Index>(i);
            std::shuffle(perm.begin(), perm.end(), rng);
            const Tensor wsc = probe_weights(Tensor::zeros({rows + 2, m}), rng);
            check("scatter_rows" + tag, [=] { return probe(scatter_rows(x, perm, rows + 2), wsc); }, {{"x", x}});
        }
    }
    return out;
}

inline std::vector<GradCheckReport> gradcheck_features(std::size_t trials, std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t h = 3 + t % 4, w = 4 + t % 3;
        const auto street = detail::random_street(h, w, 0.5, rng);
        const RoadGraph g = build_road_graph(street);
        StaticCnnParams cnn = StaticCnnParams::init(rng);
        NamedParams leaves;
        cnn.append_named(leaves, "cnn");
        detail::randomize_zero_init(leaves, rng);
        const Tensor image = static_map_tensor(street);
        const Tensor wv = detail::probe_weights(Tensor::zeros({h * w, kStaticChannels}), rng);
        out.push_back({"static_cnn#" + std::to_string(t), 1e-5,
                       check_gradients([=] { return detail::probe(static_cnn(image, h, w, cnn), wv); }, leaves)});
        const Tensor we = detail::probe_weights(Tensor::zeros({g.num_edges(), 2 * kStaticChannels}), rng);
        if (g.num_edges() > 0) {
            out.push_back({"edge_features#" + std::to_string(t), 1e-5,
                           check_gradients([=] { return detail::probe(init_edge_features(static_cnn(image, h, w, cnn), g), we); }, leaves)});
        }
        Tensor x = detail::random_tensor({g.num_nodes(), 96}, rng, 0.0, 1.0);
        // Only the node-sum block depends on V; probing the constant time and
        // weekday entries would just add cancellation noise.
        Tensor wu = detail::probe_weights(Tensor::zeros({1, 96 + 9}), rng);
        for (std::size_t j = 96; j < 96 + 9; ++j) wu.data_mut()[j] = 0.0;
        const Timestamp ts{static_cast<int>(t * 95 % 1440), static_cast<int>(t % 7)};
        out.push_back({"init_global#" + std::to_string(t), 1e-5,
                       check_gradients([=] { return detail::probe(init_global(x, ts), wu); }, {{"nodes", x}})});
    }
    return out;
}

inline std::vector<GradCheckReport> gradcheck_gn(std::size_t trials, std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto street = detail::random_street(4 + t % 3, 4 + t % 2, 0.6, rng);
        const RoadGraph g = build_road_graph(street);
        const bool directional = t % 4 != 3;
        const GnDims d{3, 2, 2, 3, 2, 2};
        GnBlockParams p = GnBlockParams::init(d, directional, false, rng);
        NamedParams leaves;
        p.append_named(leaves, "gn");
        detail::randomize_zero_init(leaves, rng);
        Tensor v = detail::random_tensor({g.num_nodes(), d.node_in}, rng);
        Tensor e = detail::random_tensor({g.num_edges(), d.edge_in}, rng);
        Tensor u = detail::random_tensor({1, d.global_in}, rng);
        leaves.emplace_back("V", v);
        leaves.emplace_back("E", e);
        leaves.emplace_back("u", u);
        const Tensor wv = detail::probe_weights(Tensor::zeros({g.num_nodes(), d.node_out}), rng);
        const Tensor we = detail::probe_weights(Tensor::zeros({g.num_edges(), d.edge_out}), rng);
        const Tensor wu = detail::probe_weights(Tensor::zeros({1, d.global_out}), rng);
        const MessageTopology topo = g.topology();
        auto f = [=] {
            const GraphState s = gn_forward(topo, {v, e, u}, p);
            return add(add(detail::probe(s.nodes, wv), detail::probe(s.edges, we)), detail::probe(s.global, wu));
        };
        out.push_back({std::string(directional ? "gn_directional#" : "gn_shared#") + std::to_string(t), 1e-5, check_gradients(f, leaves)});
    }
    return out;
}

inline std::vector<GradCheckReport> gradcheck_resample(std::size_t trials, std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto street = detail::random_street(4 + t % 4, 4 + t % 3, 0.6, rng);
        const RoadGraph g = build_road_graph(street);
        const PoolResult pr = pool_graph(g);
        Tensor v = detail::random_tensor({g.num_nodes(), 3}, rng);
        Tensor e = detail::random_tensor({g.num_edges(), 2}, rng);
        const Tensor wv = detail::probe_weights(Tensor::zeros({pr.graph.num_nodes(), 3}), rng);
        const Tensor we = detail::probe_weights(Tensor::zeros({pr.graph.num_edges(), 2}), rng);
        auto pool_loss = [=] {
            auto [pv, pe] = pool_features(pr, v, e);
            return add(detail::probe(pv, wv), detail::probe(pe, we));
        };
        out.push_back({"pool#" + std::to_string(t), 1e-5, check_gradients(pool_loss, {{"V", v}, {"E", e}})});

        const auto anchor = t % 2 ? UpsampleAnchor::Corner : UpsampleAnchor::Center;
        const UpsamplingGraph ug = build_upsampling_graph(pr.graph, g, anchor);
        const GnDims d{3, 2, 2, 3, 2, 2};
        GnBlockParams p = GnBlockParams::init(d, true, anchor == UpsampleAnchor::Corner, rng);
        NamedParams leaves;
        p.append_named(leaves, "up");
        detail::randomize_zero_init(leaves, rng);
        Tensor cv = detail::random_tensor({pr.graph.num_nodes(), 3}, rng);
        Tensor u = detail::random_tensor({1, 2}, rng);
        leaves.emplace_back("V", cv);
        leaves.emplace_back("u", u);
        const Tensor wt = detail::probe_weights(Tensor::zeros({g.num_nodes(), 3}), rng);
        const Tensor wu = detail::probe_weights(Tensor::zeros({1, 2}), rng);
        auto up_loss = [=] {
            const Upsampled r = upsample(ug, cv, u, p);
            return add(detail::probe(r.nodes, wt), detail::probe(r.global, wu));
        };
        out.push_back({std::string(anchor == UpsampleAnchor::Corner ? "upsample_corner#" : "upsample_center#") + std::to_string(t), 1e-5,
                       check_gradients(up_loss, leaves)});
    }
    return out;
}

/// Full depth-2 model on a 6x6 synthetic city, MSE against the true targets.
inline std::vector<GradCheckReport> gradcheck_model(std::size_t trials, std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    for (std::size_t t = 0; t < trials; ++t) {
        std::mt19937_64 rng(seed + t);
        const CityDataset city = synth_city(seed + t, 6, 6, 1);
        ModelConfig cfg;
        cfg.depth = 2;
        cfg.hidden_node = cfg.hidden_edge = cfg.hidden_global = 4;
        ModelParams params = ModelParams::init(cfg, seed + t);
        NamedParams leaves = params.named();
        detail::randomize_zero_init(leaves, rng);
        for (auto& x : params.head.weight.data_mut()) x = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        const RoadGraph g = build_road_graph(city.street);
        const CityGraphs graphs = CityGraphs::build(g, cfg.depth, cfg.anchor);
        const std::size_t start = 96 + 12 * t;
        const auto& movie = city.days[0].movie;
        const Tensor x = init_node_features(movie, start, g, cfg.in_frames);
        const Tensor y = node_targets(movie, start, g, cfg.in_frames);
        const Tensor street = static_map_tensor(city.street);
        const Timestamp ts = timestamp_of(city.days[0], start);
        auto f = [=] { return mse_loss(model_forward(cfg, params, graphs, x, street, ts), y); };
        out.push_back({"model_d2_6x6#" + std::to_string(t), 1e-4, check_gradients(f, leaves)});
    }
    return out;
}

inline const std::vector<std::string>& gradcheck_modules() {
    static const std::vector<std::string> names = {"tensor", "features", "gn", "resample", "model"};
    return names;
}

inline std::vector<GradCheckReport> run_gradcheck(const std::string& module, std::size_t trials, std::uint64_t seed) {
    if (module == "tensor") return gradcheck_tensor(trials, seed);
    if (module == "features") return gradcheck_features(trials, seed);
    if (module == "gn") return gradcheck_gn(trials, seed);
    if (module == "resample") return gradcheck_resample(trials, seed);
    if (module == "model") return gradcheck_model(trials, seed);
    throw ConfigError("gradcheck: unknown module '" + module + "'");
}

}  // namespace gunet
