#pragma once

// Graph U-Net: feature initialisation, an encoder of single GN blocks with
// max-pool downsampling, one bottleneck block, and a decoder that upsamples,
// concatenates the skip state of the matching level and applies two GN
// blocks, followed by a per-node affine head predicting 6 frames x 8 channels.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gunet/features.hpp"
#include "gunet/gn_block.hpp"
#include "gunet/graph.hpp"
#include "gunet/ops.hpp"
#include "gunet/optim.hpp"
#include "gunet/raster.hpp"
#include "gunet/resample.hpp"

namespace gunet {

struct ModelConfig {
    std::size_t depth = 3;
    std::size_t hidden_node = 32;
    std::size_t hidden_edge = 32;
    std::size_t hidden_global = 32;
    std::size_t in_frames = 12;
    std::size_t out_frames = 6;
    std::size_t channels = kChannels;
    bool directional = true;
    bool clamp_output = false;
    Adjacency adjacency = Adjacency::Eight;
    UpsampleAnchor anchor = UpsampleAnchor::Center;

    std::size_t node_in() const { return in_frames * channels; }
    std::size_t global_in() const { return node_in() + 9; }
    std::size_t out_dim() const { return out_frames * channels; }

    void validate() const {
        if (depth < 1) throw ConfigError("model config: depth must be >= 1");
        if (hidden_node < 1 || hidden_edge < 1 || hidden_global < 1) throw ConfigError("model config: widths must be >= 1");
        if (in_frames < 1) throw ConfigError("model config: in_frames must be >= 1");
        if (out_frames != 6 || channels != kChannels) throw ConfigError("model config: output must be 6 frames x 8 channels");
    }
};

/// Graphs of every resolution level plus the resampling structure between them.
struct CityGraphs {
    std::vector<RoadGraph> levels;           // levels[0] = street graph, levels[depth] = bottom
    std::vector<PoolResult> pools;           // pools[l]: levels[l] -> levels[l+1]
    std::vector<UpsamplingGraph> upsamples;  // upsamples[l]: levels[l+1] -> levels[l]

    static CityGraphs build(const RoadGraph& street_graph, std::size_t depth, UpsampleAnchor anchor) {
        const std::size_t need = std::size_t{1} << depth;
        if (street_graph.height() < need || street_graph.width() < need) {
            throw ConfigError("model: a " + std::to_string(street_graph.height()) + "x" + std::to_string(street_graph.width()) +
                              " city is too small to pool " + std::to_string(depth) + " times");
        }
        CityGraphs g;
        g.levels.push_back(street_graph);
        for (std::size_t l = 0; l < depth; ++l) {
            g.pools.push_back(pool_graph(g.levels.back()));
            g.levels.push_back(g.pools.back().graph);
        }
        for (std::size_t l = 0; l < depth; ++l) g.upsamples.push_back(build_upsampling_graph(g.levels[l + 1], g.levels[l], anchor));
        return g;
    }
};

struct ModelParams {
    StaticCnnParams cnn;
    Affine proj_node;
    Affine proj_edge;
    Affine proj_global;
    std::vector<GnBlockParams> encoder;                   // one per level
    GnBlockParams bottom;
    std::vector<GnBlockParams> upsample;                  // indexed by target level
    std::vector<std::array<GnBlockParams, 2>> decoder;    // indexed by level
    Affine head;

    /// Random initialisation; the output head starts at zero.
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        const std::size_t hv = cfg.hidden_node, he = cfg.hidden_edge, hu = cfg.hidden_global;
        const bool self = cfg.anchor == UpsampleAnchor::Corner;
        ModelParams p;
        p.cnn = StaticCnnParams::init(rng);
        p.proj_node = Affine::init(cfg.node_in(), hv, rng);
        p.proj_edge = Affine::init(2 * kStaticChannels, he, rng);
        p.proj_global = Affine::init(cfg.global_in(), hu, rng);
        // Weekday one-hot rows start at zero: a weekday never seen in training
        // then adds nothing to u instead of a random offset.
        {
            auto w = p.proj_global.weight.data_mut();
            std::fill(w.begin() + static_cast<std::ptrdiff_t>((cfg.node_in() + 2) * hu), w.end(), 0.0);
        }
        const GnDims same{hv, he, hu, hv, he, hu};
        const GnDims merge{2 * hv, he, hu, hv, he, hu};
        for (std::size_t l = 0; l < cfg.depth; ++l) p.encoder.push_back(GnBlockParams::init(same, cfg.directional, false, rng));
        p.bottom = GnBlockParams::init(same, cfg.directional, false, rng);
        for (std::size_t l = 0; l < cfg.depth; ++l) p.upsample.push_back(GnBlockParams::init(same, cfg.directional, self, rng));
        for (std::size_t l = 0; l < cfg.depth; ++l)
            p.decoder.push_back({GnBlockParams::init(merge, cfg.directional, false, rng),
                                 GnBlockParams::init(same, cfg.directional, false, rng)});
        p.head = Affine::zeros(hv, cfg.out_dim());
        return p;
    }

    /// GN blocks in forward order: encoder levels, bottom, then per level
    /// from the deepest up: upsample, decoder a, decoder b.
    std::vector<const GnBlockParams*> blocks() const {
        std::vector<const GnBlockParams*> out;
        for (const auto& b : encoder) out.push_back(&b);
        out.push_back(&bottom);
        for (std::size_t k = decoder.size(); k-- > 0;) {
            out.push_back(&upsample[k]);
            out.push_back(&decoder[k][0]);
            out.push_back(&decoder[k][1]);
        }
        return out;
    }

    /// Every learnable tensor under its checkpoint name. The tensors are
    /// shared with this object, so optimizer updates act on the model.
    NamedParams named() const {
        NamedParams out;
        cnn.append_named(out, "cnn");
        proj_node.append_named(out, "proj.node");
        proj_edge.append_named(out, "proj.edge");
        proj_global.append_named(out, "proj.global");
        const auto bs = blocks();
        for (std::size_t i = 0; i < bs.size(); ++i) bs[i]->append_named(out, "block" + std::to_string(i));
        head.append_named(out, "head");
        return out;
    }

    ModelParams clone() const {
        ModelParams p = *this;
        p.cnn = cnn.clone();
        p.proj_node = proj_node.clone();
        p.proj_edge = proj_edge.clone();
        p.proj_global = proj_global.clone();
        for (auto& b : p.encoder) b = b.clone();
        p.bottom = bottom.clone();
        for (auto& b : p.upsample) b = b.clone();
        for (auto& pair : p.decoder)
            for (auto& b : pair) b = b.clone();
        p.head = head.clone();
        return p;
    }
};

struct ForwardOptions {
    /// Diagnostic: cut every path through the global state.
    bool zero_global = false;
    bool clamp = false;
};

/// Node predictions [N, 48] on the normalized scale.
inline Tensor model_forward(const ModelConfig& cfg, const ModelParams& p, const CityGraphs& graphs, const Tensor& node_features,
                            const Tensor& street_map, const Timestamp& ts, const ForwardOptions& opts = {}) {
    const std::size_t depth = cfg.depth;
    if (graphs.levels.size() != depth + 1 || p.encoder.size() != depth || p.decoder.size() != depth || p.upsample.size() != depth) {
        throw ConfigError("model: graphs/params were built for a different depth");
    }
    const RoadGraph& g0 = graphs.levels[0];
    const GnOptions gn_opts{opts.zero_global};

    const Tensor static_features = static_cnn(street_map, g0.height(), g0.width(), p.cnn);
    GraphState s{p.proj_node.apply(node_features), p.proj_edge.apply(init_edge_features(static_features, g0)),
                 p.proj_global.apply(init_global(node_features, ts))};

    std::vector<Tensor> skip_nodes, skip_edges;
    for (std::size_t l = 0; l < depth; ++l) {
        s = gn_forward(graphs.levels[l].topology(), s, p.encoder[l], gn_opts);
        skip_nodes.push_back(s.nodes);
        skip_edges.push_back(s.edges);
        auto [v, e] = pool_features(graphs.pools[l], s.nodes, s.edges);
        s.nodes = v;
        s.edges = e;
    }
    s = gn_forward(graphs.levels[depth].topology(), s, p.bottom, gn_opts);
    for (std::size_t l = depth; l-- > 0;) {
        const Upsampled up = upsample(graphs.upsamples[l], s.nodes, s.global, p.upsample[l], gn_opts);
        s.nodes = concat_cols({up.nodes, skip_nodes[l]});
        s.edges = skip_edges[l];
        s.global = up.global;
        s = gn_forward(graphs.levels[l].topology(), s, p.decoder[l][0], gn_opts);
        s = gn_forward(graphs.levels[l].topology(), s, p.decoder[l][1], gn_opts);
    }
    Tensor out = p.head.apply(s.nodes);
    if (opts.clamp) {
        std::vector<double> clamped(out.data().begin(), out.data().end());
        for (auto& v : clamped) v = std::clamp(v, 0.0, 1.0);
        return Tensor(out.shape(), std::move(clamped));
    }
    return out;
}

/// Parameters for the point-reflected world: CNN kernels rotated, quadrant
/// transforms moved by sigma, and heading channels of inputs/outputs swapped.
inline ModelParams mirror_params(const ModelParams& p, const ModelConfig& cfg) {
    ModelParams out = p.clone();
    out.cnn = p.cnn.reflected();
    const std::size_t ch = cfg.channels;
    auto permute_rows = [&](const Affine& src, Affine& dst, std::size_t rows) {
        const std::size_t cols = src.out();
        const auto s = src.weight.data();
        auto t = dst.weight.data_mut();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t mr = (r / ch) * ch + kMirrorChannel[r % ch];
            for (std::size_t c = 0; c < cols; ++c) t[mr * cols + c] = s[r * cols + c];
        }
    };
    permute_rows(p.proj_node, out.proj_node, cfg.node_in());
    permute_rows(p.proj_global, out.proj_global, cfg.node_in());
    for (std::size_t l = 0; l < p.encoder.size(); ++l) out.encoder[l] = mirror_block_params(p.encoder[l]);
    out.bottom = mirror_block_params(p.bottom);
    for (std::size_t l = 0; l < p.upsample.size(); ++l) out.upsample[l] = mirror_block_params(p.upsample[l]);
    for (std::size_t l = 0; l < p.decoder.size(); ++l)
        for (std::size_t k = 0; k < 2; ++k) out.decoder[l][k] = mirror_block_params(p.decoder[l][k]);
    {
        const std::size_t rows = p.head.in(), cols = p.head.out();
        const auto s = p.head.weight.data();
        auto t = out.head.weight.data_mut();
        const auto sb = p.head.bias.data();
        auto tb = out.head.bias.data_mut();
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t mc = (c / ch) * ch + kMirrorChannel[c % ch];
            for (std::size_t r = 0; r < rows; ++r) t[r * cols + mc] = s[r * cols + c];
            tb[mc] = sb[c];
        }
    }
    return out;
}

/// Street pixels receive their node's prediction reshaped to (frames, 8);
/// every other pixel is 0.
inline Frames render_to_raster(const Tensor& node_preds, const RoadGraph& graph, std::size_t out_frames = 6,
                               std::size_t channels = kChannels) {
    if (node_preds.rank() != 2 || node_preds.dim(0) != graph.num_nodes() || node_preds.dim(1) != out_frames * channels) {
        throw ShapeError("render_to_raster", node_preds.shape(), Shape{graph.num_nodes(), out_frames * channels});
    }
    Frames out(out_frames, graph.height(), graph.width(), channels, 0.0);
    const auto d = node_preds.data();
    const std::size_t w = out_frames * channels;
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
        const auto& p = graph.nodes()[i];
        for (std::size_t f = 0; f < out_frames; ++f)
            for (std::size_t c = 0; c < channels; ++c)
                out.at(f, static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col), c) = d[i * w + f * channels + c];
    }
    return out;
}

}  // namespace gunet
