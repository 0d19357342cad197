#pragma once

// Initial node, edge and global features.
//
// Images inside the tape are [H*W, C] matrices with row-major pixel rows.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gunet/gn_block.hpp"
#include "gunet/graph.hpp"
#include "gunet/ops.hpp"
#include "gunet/raster.hpp"

namespace gunet {

inline constexpr double kGlobalSumScale = 1e-5;
inline constexpr std::size_t kStaticChannels = 8;
inline constexpr std::size_t kMinutesPerDay = 1440;

struct Timestamp {
    int minutes = 0;  // since midnight, [0, 1440)
    int weekday = 0;  // 0 = Monday

    friend bool operator==(const Timestamp&, const Timestamp&) = default;
};

/// Node features: the seed frames' channels at each node pixel, /255,
/// frame-major ([frame0 ch0..7 | frame1 ch0..7 | ...]).
inline Tensor init_node_features(const TrafficMovie& movie, std::size_t start_frame, const RoadGraph& graph,
                                 std::size_t in_frames = 12) {
    if (start_frame + in_frames > movie.frames) {
        throw DataError("node features: window [" + std::to_string(start_frame) + ", " + std::to_string(start_frame + in_frames) +
                        ") exceeds movie length " + std::to_string(movie.frames));
    }
    if (movie.height != graph.height() || movie.width != graph.width()) {
        throw ShapeError("init_node_features", Shape{movie.height, movie.width}, Shape{graph.height(), graph.width()});
    }
    const std::size_t ch = movie.channels;
    const std::size_t width = in_frames * ch;
    std::vector<double> out(graph.num_nodes() * width);
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
        const auto& p = graph.nodes()[i];
        for (std::size_t f = 0; f < in_frames; ++f)
            for (std::size_t c = 0; c < ch; ++c)
                out[i * width + f * ch + c] =
                    movie.at(start_frame + f, static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col), c) / 255.0;
    }
    return Tensor(Shape{graph.num_nodes(), width}, std::move(out));
}

/// Street map as a [H*W, 1] matrix scaled to [0,1].
inline Tensor static_map_tensor(const Raster<std::uint8_t>& street) {
    const std::size_t n = street.pixels.size();
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = street.pixels[i] / 255.0;
    return Tensor(Shape{n, 1}, std::move(v));
}

/// 3x3 cross-correlation, zero padding, stride 1. Weight rows are ordered
/// (offset, in_channel) with offset = (dy+1)*3 + (dx+1).
inline Tensor conv3x3(const Tensor& image, std::size_t height, std::size_t width, const Affine& kernel) {
    if (image.rank() != 2 || image.dim(0) != height * width) {
        throw ShapeError("conv3x3", image.shape(), Shape{height * width, kernel.in() / 9});
    }
    const std::size_t cin = image.dim(1);
    if (kernel.in() != 9 * cin) throw ShapeError("conv3x3", image.shape(), kernel.weight.shape(), "kernel rows must be 9 * in_channels");
    std::vector<Index> patches(height * width * 9, -1);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c)
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const long rr = static_cast<long>(r) + dy;
                    const long cc = static_cast<long>(c) + dx;
                    if (rr < 0 || cc < 0 || rr >= static_cast<long>(height) || cc >= static_cast<long>(width)) continue;
                    patches[(r * width + c) * 9 + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1))] = rr * static_cast<long>(width) + cc;
                }
    const Tensor cols = reshape(gather_rows(image, patches), Shape{height * width, 9 * cin});
    return kernel.apply(cols);
}

/// Two-layer static-map CNN: 1 -> 8 -> 8 channels, ReLU after each layer.
struct StaticCnnParams {
    Affine conv1;  // [9, 8]
    Affine conv2;  // [72, 8]

    static StaticCnnParams init(std::mt19937_64& rng) {
        return {Affine::init(9, kStaticChannels, rng), Affine::init(9 * kStaticChannels, kStaticChannels, rng)};
    }

    StaticCnnParams clone() const { return {conv1.clone(), conv2.clone()}; }

    /// Kernels rotated by 180 degrees, so the CNN commutes with point reflection.
    StaticCnnParams reflected() const {
        StaticCnnParams out = clone();
        using Pair = std::pair<const Affine*, Affine*>;
        for (auto [src, dst] : {Pair{&conv1, &out.conv1}, Pair{&conv2, &out.conv2}}) {
            const std::size_t cin = src->in() / 9;
            const std::size_t cout = src->out();
            const auto s = src->weight.data();
            auto t = dst->weight.data_mut();
            for (std::size_t o = 0; o < 9; ++o)
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t k = 0; k < cout; ++k) t[((8 - o) * cin + c) * cout + k] = s[(o * cin + c) * cout + k];
        }
        return out;
    }

    void append_named(NamedParams& out, const std::string& prefix) const {
        conv1.append_named(out, prefix + ".conv1");
        conv2.append_named(out, prefix + ".conv2");
    }
};

/// [H*W, 1] street map -> [H*W, 8] static features.
inline Tensor static_cnn(const Tensor& street, std::size_t height, std::size_t width, const StaticCnnParams& p) {
    const Tensor h = relu(conv3x3(street, height, width, p.conv1));
    return relu(conv3x3(h, height, width, p.conv2));
}

/// Per directed edge: [static(sender) | static(receiver)], [M, 16].
inline Tensor init_edge_features(const Tensor& static_features, const RoadGraph& graph) {
    if (static_features.rank() != 2 || static_features.dim(0) != graph.height() * graph.width()) {
        throw ShapeError("init_edge_features", static_features.shape(), Shape{graph.height() * graph.width(), kStaticChannels});
    }
    const auto pix = graph.pixel_index();
    std::vector<Index> send, recv;
    send.reserve(graph.num_edges());
    recv.reserve(graph.num_edges());
    for (const auto& e : graph.edges()) {
        send.push_back(pix[static_cast<std::size_t>(e.sender)]);
        recv.push_back(pix[static_cast<std::size_t>(e.receiver)]);
    }
    return concat_cols({gather_rows(static_features, send), gather_rows(static_features, recv)});
}

/// Time of day on the unit circle: [sin, cos] of 2*pi*t/1440.
inline std::array<double, 2> encode_time(double minutes) {
    const double theta = 2.0 * std::numbers::pi * minutes / static_cast<double>(kMinutesPerDay);
    return {std::sin(theta), std::cos(theta)};
}

/// u = [1e-5 * sum_i v_i | sin | cos | one-hot weekday], shape [1, d_v + 9].
inline Tensor init_global(const Tensor& nodes, const Timestamp& ts) {
    if (ts.weekday < 0 || ts.weekday > 6) throw DataError("init_global: weekday must be in [0, 6]");
    std::vector<double> extra(9, 0.0);
    const auto t = encode_time(ts.minutes);
    extra[0] = t[0];
    extra[1] = t[1];
    extra[2 + static_cast<std::size_t>(ts.weekday)] = 1.0;
    return concat_cols({scale(sum_rows(nodes), kGlobalSumScale), Tensor(Shape{1, 9}, std::move(extra))});
}

}  // namespace gunet
