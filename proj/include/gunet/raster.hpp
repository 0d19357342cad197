#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "gunet/error.hpp"

namespace gunet {

/// Single-channel image, row-major.
template <typename T>
struct Raster {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> pixels;

    Raster() = default;
    Raster(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), pixels(h * w, fill) {}

    T& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    const T& at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }

    friend bool operator==(const Raster&, const Raster&) = default;
};

/// Channel layout of every traffic frame: volume/speed per heading bin.
enum Channel : std::size_t {
    kVolNE = 0, kSpdNE, kVolSE, kSpdSE, kVolSW, kSpdSW, kVolNW, kSpdNW,
};
inline constexpr std::size_t kChannels = 8;

/// Point reflection swaps opposite headings: NE<->SW and SE<->NW, for both
/// volume and speed.
inline constexpr std::array<std::size_t, kChannels> kMirrorChannel = {
    kVolSW, kSpdSW, kVolNW, kSpdNW, kVolNE, kSpdNE, kVolSE, kSpdSE,
};

/// [frames][height][width][channels], row-major.
template <typename T>
struct FrameStack {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<T> data;

    FrameStack() = default;
    FrameStack(std::size_t t, std::size_t h, std::size_t w, std::size_t c, T fill = T{})
        : frames(t), height(h), width(w), channels(c), data(t * h * w * c, fill) {}

    std::size_t offset(std::size_t t, std::size_t r, std::size_t c, std::size_t ch) const {
        return ((t * height + r) * width + c) * channels + ch;
    }
    T& at(std::size_t t, std::size_t r, std::size_t c, std::size_t ch) { return data[offset(t, r, c, ch)]; }
    const T& at(std::size_t t, std::size_t r, std::size_t c, std::size_t ch) const { return data[offset(t, r, c, ch)]; }
    std::size_t frame_size() const { return height * width * channels; }

    friend bool operator==(const FrameStack&, const FrameStack&) = default;
};

/// uint8 traffic movie at five-minute resolution.
using TrafficMovie = FrameStack<std::uint8_t>;

/// Predicted frames on the normalized [0,1] scale.
using Frames = FrameStack<double>;

inline constexpr std::size_t kFramesPerDay = 288;
inline constexpr std::size_t kMinutesPerFrame = 5;

}  // namespace gunet
