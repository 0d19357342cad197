#pragma once

// Movie and street-map codecs, the mirrored-dataset transform, on-disk city
// datasets and seed-window sampling.
//
// TMV1: "TMV1" | T u32 | H u32 | W u32 | C u32 (=8) | uint8 [T][H][W][C]
// City directory: street.pgm (binary P5), manifest.txt with lines
// "day_index weekday path", one TMV1 movie per day.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gunet/checkpoint.hpp"
#include "gunet/error.hpp"
#include "gunet/features.hpp"
#include "gunet/raster.hpp"

namespace gunet {

inline constexpr char kMovieMagic[4] = {'T', 'M', 'V', '1'};
inline constexpr std::size_t kMovieHeaderBytes = 20;

/// Frame offsets after the last seed frame: 5, 10, 15, 30, 45 and 60 minutes.
inline constexpr std::array<std::size_t, 6> kTargetOffsets = {1, 2, 3, 6, 9, 12};
/// Latest wall-clock start of a seed window, 22:00.
inline constexpr std::size_t kLatestStartFrame = 22 * 60 / kMinutesPerFrame;

inline std::vector<char> encode_tmv(const TrafficMovie& m) {
    if (m.channels != kChannels) throw DataError("TMV1: expected 8 channels, got " + std::to_string(m.channels));
    std::vector<char> out(std::begin(kMovieMagic), std::end(kMovieMagic));
    for (auto d : {m.frames, m.height, m.width, m.channels}) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.insert(out.end(), m.data.begin(), m.data.end());
    return out;
}

inline TrafficMovie decode_tmv(const std::vector<char>& bytes, const std::string& what = "movie") {
    if (bytes.size() < kMovieHeaderBytes) throw DataError(what + ": header truncated (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kMovieMagic, 4) != 0) throw DataError(what + ": bad magic (expected TMV1)");
    std::uint32_t dims[4];
    std::memcpy(dims, bytes.data() + 4, sizeof(dims));
    if (dims[3] != kChannels) throw DataError(what + ": expected 8 channels, got " + std::to_string(dims[3]));
    TrafficMovie m(dims[0], dims[1], dims[2], dims[3]);
    const std::size_t expected = m.data.size();
    const std::size_t actual = bytes.size() - kMovieHeaderBytes;
    if (actual != expected) {
        throw DataError(what + ": payload has " + std::to_string(actual) + " bytes, expected " + std::to_string(expected));
    }
    std::memcpy(m.data.data(), bytes.data() + kMovieHeaderBytes, expected);
    return m;
}

inline void write_tmv(const TrafficMovie& m, const std::string& path) { detail::write_file(path, encode_tmv(m)); }
inline TrafficMovie read_tmv(const std::string& path) { return decode_tmv(detail::read_file(path), path); }

inline void write_pgm(const Raster<std::uint8_t>& img, const std::string& path) {
    std::ostringstream header;
    header << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    const std::string h = header.str();
    std::vector<char> out(h.begin(), h.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    detail::write_file(path, out);
}

inline Raster<std::uint8_t> read_pgm(const std::string& path) {
    const auto bytes = detail::read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) throw DataError(path + ": malformed PGM header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw DataError(path + ": not a binary PGM (P5)");
    pos = 2;
    const std::size_t w = number();
    const std::size_t h = number();
    const std::size_t maxval = number();
    if (maxval == 0 || maxval > 255) throw DataError(path + ": only 8-bit PGM is supported");
    ++pos;  // single whitespace before the raster
    if (bytes.size() < pos + w * h) throw DataError(path + ": raster truncated");
    Raster<std::uint8_t> img(h, w);
    std::memcpy(img.pixels.data(), bytes.data() + pos, w * h);
    return img;
}

template <typename T>
Raster<T> mirror_raster(const Raster<T>& img) {
    Raster<T> out(img.height, img.width);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) out.at(img.height - 1 - r, img.width - 1 - c) = img.at(r, c);
    return out;
}

/// Point reflection of every frame with heading channels swapped NE<->SW, SE<->NW.
template <typename T>
FrameStack<T> mirror_movie(const FrameStack<T>& m) {
    if (m.channels != kChannels) throw DataError("mirror_movie: expected 8 channels");
    FrameStack<T> out(m.frames, m.height, m.width, m.channels);
    for (std::size_t t = 0; t < m.frames; ++t)
        for (std::size_t r = 0; r < m.height; ++r)
            for (std::size_t c = 0; c < m.width; ++c)
                for (std::size_t ch = 0; ch < kChannels; ++ch)
                    out.at(t, m.height - 1 - r, m.width - 1 - c, kMirrorChannel[ch]) = m.at(t, r, c, ch);
    return out;
}

struct DayMovie {
    int weekday = 0;
    TrafficMovie movie;
};

struct CityDataset {
    std::string name;
    Raster<std::uint8_t> street;
    std::vector<DayMovie> days;

    void validate() const {
        if (days.empty()) throw DataError("dataset '" + name + "' has no days");
        for (const auto& d : days) {
            if (d.movie.height != street.height || d.movie.width != street.width) {
                throw DataError("dataset '" + name + "': movie extents differ from the street map");
            }
            if (d.weekday < 0 || d.weekday > 6) throw DataError("dataset '" + name + "': weekday out of range");
        }
    }

    /// Days [first, first + count).
    CityDataset subset(std::size_t first, std::size_t count) const {
        if (first + count > days.size()) throw DataError("dataset '" + name + "': day subset out of range");
        CityDataset out{name, street, {}};
        out.days.assign(days.begin() + static_cast<std::ptrdiff_t>(first), days.begin() + static_cast<std::ptrdiff_t>(first + count));
        return out;
    }
};

inline CityDataset mirror_dataset(const CityDataset& d) {
    CityDataset out{d.name, mirror_raster(d.street), {}};
    for (const auto& day : d.days) out.days.push_back({day.weekday, mirror_movie(day.movie)});
    return out;
}

inline void save_dataset(const CityDataset& d, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_pgm(d.street, (fs::path(dir) / "street.pgm").string());
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw DataError("cannot write manifest in '" + dir + "'");
    for (std::size_t i = 0; i < d.days.size(); ++i) {
        char file[32];
        std::snprintf(file, sizeof(file), "day_%03zu.tmv", i);
        write_tmv(d.days[i].movie, (fs::path(dir) / file).string());
        manifest << i << ' ' << d.days[i].weekday << ' ' << file << '\n';
    }
}

inline CityDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    CityDataset d;
    d.name = fs::absolute(root).lexically_normal().filename().string();
    if (d.name.empty()) d.name = fs::absolute(root).lexically_normal().parent_path().filename().string();
    d.street = read_pgm((root / "street.pgm").string());
    std::ifstream manifest(root / "manifest.txt");
    if (!manifest) throw DataError("missing manifest.txt in '" + dir + "'");
    std::string line;
    std::size_t expect = 0;
    while (std::getline(manifest, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::size_t index = 0;
        int weekday = 0;
        std::string path;
        if (!(ls >> index >> weekday >> path)) throw DataError(dir + "/manifest.txt: malformed line '" + line + "'");
        if (index != expect++) throw DataError(dir + "/manifest.txt: day indices must be 0,1,2,...");
        d.days.push_back({weekday, read_tmv((root / path).string())});
    }
    d.validate();
    return d;
}

/// A seed window: 12 frames starting at `start` of day `day`.
struct SampleRef {
    std::size_t day = 0;
    std::size_t start = 0;
    Timestamp time;
};

inline Timestamp timestamp_of(const DayMovie& day, std::size_t start) {
    return {static_cast<int>((start * kMinutesPerFrame) % kMinutesPerDay), day.weekday};
}

/// Largest start frame that keeps the window inside the movie and at or before 22:00.
inline std::size_t last_valid_start(const TrafficMovie& m, std::size_t in_frames) {
    const std::size_t span = in_frames - 1 + kTargetOffsets.back() + 1;
    if (m.frames < span) throw DataError("movie too short for a seed window plus targets");
    return std::min(kLatestStartFrame, m.frames - span);
}

/// Uniform day, then a uniform valid start frame.
template <typename Rng>
SampleRef sample_seed_frames(const CityDataset& d, Rng& rng, std::size_t in_frames = 12) {
    if (d.days.empty()) throw DataError("sample_seed_frames: empty dataset");
    std::uniform_int_distribution<std::size_t> pick_day(0, d.days.size() - 1);
    const std::size_t day = pick_day(rng);
    std::uniform_int_distribution<std::size_t> pick_start(0, last_valid_start(d.days[day].movie, in_frames));
    const std::size_t start = pick_start(rng);
    return {day, start, timestamp_of(d.days[day], start)};
}

/// Frame index of target `k` for a window starting at `start`.
inline std::size_t target_frame(std::size_t start, std::size_t in_frames, std::size_t k) {
    return start + in_frames - 1 + kTargetOffsets[k];
}

/// The 6 target frames of a window, uint8.
inline TrafficMovie target_frames(const TrafficMovie& m, std::size_t start, std::size_t in_frames = 12) {
    TrafficMovie out(kTargetOffsets.size(), m.height, m.width, m.channels);
    const std::size_t fs = m.frame_size();
    for (std::size_t k = 0; k < kTargetOffsets.size(); ++k) {
        const std::size_t f = target_frame(start, in_frames, k);
        if (f >= m.frames) throw DataError("target frame beyond the end of the movie");
        std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(f * fs), fs, out.data.begin() + static_cast<std::ptrdiff_t>(k * fs));
    }
    return out;
}

/// Node targets [N, 48] on the normalized scale, frame-major like the predictions.
inline Tensor node_targets(const TrafficMovie& m, std::size_t start, const RoadGraph& g, std::size_t in_frames = 12) {
    const std::size_t ch = m.channels;
    const std::size_t width = kTargetOffsets.size() * ch;
    std::vector<double> out(g.num_nodes() * width);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        const auto& p = g.nodes()[i];
        for (std::size_t k = 0; k < kTargetOffsets.size(); ++k)
            for (std::size_t c = 0; c < ch; ++c)
                out[i * width + k * ch + c] =
                    m.at(target_frame(start, in_frames, k), static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col), c) / 255.0;
    }
    return Tensor(Shape{g.num_nodes(), width}, std::move(out));
}

}  // namespace gunet
