#pragma once

// Seeded synthetic cities: a street skeleton of full-span axis-aligned
// corridors plus diagonal connectors, and directional traffic whose volume
// follows a two-peak daily profile with slowly varying per-flow fluctuations.
//
// Traffic model, per flow f (one corridor, one heading) and pixel p at
// distance a_p along the direction of travel:
//   level(t)  = profile(t, weekday) * (1 + x_f(t - a_p / c_f))
//   volume(t) = base_f * shape_p * level(t) + noise
//   speed(t)  = free_f * (1 - 0.5 * min(1, level(t) / (1.2 * peak_f))) + noise
// where x_f is an AR(1) process with a 45 minute time constant that travels
// downstream at c_f pixels per frame, so upstream pixels see a fluctuation
// before downstream ones. Volumes and speeds of flows sharing a pixel and
// heading channel are added (volume) or volume-weighted (speed) and quantized
// to uint8.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gunet/data_io.hpp"
#include "gunet/error.hpp"
#include "gunet/raster.hpp"

namespace gunet {

/// Relative traffic level at a time of day (hours, fractional).
inline double daily_profile(double hour, int weekday) {
    auto bump = [](double h, double centre, double width) {
        const double d = h - centre;
        return std::exp(-d * d / (2.0 * width * width));
    };
    const double peaks = weekday >= 5 ? 0.5 : 1.0;
    const double day = 1.0 / (1.0 + std::exp(-(hour - 6.5) * 1.5)) * (1.0 / (1.0 + std::exp((hour - 21.5) * 1.5)));
    return 0.08 + 0.35 * day + peaks * (0.75 * bump(hour, 8.0, 1.1) + 0.65 * bump(hour, 18.0, 1.3));
}

namespace detail {

struct Flow {
    std::vector<std::size_t> pixels;  // row-major pixel indices
    std::size_t vol_channel = 0;
    double base = 0.0;
    double free_speed = 0.0;
    std::vector<double> shape;  // per pixel, static spatial modulation
    std::vector<double> lag;    // per pixel, frames behind the corridor entry
};

/// `along` grows in the heading of `forward_channel`; the backward flow
/// travels the other way.
inline void add_corridor_flows(std::vector<Flow>& flows, const std::vector<std::size_t>& pixels, const std::vector<double>& along,
                               std::size_t forward_channel, std::size_t backward_channel, double width_factor, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double far = *std::max_element(along.begin(), along.end());
    for (auto ch : {forward_channel, backward_channel}) {
        Flow f;
        const double wave_speed = 0.4 + 0.4 * u(rng);
        for (double a : along) f.lag.push_back((ch == forward_channel ? a : far - a) / wave_speed);
        f.pixels = pixels;
        f.vol_channel = ch;
        f.base = 45.0 * width_factor * (0.8 + 0.4 * u(rng));
        f.free_speed = 150.0 + 70.0 * u(rng);
        // Smooth along-corridor modulation from two random sinusoids.
        const double a1 = 0.2 * u(rng), a2 = 0.1 * u(rng);
        const double k1 = 0.1 + 0.3 * u(rng), k2 = 0.3 + 0.5 * u(rng);
        const double p1 = 6.283 * u(rng), p2 = 6.283 * u(rng);
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const double x = static_cast<double>(i);
            f.shape.push_back(1.0 + a1 * std::sin(k1 * x + p1) + a2 * std::sin(k2 * x + p2));
        }
        flows.push_back(std::move(f));
    }
}

}  // namespace detail

inline CityDataset synth_city(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t days) {
    if (height < 4 || width < 4) throw DataError("synth_city: extents must be at least 4x4");
    if (days < 1) throw DataError("synth_city: need at least one day");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };

    CityDataset city;
    city.name = "synth" + std::to_string(seed);
    city.street = Raster<std::uint8_t>(height, width, 0);
    std::vector<detail::Flow> flows;

    // Corridors are stratified into bands so they never merge; each band holds one.
    auto corridors = [&](std::size_t extent, std::size_t other, bool horizontal) {
        const std::size_t count = std::max<std::size_t>(1, extent / 10);
        const std::size_t band = extent / count;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t lanes = u(rng) < 0.4 ? 2 : 1;
            const std::size_t lo = k * band + 1;
            const std::size_t hi = std::max(lo, (k + 1) * band - 1 - lanes);
            const std::size_t at = pick(lo, std::min(hi, extent - lanes));
            std::vector<std::size_t> pixels;
            std::vector<double> along;
            for (std::size_t lane = 0; lane < lanes; ++lane)
                for (std::size_t s = 0; s < other; ++s) {
                    const std::size_t r = horizontal ? at + lane : s;
                    const std::size_t c = horizontal ? s : at + lane;
                    city.street.at(r, c) = static_cast<std::uint8_t>(std::max<int>(city.street.at(r, c), 60 + 80 * static_cast<int>(lanes)));
                    pixels.push_back(r * width + c);
                    along.push_back(static_cast<double>(s));
                }
            // Eastbound traffic is NE, southbound SE.
            if (horizontal) detail::add_corridor_flows(flows, pixels, along, kVolNE, kVolSW, static_cast<double>(lanes), rng);
            else detail::add_corridor_flows(flows, pixels, along, kVolSE, kVolNW, static_cast<double>(lanes), rng);
        }
    };
    corridors(height, width, true);
    corridors(width, height, false);

    // Diagonal connectors start on a street pixel and run until they meet
    // another street pixel or the border.
    const std::size_t connectors = 1 + (height * width) / 400;
    for (std::size_t k = 0; k < connectors; ++k) {
        std::vector<std::size_t> street_pixels;
        for (std::size_t i = 0; i < city.street.pixels.size(); ++i)
            if (city.street.pixels[i] > 0) street_pixels.push_back(i);
        const std::size_t from = street_pixels[pick(0, street_pixels.size() - 1)];
        const long dr = u(rng) < 0.5 ? -1 : 1;
        const long dc = u(rng) < 0.5 ? -1 : 1;
        long r = static_cast<long>(from / width), c = static_cast<long>(from % width);
        std::vector<std::size_t> pixels{from};
        while (true) {
            r += dr;
            c += dc;
            if (r < 0 || c < 0 || r >= static_cast<long>(height) || c >= static_cast<long>(width)) break;
            const std::size_t idx = static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
            pixels.push_back(idx);
            if (city.street.pixels[idx] > 0) break;
            city.street.pixels[idx] = 100;
        }
        if (pixels.size() < 3) continue;
        // Travel along (dr, dc) and back; headings use the edge quadrant
        // convention, so the forward channel is NE or SE and points east.
        const bool northeast_axis = (dr < 0) == (dc > 0);
        std::vector<double> along;
        for (std::size_t i = 0; i < pixels.size(); ++i) along.push_back(static_cast<double>(dc > 0 ? i : pixels.size() - 1 - i));
        if (northeast_axis) detail::add_corridor_flows(flows, pixels, along, kVolNE, kVolSW, 0.7, rng);
        else detail::add_corridor_flows(flows, pixels, along, kVolSE, kVolNW, 0.7, rng);
    }

    const int first_weekday = static_cast<int>(pick(0, 6));
    const double rho = std::exp(-static_cast<double>(kMinutesPerFrame) / 45.0);
    const double sigma = 0.22;
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t day = 0; day < days; ++day) {
        const int weekday = (first_weekday + static_cast<int>(day)) % 7;
        std::vector<double> vol(kFramesPerDay * height * width * kChannels, 0.0);
        std::vector<double> spd_weighted(vol.size(), 0.0);
        for (const auto& f : flows) {
            double peak = 0.0;
            for (std::size_t t = 0; t < kFramesPerDay; ++t) peak = std::max(peak, daily_profile(t * kMinutesPerFrame / 60.0, weekday));
            // x[j] is the fluctuation entering the corridor at frame j - lead.
            const std::size_t lead = static_cast<std::size_t>(std::ceil(*std::max_element(f.lag.begin(), f.lag.end()))) + 1;
            std::vector<double> x(kFramesPerDay + lead);
            x[0] = sigma * gauss(rng);
            for (std::size_t j = 1; j < x.size(); ++j) x[j] = rho * x[j - 1] + std::sqrt(1.0 - rho * rho) * sigma * gauss(rng);
            for (std::size_t t = 0; t < kFramesPerDay; ++t) {
                const double profile = daily_profile(t * kMinutesPerFrame / 60.0, weekday);
                for (std::size_t i = 0; i < f.pixels.size(); ++i) {
                    const double pos = static_cast<double>(t + lead) - f.lag[i];
                    const auto j = static_cast<std::size_t>(pos);
                    const double frac = pos - static_cast<double>(j);
                    const double level = profile * std::max(0.0, 1.0 + (1.0 - frac) * x[j] + frac * x[std::min(j + 1, x.size() - 1)]);
                    const double v = std::max(0.0, f.base * f.shape[i] * level + (1.0 + 0.03 * f.base * level) * gauss(rng));
                    const double congestion = std::min(1.0, level / (1.2 * peak));
                    const double s = f.free_speed * (1.0 - 0.5 * congestion) + 2.0 * gauss(rng);
                    const std::size_t o = (t * height * width + f.pixels[i]) * kChannels + f.vol_channel;
                    vol[o] += v;
                    spd_weighted[o] += v * s;
                }
            }
        }
        TrafficMovie m(kFramesPerDay, height, width, kChannels);
        for (std::size_t o = 0; o < vol.size(); o += 2) {
            const double v = vol[o];
            if (v <= 0.0) continue;
            const auto qv = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            if (qv == 0) continue;
            m.data[o] = qv;
            m.data[o + 1] = static_cast<std::uint8_t>(std::clamp(std::lround(spd_weighted[o] / v), 1L, 255L));
        }
        city.days.push_back({weekday, std::move(m)});
    }
    city.validate();
    return city;
}

}  // namespace gunet
