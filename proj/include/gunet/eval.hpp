#pragma once

// Image-level evaluation on the full-hour grid, the naive-average baseline
// and the original-vs-mirrored (MSE / MSE*) report.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gunet/data_io.hpp"
#include "gunet/model.hpp"
#include "gunet/raster.hpp"

namespace gunet {

/// Mean over all elements of (255 * pred - target)^2; pred on the [0,1] scale.
inline double mse_metric(const Frames& pred, const TrafficMovie& target) {
    if (pred.frames != target.frames || pred.height != target.height || pred.width != target.width || pred.channels != target.channels) {
        throw ShapeError("mse_metric", Shape{pred.frames, pred.height, pred.width, pred.channels},
                         Shape{target.frames, target.height, target.width, target.channels});
    }
    if (pred.data.empty()) throw ShapeError("mse_metric", Shape{0}, Shape{0}, "empty frames");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = 255.0 * pred.data[i] - static_cast<double>(target.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.data.size());
}

/// Every horizon gets the elementwise mean of the seed frames (normalized scale).
inline Frames naive_average_predict(const TrafficMovie& seed, std::size_t horizons = kTargetOffsets.size()) {
    if (seed.frames == 0) throw DataError("naive_average_predict: no seed frames");
    const std::size_t fs = seed.frame_size();
    std::vector<double> mean(fs, 0.0);
    for (std::size_t t = 0; t < seed.frames; ++t)
        for (std::size_t i = 0; i < fs; ++i) mean[i] += seed.data[t * fs + i];
    for (auto& v : mean) v /= 255.0 * static_cast<double>(seed.frames);
    Frames out(horizons, seed.height, seed.width, seed.channels);
    for (std::size_t k = 0; k < horizons; ++k) std::copy(mean.begin(), mean.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * fs));
    return out;
}

/// Frames [start, start + count) of a movie.
inline TrafficMovie slice_frames(const TrafficMovie& m, std::size_t start, std::size_t count) {
    if (start + count > m.frames) throw DataError("slice_frames: range exceeds movie");
    TrafficMovie out(count, m.height, m.width, m.channels);
    const std::size_t fs = m.frame_size();
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(start * fs), count * fs, out.data.begin());
    return out;
}

/// Everything a predictor may look at for one evaluation sample.
struct SampleContext {
    const CityDataset& city;
    const RoadGraph& graph;
    const DayMovie& day;
    std::size_t start = 0;
    Timestamp time;
};

/// Produces the 6 predicted frames, normalized scale.
using Predictor = std::function<Frames(const SampleContext&)>;

inline Predictor naive_average_predictor(std::size_t in_frames = 12) {
    return [in_frames](const SampleContext& s) { return naive_average_predict(slice_frames(s.day.movie, s.start, in_frames)); };
}

/// Model predictor over the street graph of each sample.
inline Predictor model_predictor(const ModelConfig& cfg, const ModelParams& params, bool clamp) {
    return [cfg, params, clamp](const SampleContext& s) {
        const CityGraphs graphs = CityGraphs::build(s.graph, cfg.depth, cfg.anchor);
        const Tensor x = init_node_features(s.day.movie, s.start, s.graph, cfg.in_frames);
        const Tensor y = model_forward(cfg, params, graphs, x, static_map_tensor(s.city.street), s.time, {false, clamp});
        return render_to_raster(y, s.graph, cfg.out_frames, cfg.channels);
    };
}

struct SampleScore {
    std::string city;
    std::size_t day = 0;
    int hour = 0;
    double mse = 0.0;
};

struct EvalResult {
    std::vector<SampleScore> samples;
    std::map<std::string, double> city_mse;          // pooled over all elements of the city
    std::map<std::string, std::size_t> city_samples;
    double overall = 0.0;                            // sample-weighted mean of per-city values
};

/// Seed windows start at every full hour 00:00..22:00 of every day.
inline std::vector<std::size_t> evaluation_starts(const TrafficMovie& m, std::size_t in_frames) {
    std::vector<std::size_t> out;
    const std::size_t last = last_valid_start(m, in_frames);
    for (std::size_t h = 0; h <= 22; ++h) {
        const std::size_t s = h * 60 / kMinutesPerFrame;
        if (s <= last) out.push_back(s);
    }
    return out;
}

/// Cities are processed in name order. With `mirrored`, each city is point
/// reflected (street map, graph, movies, heading channels) before prediction
/// and scored against the mirrored targets.
inline EvalResult evaluate(const Predictor& predict, const std::vector<CityDataset>& datasets, bool mirrored,
                           Adjacency adjacency = Adjacency::Eight, std::size_t in_frames = 12,
                           const std::function<void(const SampleContext&, const Frames&, const TrafficMovie&)>& on_sample = {}) {
    std::vector<const CityDataset*> order;
    for (const auto& d : datasets) order.push_back(&d);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

    EvalResult res;
    double weighted = 0.0;
    std::size_t total = 0;
    for (const CityDataset* original : order) {
        const CityDataset city = mirrored ? mirror_dataset(*original) : *original;
        const RoadGraph graph = build_road_graph(city.street, adjacency);
        double city_sum = 0.0;
        std::size_t city_n = 0;
        for (std::size_t d = 0; d < city.days.size(); ++d) {
            const auto& day = city.days[d];
            for (std::size_t start : evaluation_starts(day.movie, in_frames)) {
                const SampleContext ctx{city, graph, day, start, timestamp_of(day, start)};
                const Frames pred = predict(ctx);
                const TrafficMovie target = target_frames(day.movie, start, in_frames);
                const double mse = mse_metric(pred, target);
                if (on_sample) on_sample(ctx, pred, target);
                res.samples.push_back({city.name, d, static_cast<int>(start * kMinutesPerFrame / 60), mse});
                city_sum += mse;
                ++city_n;
            }
        }
        // Every sample has the same element count, so pooling all elements
        // equals the mean of the per-sample values.
        const double city_mse = city_n ? city_sum / static_cast<double>(city_n) : 0.0;
        res.city_mse[city.name] = city_mse;
        res.city_samples[city.name] = city_n;
        weighted += city_mse * static_cast<double>(city_n);
        total += city_n;
    }
    res.overall = total ? weighted / static_cast<double>(total) : 0.0;
    return res;
}

struct HourStats {
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

inline std::map<int, HourStats> per_hour(const EvalResult& r) {
    std::map<int, std::vector<double>> by;
    for (const auto& s : r.samples) by[s.hour].push_back(s.mse);
    std::map<int, HourStats> out;
    for (auto& [h, v] : by) {
        HourStats st;
        st.count = v.size();
        st.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - st.mean) * (x - st.mean);
        st.stddev = std::sqrt(var / static_cast<double>(v.size()));
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        st.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        out[h] = st;
    }
    return out;
}

struct CityRow {
    double mse = 0.0;
    double mse_star = 0.0;
    double rel_mse = 0.0;  // mse / mse_star
    std::size_t samples = 0;
};

struct EvalReport {
    std::map<std::string, CityRow> cities;
    std::map<int, HourStats> hours;
    std::map<int, HourStats> hours_star;
    CityRow overall;
};

/// Pairs an evaluation on the original cities with one on the mirrored cities.
inline EvalReport make_report(const EvalResult& original, const EvalResult& mirrored) {
    EvalReport rep;
    for (const auto& [name, mse] : original.city_mse) {
        CityRow row;
        row.mse = mse;
        row.samples = original.city_samples.at(name);
        const auto it = mirrored.city_mse.find(name);
        row.mse_star = it == mirrored.city_mse.end() ? std::nan("") : it->second;
        row.rel_mse = row.mse / row.mse_star;
        rep.cities[name] = row;
    }
    rep.hours = per_hour(original);
    rep.hours_star = per_hour(mirrored);
    rep.overall.mse = original.overall;
    rep.overall.mse_star = mirrored.overall;
    rep.overall.rel_mse = original.overall / mirrored.overall;
    rep.overall.samples = original.samples.size();
    return rep;
}

/// CSV with one row per city, one "overall" row and one row per hour.
/// Mirrored columns are left empty when `with_mirror` is false.
inline std::string report_csv(const EvalReport& rep, bool with_mirror) {
    auto num = [](double v) {
        std::ostringstream s;
        s << std::setprecision(17) << v;
        return s.str();
    };
    auto star = [&](double v) { return with_mirror ? num(v) : std::string{}; };
    std::ostringstream os;
    os << "kind,name,samples,mse,mse_star,rel_mse,mean,median,stddev,mean_star,median_star,stddev_star\n";
    for (const auto& [name, row] : rep.cities)
        os << "city," << name << ',' << row.samples << ',' << num(row.mse) << ',' << star(row.mse_star) << ',' << star(row.rel_mse) << ",,,,,,\n";
    os << "overall,all," << rep.overall.samples << ',' << num(rep.overall.mse) << ',' << star(rep.overall.mse_star) << ','
       << star(rep.overall.rel_mse) << ",,,,,,\n";
    for (const auto& [h, st] : rep.hours) {
        char hour[8];
        std::snprintf(hour, sizeof(hour), "%02d", h);
        os << "hour," << hour << ',' << st.count << ",,,," << num(st.mean) << ',' << num(st.median) << ',' << num(st.stddev) << ',';
        const auto it = rep.hours_star.find(h);
        if (with_mirror && it != rep.hours_star.end()) {
            os << num(it->second.mean) << ',' << num(it->second.median) << ',' << num(it->second.stddev);
        } else {
            os << ",,";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace gunet
