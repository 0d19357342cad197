#pragma once

// Training loop: gradients of 16 successive samples are accumulated and
// averaged, then one Adam step is taken at the scheduled learning rate.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gunet/data_io.hpp"
#include "gunet/model.hpp"
#include "gunet/optim.hpp"

namespace gunet {

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 16;
    LrSchedule schedule;
    std::size_t checkpoint_every = 500;
    std::size_t keep_last = 3;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch < 1) throw ConfigError("train config: batch must be >= 1");
        schedule.validate();
    }
};

struct LossRow {
    std::size_t step = 0;
    double lr = 0.0;
    double train_mse = 0.0;  // mean normalized-scale loss over the batch
};

/// A city prepared for training: its graph pyramid and static map tensor.
struct TrainingCity {
    const CityDataset* data = nullptr;
    RoadGraph graph;
    CityGraphs graphs;
    Tensor street;

    static TrainingCity prepare(const CityDataset& d, const ModelConfig& cfg) {
        TrainingCity c;
        c.data = &d;
        c.graph = build_road_graph(d.street, cfg.adjacency);
        c.graphs = CityGraphs::build(c.graph, cfg.depth, cfg.anchor);
        c.street = static_map_tensor(d.street);
        return c;
    }
};

/// Normalized-scale MSE of one window over the street nodes.
inline Tensor sample_loss(const ModelConfig& cfg, const ModelParams& params, const TrainingCity& city, const SampleRef& s) {
    const auto& movie = city.data->days[s.day].movie;
    const Tensor x = init_node_features(movie, s.start, city.graph, cfg.in_frames);
    const Tensor y = node_targets(movie, s.start, city.graph, cfg.in_frames);
    return mse_loss(model_forward(cfg, params, city.graphs, x, city.street, s.time), y);
}

struct TrainHooks {
    std::function<void(const LossRow&)> on_step;
    /// Called every `checkpoint_every` steps with the step number.
    std::function<void(std::size_t)> on_checkpoint;
};

inline std::string gradient_report(const NamedParams& params) {
    std::ostringstream os;
    for (const auto& [name, t] : params) {
        double sq = 0.0;
        for (double g : t.grad()) sq += g * g;
        os << "  " << name << " |grad| = " << std::sqrt(sq) << '\n';
    }
    return os.str();
}

/// Trains `params` in place and returns the loss log. Deterministic for a
/// fixed seed and dataset order.
inline std::vector<LossRow> train(const ModelConfig& cfg, ModelParams& params, const std::vector<CityDataset>& datasets,
                                  const TrainConfig& tc, const TrainHooks& hooks = {}) {
    cfg.validate();
    tc.validate();
    if (datasets.empty()) throw DataError("train: no datasets");
    std::vector<TrainingCity> cities;
    for (const auto& d : datasets) cities.push_back(TrainingCity::prepare(d, cfg));

    NamedParams named = params.named();
    AdamState adam = AdamState::for_params(named);
    std::mt19937_64 rng(tc.seed ^ 0x9E3779B97F4A7C15ULL);
    std::uniform_int_distribution<std::size_t> pick_city(0, cities.size() - 1);
    std::vector<LossRow> log;
    log.reserve(tc.steps);

    for (std::size_t step = 1; step <= tc.steps; ++step) {
        const double lr = lr_at(tc.schedule, step);
        zero_grads(named);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const auto& city = cities[pick_city(rng)];
            const SampleRef s = sample_seed_frames(*city.data, rng, cfg.in_frames);
            const Tensor loss = sample_loss(cfg, params, city, s);
            if (!std::isfinite(loss.item())) {
                throw NumericError("non-finite loss at step " + std::to_string(step) + " (lr " + std::to_string(lr) + ", city " +
                                   city.data->name + ", day " + std::to_string(s.day) + ", start " + std::to_string(s.start) +
                                   ")\n" + gradient_report(named));
            }
            backward(loss);
            loss_sum += loss.item();
        }
        const double inv = 1.0 / static_cast<double>(tc.batch);
        // Parameters untouched by this batch get an explicit zero gradient.
        for (auto& [name, t] : named)
            for (auto& g : t.grad_mut()) g *= inv;
        adam_step(named, adam, lr);
        const LossRow row{step, lr, loss_sum * inv};
        log.push_back(row);
        if (hooks.on_step) hooks.on_step(row);
        if (hooks.on_checkpoint && tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) hooks.on_checkpoint(step);
    }
    zero_grads(named);
    return log;
}

}  // namespace gunet
