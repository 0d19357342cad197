#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gunet/config.hpp"
#include "gunet/eval.hpp"
#include "gunet/synth.hpp"
#include "gunet/train.hpp"
#include "properties.hpp"

using namespace gunet;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_node = cfg.hidden_edge = cfg.hidden_global = 4;
    return cfg;
}

TrainConfig tiny_train(std::size_t steps, std::size_t batch) {
    TrainConfig tc;
    tc.steps = steps;
    tc.batch = batch;
    tc.schedule.warmup_steps = 2;
    tc.seed = 3;
    return tc;
}

/// The (city, window) draws `train` makes for its first step.
std::vector<SampleRef> first_batch(const TrainConfig& tc, const CityDataset& city, std::size_t in_frames) {
    std::mt19937_64 rng(tc.seed ^ 0x9E3779B97F4A7C15ULL);
    std::uniform_int_distribution<std::size_t> pick_city(0, 0);
    std::vector<SampleRef> out;
    for (std::size_t b = 0; b < tc.batch; ++b) {
        pick_city(rng);
        out.push_back(sample_seed_frames(city, rng, in_frames));
    }
    return out;
}

}  // namespace

TEST(MseMetric, Examples) {
    Frames p(1, 1, 2, 1);
    TrafficMovie t(1, 1, 2, 1);
    p.data = {1.0, 0.0};
    t.data = {255, 0};
    EXPECT_EQ(mse_metric(p, t), 0.0);
    t.data = {0, 10};
    EXPECT_DOUBLE_EQ(mse_metric(p, t), (255.0 * 255.0 + 100.0) / 2.0);
    EXPECT_THROW(mse_metric(Frames(1, 1, 1, 1), t), ShapeError);
}

TEST(MseMetric, Is255SquaredTimesNormalizedMse) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Frames p(6, 3, 4, 8);
    TrafficMovie t(6, 3, 4, 8);
    for (auto& v : p.data) v = u(rng);
    for (auto& v : t.data) v = static_cast<std::uint8_t>(rng());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) acc += std::pow(p.data[i] - t.data[i] / 255.0, 2);
    EXPECT_NEAR(mse_metric(p, t), 255.0 * 255.0 * acc / static_cast<double>(p.data.size()), 1e-9);
}

TEST(NaiveAverage, MeanOfSeedFrames) {
    TrafficMovie seed(3, 1, 1, 8);
    seed.at(0, 0, 0, 0) = 3;
    seed.at(1, 0, 0, 0) = 6;
    seed.at(2, 0, 0, 0) = 0;
    const Frames f = naive_average_predict(seed);
    ASSERT_EQ(f.frames, 6u);
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_DOUBLE_EQ(f.at(k, 0, 0, 0), 3.0 / 255.0);
        EXPECT_EQ(f.at(k, 0, 0, 1), 0.0);
    }
}

TEST(NaiveAverage, ConstantMovieIsPredictedExactly) {
    TrafficMovie m(24, 2, 2, 8, 17);
    const CityDataset city{"c", Raster<std::uint8_t>(2, 2, 1), {{0, m}}};
    const auto r = evaluate(naive_average_predictor(), {city}, false);
    EXPECT_EQ(r.samples.size(), 1u);
    EXPECT_NEAR(r.overall, 0.0, 1e-20);
}

TEST(Evaluation, HourGridAndIdempotence) {
    const CityDataset city = synth_city(2, 8, 8, 2);
    const auto a = evaluate(naive_average_predictor(), {city}, false);
    const auto b = evaluate(naive_average_predictor(), {city}, false);
    EXPECT_EQ(a.samples.size(), 2u * 23u);
    EXPECT_EQ(a.overall, b.overall);
    EXPECT_EQ(a.samples.front().hour, 0);
    EXPECT_EQ(a.samples.back().hour, 22);
    EXPECT_EQ(evaluation_starts(city.days[0].movie, 12).back(), 264u);
}

TEST(Evaluation, NaiveRelMseIsOneOnMirrorPairs) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const CityDataset city = synth_city(seed, 9 + seed, 12, 1);
        const auto rep = make_report(evaluate(naive_average_predictor(), {city}, false), evaluate(naive_average_predictor(), {city}, true));
        EXPECT_NEAR(rep.cities.at(city.name).rel_mse, 1.0, 1e-12);
        EXPECT_NEAR(rep.overall.rel_mse, 1.0, 1e-12);
    }
}

TEST(Evaluation, SelfPairingGivesOne) {
    const CityDataset city = synth_city(5, 8, 8, 1);
    const auto r = evaluate(naive_average_predictor(), {city}, false);
    EXPECT_EQ(make_report(r, r).overall.rel_mse, 1.0);
}

TEST(Evaluation, EquivariantModelHasRelMseOne) {
    const CityDataset city = synth_city(6, 8, 12, 1);
    const ModelConfig cfg = tiny_model();
    const ModelParams p = props::random_model_params(cfg, 6);
    const auto orig = evaluate(model_predictor(cfg, p, false), {city}, false);
    const auto mirr = evaluate(model_predictor(cfg, mirror_params(p, cfg), false), {city}, true);
    EXPECT_NEAR(make_report(orig, mirr).overall.rel_mse, 1.0, 1e-9);
}

TEST(Evaluation, ReportCsvLayout) {
    const CityDataset a = synth_city(7, 6, 6, 1), b = synth_city(8, 6, 6, 1);
    const auto r = evaluate(naive_average_predictor(), {b, a}, false);
    const auto m = evaluate(naive_average_predictor(), {b, a}, true);
    const std::string csv = report_csv(make_report(r, m), true);
    std::istringstream in(csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 1u + 2u + 1u + 23u);
    EXPECT_EQ(lines[0], "kind,name,samples,mse,mse_star,rel_mse,mean,median,stddev,mean_star,median_star,stddev_star");
    EXPECT_EQ(lines[1].rfind("city,synth7,23,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("overall,all,46,", 0), 0u);
    EXPECT_EQ(lines[4].rfind("hour,00,2,", 0), 0u);
    for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), ','), 11) << l;
    const std::string plain = report_csv(make_report(r, m), false);
    EXPECT_NE(plain.find("overall,all,46,"), std::string::npos);
}

TEST(PerHour, Statistics) {
    EvalResult r;
    r.samples = {{"a", 0, 3, 1.0}, {"a", 0, 3, 3.0}, {"a", 0, 3, 8.0}, {"a", 0, 4, 2.0}};
    const auto h = per_hour(r);
    EXPECT_DOUBLE_EQ(h.at(3).mean, 4.0);
    EXPECT_DOUBLE_EQ(h.at(3).median, 3.0);
    EXPECT_NEAR(h.at(3).stddev, std::sqrt((9.0 + 1.0 + 16.0) / 3.0), 1e-15);
    EXPECT_EQ(h.at(4).count, 1u);
}

TEST(Train, FirstLossIsMseOfZeroPrediction) {
    const CityDataset city = synth_city(9, 8, 8, 1);
    const ModelConfig cfg = tiny_model();
    const TrainConfig tc = tiny_train(1, 3);
    ModelParams p = ModelParams::init(cfg, 1);
    const auto log = train(cfg, p, {city}, tc);
    const RoadGraph g = build_road_graph(city.street);
    double expect = 0.0;
    for (const auto& s : first_batch(tc, city, 12)) {
        const Tensor y = node_targets(city.days[s.day].movie, s.start, g);
        double acc = 0.0;
        for (double v : y.data()) acc += v * v;
        expect += acc / static_cast<double>(y.data().size());
    }
    ASSERT_EQ(log.size(), 1u);
    EXPECT_NEAR(log[0].train_mse, expect / 3.0, 1e-15);
    EXPECT_EQ(log[0].step, 1u);
    EXPECT_DOUBLE_EQ(log[0].lr, lr_at(tc.schedule, 1));
}

TEST(Train, BatchGradientIsMeanOfSampleGradients) {
    const CityDataset city = synth_city(10, 8, 8, 1);
    const ModelConfig cfg = tiny_model();
    const TrainConfig tc = tiny_train(1, 4);
    const ModelParams init = props::random_model_params(cfg, 2);

    ModelParams trained = init.clone();
    train(cfg, trained, {city}, tc);

    // Oracle: one graph holding the averaged loss, then the same Adam step.
    ModelParams manual = init.clone();
    NamedParams named = manual.named();
    const TrainingCity tcity = TrainingCity::prepare(city, cfg);
    Tensor total;
    for (const auto& s : first_batch(tc, city, cfg.in_frames)) {
        const Tensor l = sample_loss(cfg, manual, tcity, s);
        total = total.defined() ? add(total, l) : l;
    }
    backward(scale(total, 0.25));
    for (auto& [name, t] : named) t.grad_mut();
    AdamState adam = AdamState::for_params(named);
    adam_step(named, adam, lr_at(tc.schedule, 1));

    const auto a = trained.named(), b = manual.named();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, props::linf(a[i].second.data(), b[i].second.data()));
    EXPECT_LE(worst, 1e-9);
}

TEST(Train, LossLogIsDeterministic) {
    const CityDataset city = synth_city(11, 8, 8, 1);
    const ModelConfig cfg = tiny_model();
    const TrainConfig tc = tiny_train(4, 2);
    ModelParams a = ModelParams::init(cfg, 5), b = ModelParams::init(cfg, 5);
    const auto la = train(cfg, a, {city}, tc), lb = train(cfg, b, {city}, tc);
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        EXPECT_EQ(la[i].train_mse, lb[i].train_mse);
        EXPECT_EQ(la[i].lr, lb[i].lr);
    }
    EXPECT_EQ(encode_tensors(a.named()), encode_tensors(b.named()));
}

TEST(Train, CheckpointHookCadence) {
    const CityDataset city = synth_city(12, 8, 8, 1);
    const ModelConfig cfg = tiny_model();
    TrainConfig tc = tiny_train(5, 1);
    tc.checkpoint_every = 2;
    ModelParams p = ModelParams::init(cfg, 1);
    std::vector<std::size_t> seen;
    std::size_t rows = 0;
    train(cfg, p, {city}, tc, {[&](const LossRow&) { ++rows; }, [&](std::size_t s) { seen.push_back(s); }});
    EXPECT_EQ(rows, 5u);
    EXPECT_EQ(seen, (std::vector<std::size_t>{2, 4}));
}

TEST(Train, NonFiniteLossRaisesNumericError) {
    const CityDataset city = synth_city(13, 8, 8, 1);
    const ModelConfig cfg = tiny_model();
    ModelParams p = ModelParams::init(cfg, 1);
    for (auto& [name, t] : p.named())
        if (name.rfind("head", 0) == 0) t.data_mut()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(cfg, p, {city}, tiny_train(2, 1));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("|grad|"), std::string::npos);
    }
}

TEST(Train, RejectsEmptyInputs) {
    ModelParams p = ModelParams::init(tiny_model(), 1);
    EXPECT_THROW(train(tiny_model(), p, {}, tiny_train(1, 1)), DataError);
    EXPECT_THROW(train(tiny_model(), p, {synth_city(1, 8, 8, 1)}, tiny_train(1, 0)), ConfigError);
}

TEST(Config, RoundTrip) {
    RunConfig rc;
    rc.model.depth = 2;
    rc.model.directional = false;
    rc.model.anchor = UpsampleAnchor::Corner;
    rc.model.adjacency = Adjacency::Four;
    rc.train.seed = 42;
    rc.train.schedule.base_lr = 0.1 / 3.0;
    const RunConfig back = parse_config(config_text(rc));
    EXPECT_EQ(config_text(back), config_text(rc));
    EXPECT_EQ(back.train.schedule.base_lr, rc.train.schedule.base_lr);
    EXPECT_FALSE(back.model.directional);
}

TEST(Config, CommentsAndErrors) {
    const RunConfig rc = parse_config("# widths\nhidden_node = 16  # nodes\n\nsteps=7\n");
    EXPECT_EQ(rc.model.hidden_node, 16u);
    EXPECT_EQ(rc.train.steps, 7u);
    try {
        parse_config("depth = 2\nwidth = 3\n", "run.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config("depth = two\n"), ConfigError);
    EXPECT_THROW(parse_config("directional = maybe\n"), ConfigError);
    EXPECT_THROW(parse_config("adjacency = 6\n"), ConfigError);
    EXPECT_THROW(parse_config("depth\n"), ConfigError);
}
