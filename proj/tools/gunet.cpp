// Command-line front end: synthetic data, training, evaluation, prediction
// and gradient checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "gunet/config.hpp"
#include "gunet/eval.hpp"
#include "gunet/gradcheck.hpp"
#include "gunet/synth.hpp"
#include "gunet/train.hpp"

namespace fs = std::filesystem;
using namespace gunet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<CityDataset> load_all(const std::vector<std::string>& dirs) {
    std::vector<CityDataset> out;
    for (const auto& d : dirs) out.push_back(load_dataset(d));
    return out;
}

std::string sidecar(const std::string& ckpt) { return ckpt + ".cfg"; }

RunConfig config_for(const std::string& ckpt, const std::string& explicit_config) {
    if (!explicit_config.empty()) return load_config(explicit_config);
    if (fs::exists(sidecar(ckpt))) return load_config(sidecar(ckpt));
    throw ConfigError("no config: pass --config or keep " + sidecar(ckpt) + " next to the checkpoint");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path + "'");
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("--size expects HxW, got '" + s + "'");
    return {detail::parse_uint("size", s.substr(0, x)), detail::parse_uint("size", s.substr(x + 1))};
}

/// DAY:HH:MM -> (day index, start frame).
std::pair<std::size_t, std::size_t> parse_at(const std::string& s) {
    unsigned day = 0, hh = 0, mm = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%u:%u:%u%c", &day, &hh, &mm, &tail) != 3 || hh > 23 || mm > 59 || mm % kMinutesPerFrame != 0) {
        throw ConfigError("--at expects DAY:HH:MM on the 5-minute grid, got '" + s + "'");
    }
    return {day, (hh * 60 + mm) / kMinutesPerFrame};
}

Raster<std::uint8_t> channel_image(const TrafficMovie& m, std::size_t frame, std::size_t ch) {
    Raster<std::uint8_t> img(m.height, m.width);
    for (std::size_t r = 0; r < m.height; ++r)
        for (std::size_t c = 0; c < m.width; ++c) img.at(r, c) = m.at(frame, r, c, ch);
    return img;
}

TrafficMovie quantize(const Frames& f) {
    TrafficMovie out(f.frames, f.height, f.width, f.channels);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * f.data[i]), 0L, 255L));
    return out;
}

std::string loss_csv_row(const LossRow& r) {
    std::ostringstream os;
    os << std::setprecision(17) << r.step << ',' << r.lr << ',' << r.train_mse << '\n';
    return os.str();
}

int run_synth(std::uint64_t seed, const std::string& size, std::size_t days, const std::string& out) {
    const auto [h, w] = parse_size(size);
    save_dataset(synth_city(seed, h, w, days), out);
    std::cout << "wrote " << days << " day(s) of a " << h << "x" << w << " city to " << out << '\n';
    return kOk;
}

int run_mirror(const std::string& in, const std::string& out) {
    save_dataset(mirror_dataset(load_dataset(in)), out);
    return kOk;
}

int run_train(const std::vector<std::string>& data, const std::string& config, std::optional<std::size_t> steps,
              std::optional<std::uint64_t> seed, const std::string& out, std::string log_path) {
    RunConfig rc = config.empty() ? RunConfig{} : load_config(config);
    if (steps) rc.train.steps = *steps;
    if (seed) rc.train.seed = *seed;
    rc.model.validate();
    rc.train.validate();
    if (log_path.empty()) log_path = out + ".loss.csv";

    const auto datasets = load_all(data);
    ModelParams params = ModelParams::init(rc.model, rc.train.seed);
    write_text(sidecar(out), config_text(rc));

    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw DataError("cannot write '" + log_path + "'");
    log << "step,lr,train_mse\n";
    std::vector<std::string> kept;
    TrainHooks hooks;
    hooks.on_step = [&](const LossRow& r) {
        log << loss_csv_row(r);
        if (r.step % 100 == 0) std::cerr << "step " << r.step << " lr " << r.lr << " loss " << r.train_mse << '\n';
    };
    hooks.on_checkpoint = [&](std::size_t step) {
        const std::string path = out + ".step" + std::to_string(step);
        save_checkpoint(params, path);
        kept.push_back(path);
        while (kept.size() > rc.train.keep_last) {
            fs::remove(kept.front());
            kept.erase(kept.begin());
        }
    };
    train(rc.model, params, datasets, rc.train, hooks);
    log.flush();
    if (!log) throw DataError("write failed for '" + log_path + "'");
    save_checkpoint(params, out);
    std::cout << "trained " << rc.train.steps << " steps; checkpoint " << out << ", loss log " << log_path << '\n';
    return kOk;
}

void print_summary(const EvalReport& rep, bool with_mirror) {
    for (const auto& [name, row] : rep.cities) {
        std::cout << name << ": mse " << row.mse;
        if (with_mirror) std::cout << " mse* " << row.mse_star << " rel " << row.rel_mse;
        std::cout << " (" << row.samples << " samples)\n";
    }
    std::cout << "overall: mse " << rep.overall.mse;
    if (with_mirror) std::cout << " mse* " << rep.overall.mse_star << " rel " << rep.overall.rel_mse;
    std::cout << '\n';
}

int run_eval(const std::vector<std::string>& data, const std::string& ckpt, const std::string& config, bool mirrored,
             const std::string& report, const std::string& dump) {
    const RunConfig rc = config_for(ckpt, config);
    const ModelParams params = load_checkpoint(ckpt, rc.model);
    const auto datasets = load_all(data);
    const Predictor predict = model_predictor(rc.model, params, rc.model.clamp_output);

    std::function<void(const SampleContext&, const Frames&, const TrafficMovie&)> on_sample;
    if (!dump.empty()) {
        fs::create_directories(dump);
        // The 60-minute horizon of every sample, each channel as its own image.
        on_sample = [&](const SampleContext& s, const Frames& pred, const TrafficMovie& target) {
            const TrafficMovie q = quantize(pred);
            const std::size_t k = kTargetOffsets.size() - 1;
            const std::size_t day = static_cast<std::size_t>(&s.day - s.city.days.data());
            char stem[128];
            std::snprintf(stem, sizeof(stem), "%s_d%zu_%02zu00", s.city.name.c_str(), day, s.start * kMinutesPerFrame / 60);
            for (std::size_t c = 0; c < kChannels; ++c) {
                const std::string base = (fs::path(dump) / stem).string() + "_c" + std::to_string(c);
                write_pgm(channel_image(q, k, c), base + "_pred.pgm");
                write_pgm(channel_image(target, k, c), base + "_true.pgm");
            }
        };
    }
    const EvalResult orig = evaluate(predict, datasets, false, rc.model.adjacency, rc.model.in_frames, on_sample);
    const EvalResult mirr = mirrored ? evaluate(predict, datasets, true, rc.model.adjacency, rc.model.in_frames) : EvalResult{};
    const EvalReport rep = make_report(orig, mirrored ? mirr : orig);
    write_text(report, report_csv(rep, mirrored));
    print_summary(rep, mirrored);
    return kOk;
}

int run_baseline(const std::vector<std::string>& data, const std::string& report) {
    const auto datasets = load_all(data);
    const EvalResult orig = evaluate(naive_average_predictor(), datasets, false);
    const EvalResult mirr = evaluate(naive_average_predictor(), datasets, true);
    const EvalReport rep = make_report(orig, mirr);
    write_text(report, report_csv(rep, true));
    print_summary(rep, true);
    return kOk;
}

int run_predict(const std::string& data, const std::string& ckpt, const std::string& config, const std::string& at,
                const std::string& out) {
    const RunConfig rc = config_for(ckpt, config);
    const ModelParams params = load_checkpoint(ckpt, rc.model);
    const CityDataset city = load_dataset(data);
    const auto [day, start] = parse_at(at);
    if (day >= city.days.size()) throw DataError("--at: day " + std::to_string(day) + " not in dataset");
    const auto& d = city.days[day];
    if (start + rc.model.in_frames > d.movie.frames) throw DataError("--at: seed window runs past the end of the day");
    const RoadGraph graph = build_road_graph(city.street, rc.model.adjacency);
    const SampleContext ctx{city, graph, d, start, timestamp_of(d, start)};
    write_tmv(quantize(model_predictor(rc.model, params, rc.model.clamp_output)(ctx)), out);
    return kOk;
}

int cmd_gradcheck(const std::string& module, std::size_t trials, std::uint64_t seed) {
    std::vector<std::string> modules = module.empty() ? gradcheck_modules() : std::vector<std::string>{module};
    bool ok = true;
    for (const auto& m : modules) {
        for (const auto& r : run_gradcheck(m, trials, seed)) {
            std::cout << (r.passed() ? "ok   " : "FAIL ") << r.case_name << " worst " << r.worst() << " (tol " << r.tolerance << ")\n";
            ok = ok && r.passed();
        }
    }
    return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph U-Net traffic forecasting toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::size_t days = 1, trials = 3;
    std::string size = "32x32", out, in, config, ckpt, report, dump, at, module, log_path;
    std::vector<std::string> data;
    bool mirrored = false;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> train_seed;

    auto* synth = app.add_subcommand("synth", "generate a synthetic city");
    synth->add_option("--seed", seed);
    synth->add_option("--size", size, "HxW")->capture_default_str();
    synth->add_option("--days", days)->capture_default_str();
    synth->add_option("--out", out)->required();

    auto* mirror = app.add_subcommand("mirror", "write the point-reflected copy of a city");
    mirror->add_option("--in", in)->required();
    mirror->add_option("--out", out)->required();

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--data", data)->required()->delimiter(',');
    tr->add_option("--config", config);
    tr->add_option("--steps", steps);
    tr->add_option("--seed", train_seed);
    tr->add_option("--out", out, "checkpoint path")->required();
    tr->add_option("--log", log_path, "loss log CSV (default: <out>.loss.csv)");

    auto* ev = app.add_subcommand("eval", "score a checkpoint on the hourly grid");
    ev->add_option("--data", data)->required()->delimiter(',');
    ev->add_option("--ckpt", ckpt)->required();
    ev->add_option("--config", config, "default: <ckpt>.cfg");
    ev->add_flag("--mirrored", mirrored, "also score the mirrored cities and report rel. MSE");
    ev->add_option("--report", report)->required();
    ev->add_option("--dump-frames", dump, "write 60-minute predictions and targets as PGM");

    auto* pr = app.add_subcommand("predict", "predict the 6 target frames of one seed window");
    pr->add_option("--data", in)->required();
    pr->add_option("--ckpt", ckpt)->required();
    pr->add_option("--config", config, "default: <ckpt>.cfg");
    pr->add_option("--at", at, "DAY:HH:MM of the first seed frame")->required();
    pr->add_option("--out", out)->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("--module", module)->check(CLI::IsMember(gradcheck_modules()));
    gc->add_option("--trials", trials)->capture_default_str();
    gc->add_option("--seed", seed);

    auto* bl = app.add_subcommand("baseline", "score the naive-average predictor");
    bl->add_option("--data", data)->required()->delimiter(',');
    bl->add_option("--report", report)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return run_synth(seed, size, days, out);
        if (*mirror) return run_mirror(in, out);
        if (*tr) return run_train(data, config, steps, train_seed, out, log_path);
        if (*ev) return run_eval(data, ckpt, config, mirrored, report, dump);
        if (*pr) return run_predict(in, ckpt, config, at, out);
        if (*gc) return cmd_gradcheck(module, trials, seed);
        if (*bl) return run_baseline(data, report);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
