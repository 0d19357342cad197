#pragma once

// Plain "key = value" configuration files for the model and the training run.
// Lines starting with '#' are comments. Unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "gunet/error.hpp"
#include "gunet/model.hpp"
#include "gunet/train.hpp"

namespace gunet {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return x;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_value(RunConfig& rc, const std::string& key, const std::string& value) {
    using namespace detail;
    auto& m = rc.model;
    auto& t = rc.train;
    auto& s = rc.train.schedule;
    if (key == "depth") m.depth = parse_uint(key, value);
    else if (key == "hidden_node") m.hidden_node = parse_uint(key, value);
    else if (key == "hidden_edge") m.hidden_edge = parse_uint(key, value);
    else if (key == "hidden_global") m.hidden_global = parse_uint(key, value);
    else if (key == "in_frames") m.in_frames = parse_uint(key, value);
    else if (key == "directional") m.directional = parse_bool(key, value);
    else if (key == "clamp_output") m.clamp_output = parse_bool(key, value);
    else if (key == "adjacency") {
        if (value == "8") m.adjacency = Adjacency::Eight;
        else if (value == "4") m.adjacency = Adjacency::Four;
        else throw ConfigError("config: adjacency must be 4 or 8, got '" + value + "'");
    } else if (key == "upsample_anchor") {
        if (value == "center") m.anchor = UpsampleAnchor::Center;
        else if (value == "corner") m.anchor = UpsampleAnchor::Corner;
        else throw ConfigError("config: upsample_anchor must be center or corner, got '" + value + "'");
    } else if (key == "steps") t.steps = parse_uint(key, value);
    else if (key == "batch") t.batch = parse_uint(key, value);
    else if (key == "checkpoint_every") t.checkpoint_every = parse_uint(key, value);
    else if (key == "keep_last") t.keep_last = parse_uint(key, value);
    else if (key == "seed") t.seed = parse_uint(key, value);
    else if (key == "base_lr") s.base_lr = parse_double(key, value);
    else if (key == "warmup") s.warmup_steps = parse_uint(key, value);
    else if (key == "decay_rate") s.decay_rate = parse_double(key, value);
    else if (key == "decay_interval") s.decay_interval = parse_uint(key, value);
    else if (key == "min_lr") s.min_lr = parse_double(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text, const std::string& what = "config") {
    RunConfig rc;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string l = detail::trim(line.substr(0, line.find('#')));
        if (l.empty()) continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos) throw ConfigError(what + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply_config_value(rc, detail::trim(l.substr(0, eq)), detail::trim(l.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(what + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    rc.model.validate();
    rc.train.validate();
    return rc;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

/// Writes every key; parse_config(config_text(c)) reproduces c.
inline std::string config_text(const RunConfig& rc) {
    const auto& m = rc.model;
    const auto& t = rc.train;
    const auto& s = rc.train.schedule;
    std::ostringstream os;
    os.precision(17);
    os << "depth = " << m.depth << '\n'
       << "hidden_node = " << m.hidden_node << '\n'
       << "hidden_edge = " << m.hidden_edge << '\n'
       << "hidden_global = " << m.hidden_global << '\n'
       << "in_frames = " << m.in_frames << '\n'
       << "directional = " << (m.directional ? "true" : "false") << '\n'
       << "clamp_output = " << (m.clamp_output ? "true" : "false") << '\n'
       << "adjacency = " << (m.adjacency == Adjacency::Eight ? 8 : 4) << '\n'
       << "upsample_anchor = " << (m.anchor == UpsampleAnchor::Center ? "center" : "corner") << '\n'
       << "steps = " << t.steps << '\n'
       << "batch = " << t.batch << '\n'
       << "checkpoint_every = " << t.checkpoint_every << '\n'
       << "keep_last = " << t.keep_last << '\n'
       << "seed = " << t.seed << '\n'
       << "base_lr = " << s.base_lr << '\n'
       << "warmup = " << s.warmup_steps << '\n'
       << "decay_rate = " << s.decay_rate << '\n'
       << "decay_interval = " << s.decay_interval << '\n'
       << "min_lr = " << s.min_lr << '\n';
    return os.str();
}

}  // namespace gunet
