#pragma once

// GUNC checkpoint files:
//   "GUNC" | version u32 | count u32 | per tensor:
//   name_len u16 | utf-8 name | rank u8 | dims u32 x rank | float64 payload
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "gunet/error.hpp"
#include "gunet/model.hpp"
#include "gunet/optim.hpp"

namespace gunet {

inline constexpr char kCheckpointMagic[4] = {'G', 'U', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail {

template <typename T>
void put(std::vector<char>& out, T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class ByteReader {
public:
    ByteReader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    template <typename T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string string(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void read(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw CheckpointError(what_ + ": truncated (need " + std::to_string(pos_ + n) + " bytes, have " +
                                  std::to_string(bytes_.size()) + ")");
        }
    }

    const std::vector<char>& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::vector<char> encode_tensors(const NamedParams& tensors) {
    std::vector<char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + name.substr(0, 32) + "...");
        if (t.rank() > 0xFF) throw CheckpointError("tensor '" + name + "' has too many dimensions");
        detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t.data()) detail::put<double>(out, v);
    }
    return out;
}

inline NamedParams decode_tensors(const std::vector<char>& bytes, const std::string& what = "checkpoint") {
    detail::ByteReader in(bytes, what);
    if (in.string(4) != std::string(kCheckpointMagic, 4)) throw CheckpointError(what + ": bad magic (expected GUNC)");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw CheckpointError(what + ": unsupported version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>();
    NamedParams out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = in.get<std::uint16_t>();
        std::string name = in.string(len);
        const auto rank = in.get<std::uint8_t>();
        Shape shape;
        for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(in.get<std::uint32_t>());
        std::vector<double> data(shape_numel(shape));
        in.read(data.data(), data.size() * sizeof(double));
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data), true));
    }
    if (!in.done()) throw CheckpointError(what + ": trailing bytes after " + std::to_string(count) + " tensors");
    return out;
}

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    detail::write_file(path, encode_tensors(params.named()));
}

/// Copies stored values into `params`. Every stored name must exist with an
/// identical shape and every parameter must be present; on any error `params`
/// is left untouched.
inline void assign_tensors(const NamedParams& stored, ModelParams& params, const std::string& what = "checkpoint") {
    NamedParams target = params.named();
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : stored) {
        if (!by_name.emplace(name, &t).second) throw CheckpointError(what + ": duplicate tensor '" + name + "'");
    }
    std::map<std::string, std::size_t> known;
    for (std::size_t i = 0; i < target.size(); ++i) known.emplace(target[i].first, i);
    for (const auto& [name, t] : stored) {
        const auto it = known.find(name);
        if (it == known.end()) throw CheckpointError(what + ": unknown tensor '" + name + "'");
        const auto& expect = target[it->second].second;
        if (expect.shape() != t.shape()) {
            throw CheckpointError(what + ": shape mismatch for '" + name + "': stored " + shape_str(t.shape()) + ", model " +
                                  shape_str(expect.shape()));
        }
    }
    for (const auto& [name, t] : target)
        if (!by_name.count(name)) throw CheckpointError(what + ": missing tensor '" + name + "'");
    for (auto& [name, t] : target) {
        const auto src = by_name[name]->data();
        std::copy(src.begin(), src.end(), t.data_mut().begin());
    }
}

inline ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg) {
    const NamedParams stored = decode_tensors(detail::read_file(path), path);
    ModelParams params = ModelParams::init(cfg, 0);
    assign_tensors(stored, params, path);
    return params;
}

}  // namespace gunet
