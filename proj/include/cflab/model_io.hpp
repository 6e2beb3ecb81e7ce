#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "cflab/core.hpp"
#include "cflab/factorization.hpp"
#include "cflab/neuralnet.hpp"

namespace cflab {

// Checkpoint container: "CFLM" magic, version, then optional factor and
// network sections. Doubles stored as little-endian IEEE-754 bit patterns,
// so round-trips are bit-exact.

namespace detail {

constexpr char kModelMagic[4] = {'C', 'F', 'L', 'M'};
constexpr std::uint32_t kModelVersion = 1;

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 4);
}

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_f64_vec(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    for (double x : v) write_f64(out, x);
}

inline std::uint64_t read_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw Error("model file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
    return v;
}

inline std::uint32_t read_u32(std::istream& in) {
    char buf[4];
    in.read(buf, 4);
    if (!in) throw Error("model file: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
    return v;
}

inline std::uint8_t read_u8(std::istream& in) {
    const int c = in.get();
    if (c == EOF) throw Error("model file: truncated");
    return static_cast<std::uint8_t>(c);
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline std::vector<double> read_f64_vec(std::istream& in) {
    const std::uint64_t size = read_u64(in);
    std::vector<double> v(size);
    for (auto& x : v) x = read_f64(in);
    return v;
}

inline void write_factors(std::ostream& out, const LatentFactors& f) {
    write_u64(out, f.user_factors.rows);
    write_u64(out, f.item_factors.rows);
    write_u32(out, static_cast<std::uint32_t>(f.p));
    write_u64(out, f.seed);
    write_f64_vec(out, f.user_factors.data);
    write_f64_vec(out, f.item_factors.data);
    write_f64_vec(out, f.user_bias);
    write_f64_vec(out, f.item_bias);
}

inline LatentFactors read_factors(std::istream& in) {
    LatentFactors f;
    const std::uint64_t m = read_u64(in);
    const std::uint64_t n = read_u64(in);
    f.p = static_cast<std::int32_t>(read_u32(in));
    f.seed = read_u64(in);
    f.user_factors.rows = m;
    f.user_factors.cols = static_cast<std::size_t>(f.p);
    f.user_factors.data = read_f64_vec(in);
    f.item_factors.rows = n;
    f.item_factors.cols = static_cast<std::size_t>(f.p);
    f.item_factors.data = read_f64_vec(in);
    f.user_bias = read_f64_vec(in);
    f.item_bias = read_f64_vec(in);
    if (f.user_factors.data.size() != m * static_cast<std::uint64_t>(f.p) ||
        f.item_factors.data.size() != n * static_cast<std::uint64_t>(f.p) ||
        f.user_bias.size() != m || f.item_bias.size() != n)
        throw Error("model file: factor tensor shape mismatch");
    return f;
}

inline void write_network(std::ostream& out, const MlpNetwork& net) {
    write_u8(out, net.modeling == InputModeling::Concat ? 0 : 1);
    write_u8(out, static_cast<std::uint8_t>(net.activation));
    write_u32(out, static_cast<std::uint32_t>(net.hidden_count));
    write_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        write_u64(out, layer.weights.rows);
        write_u64(out, layer.weights.cols);
        write_f64_vec(out, layer.weights.data);
        write_f64_vec(out, layer.bias);
    }
}

inline MlpNetwork read_network(std::istream& in) {
    MlpNetwork net;
    net.modeling = read_u8(in) == 0 ? InputModeling::Concat : InputModeling::Hadamard;
    net.activation = static_cast<Activation>(read_u8(in));
    net.hidden_count = static_cast<std::int32_t>(read_u32(in));
    const std::uint32_t n_layers = read_u32(in);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        MlpLayer layer;
        layer.weights.rows = read_u64(in);
        layer.weights.cols = read_u64(in);
        layer.weights.data = read_f64_vec(in);
        layer.bias = read_f64_vec(in);
        if (layer.weights.data.size() != layer.weights.rows * layer.weights.cols ||
            layer.bias.size() != layer.weights.rows)
            throw Error("model file: layer shape mismatch");
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline void write_header(std::ostream& out, bool has_factors, bool has_network) {
    out.write(kModelMagic, 4);
    write_u32(out, kModelVersion);
    write_u8(out, has_factors);
    write_u8(out, has_network);
}

inline std::pair<bool, bool> read_header(std::istream& in, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
        throw Error(path + ": not a cflab model file");
    const std::uint32_t version = read_u32(in);
    if (version != kModelVersion)
        throw Error(path + ": unsupported model format version " + std::to_string(version));
    const bool has_factors = read_u8(in) != 0;
    const bool has_network = read_u8(in) != 0;
    return {has_factors, has_network};
}

}  // namespace detail

inline void save_model(const LatentFactors& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file: " + path);
    detail::write_header(out, true, false);
    detail::write_factors(out, f);
    if (!out) throw Error("write failed: " + path);
}

inline void save_model(const NcfnModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file: " + path);
    detail::write_header(out, true, true);
    detail::write_factors(out, model.factors);
    detail::write_network(out, model.net);
    if (!out) throw Error("write failed: " + path);
}

struct LoadedModel {
    std::optional<LatentFactors> factors;
    std::optional<MlpNetwork> net;
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file: " + path);
    const auto [has_factors, has_network] = detail::read_header(in, path);
    LoadedModel out;
    if (has_factors) out.factors = detail::read_factors(in);
    if (has_network) out.net = detail::read_network(in);
    return out;
}

inline LatentFactors load_factors(const std::string& path) {
    auto m = load_model(path);
    if (!m.factors) throw Error(path + ": model file carries no latent factors");
    return std::move(*m.factors);
}

inline NcfnModel load_ncfn(const std::string& path) {
    auto m = load_model(path);
    if (!m.factors || !m.net) throw Error(path + ": model file is not a full neural checkpoint");
    return {std::move(*m.factors), std::move(*m.net)};
}

}  // namespace cflab
