#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffdepth/core/tensor.hpp"
#include "diffdepth/nn/param.hpp"

namespace diffdepth {

// Versioned checkpoint container: magic string, version integer, the run
// config that produced the parameters, then name/shape/dtype-tagged raw
// arrays (little-endian).
inline constexpr char kCheckpointMagic[8] = {'D', 'D', 'E', 'P', 'T', 'H', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const std::string& config_json,
                     const nn::ParamSet<T>& params) {
    static_assert(sizeof(T) == 8 || sizeof(T) == 4, "unsupported scalar");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 8);
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        out.put(sizeof(T) == 8 ? 0 : 1);  // dtype tag: 0 = f64, 1 = f32
        detail::write_u32(out, static_cast<std::uint32_t>(p.value->ndim()));
        for (std::size_t d : p.value->shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p.value->data.data()),
                  static_cast<std::streamsize>(p.value->size() * sizeof(T)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

// Reads only the header and embedded config JSON.
inline std::string read_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_checkpoint_config: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("read_checkpoint_config: " + path + " is not a checkpoint file");
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("read_checkpoint_config: unsupported version " + std::to_string(version));
    const std::uint32_t config_len = detail::read_u32(in);
    std::string config_json(config_len, '\0');
    in.read(config_json.data(), config_len);
    if (!in) throw std::runtime_error("read_checkpoint_config: truncated file");
    return config_json;
}

// Returns the embedded config JSON. Parameter arrays are matched by name and
// validated against the shapes the param set declares.
template <typename T>
std::string load_checkpoint(const std::string& path, nn::ParamSet<T>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t config_len = detail::read_u32(in);
    std::string config_json(config_len, '\0');
    in.read(config_json.data(), config_len);

    const std::uint32_t count = detail::read_u32(in);
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<T>>> arrays;
    for (std::uint32_t a = 0; a < count; ++a) {
        const std::uint32_t name_len = detail::read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const int dtype = in.get();
        if (dtype != (sizeof(T) == 8 ? 0 : 1))
            throw std::runtime_error("load_checkpoint: dtype mismatch for " + name);
        const std::uint32_t ndim = detail::read_u32(in);
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = detail::read_u32(in);
            total *= d;
        }
        std::vector<T> data(total);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(T)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated array " + name);
        arrays[name] = {std::move(shape), std::move(data)};
    }

    for (auto& p : params) {
        auto it = arrays.find(p.name);
        if (it == arrays.end())
            throw std::runtime_error("load_checkpoint: missing parameter " + p.name);
        if (it->second.first != p.value->shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for " + p.name + " (file " +
                                     shape_string(it->second.first) + ", model " +
                                     shape_string(p.value->shape) + ")");
        p.value->data = it->second.second;
        arrays.erase(it);
    }
    if (!arrays.empty())
        throw std::runtime_error("load_checkpoint: unexpected parameter " + arrays.begin()->first);
    return config_json;
}

}  // namespace diffdepth
