#ifndef NATLAB_CHECKPOINT_HPP
#define NATLAB_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "natlab/image_io.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// Versioned little-endian checkpoint container:
//   "NATK" | version u32 | config len u64 + canonical config text
//   | lineage len u64 + lineage text | param count u64
//   | per param: name len u64, name, rank u32, extents u32..., f64 payload
struct Checkpoint {
    uint32_t version = 1;
    std::string config_text;  // canonical RunConfig echo
    std::string lineage;      // seed/stage provenance, human-readable
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor& find(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return true;
        return false;
    }
};

namespace detail {

template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write("NATK", 4);
    detail::write_pod<uint32_t>(out, ck.version);
    detail::write_pod<uint64_t>(out, ck.config_text.size());
    out.write(ck.config_text.data(), std::streamsize(ck.config_text.size()));
    detail::write_pod<uint64_t>(out, ck.lineage.size());
    out.write(ck.lineage.data(), std::streamsize(ck.lineage.size()));
    detail::write_pod<uint64_t>(out, ck.params.size());
    for (const auto& [name, t] : ck.params) {
        detail::write_pod<uint64_t>(out, name.size());
        out.write(name.data(), std::streamsize(name.size()));
        detail::write_pod<uint32_t>(out, uint32_t(t.rank()));
        for (int i = 0; i < t.rank(); ++i) detail::write_pod<uint32_t>(out, uint32_t(t.dim(i)));
        out.write(reinterpret_cast<const char*>(t.data().data()), std::streamsize(t.numel() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "NATK") throw std::runtime_error("not a checkpoint: " + path);
    Checkpoint ck;
    ck.version = detail::read_pod<uint32_t>(in);
    if (ck.version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(ck.version));
    auto read_str = [&in](std::string& s) {
        uint64_t len = detail::read_pod<uint64_t>(in);
        s.resize(len);
        in.read(s.data(), std::streamsize(len));
        if (!in) throw std::runtime_error("checkpoint: truncated string");
    };
    read_str(ck.config_text);
    read_str(ck.lineage);
    uint64_t count = detail::read_pod<uint64_t>(in);
    for (uint64_t i = 0; i < count; ++i) {
        std::string name;
        read_str(name);
        uint32_t rank = detail::read_pod<uint32_t>(in);
        std::vector<int> shape;
        size_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            shape.push_back(int(detail::read_pod<uint32_t>(in)));
            numel *= size_t(shape.back());
        }
        std::vector<double> data(numel);
        in.read(reinterpret_cast<char*>(data.data()), std::streamsize(numel * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
        ck.params.emplace_back(name, Tensor::from(shape, std::move(data)));
    }
    return ck;
}

// order-sensitive checksum over names and payloads
inline uint64_t params_checksum(const std::vector<std::pair<std::string, Tensor>>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t.data().data(), t.numel() * sizeof(double), h);
    }
    return h;
}

inline uint64_t params_checksum(const std::vector<Tensor>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Tensor& t : params) h = fnv1a64(t.data().data(), t.numel() * sizeof(double), h);
    return h;
}

}  // namespace natlab

#endif  // NATLAB_CHECKPOINT_HPP
