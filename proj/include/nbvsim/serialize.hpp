// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_SERIALIZE_HPP
#define NBVSIM_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbvsim {

// Named f64 tensor, the unit of the versioned parameter file format shared by
// the score surrogate and the sequence model.
struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<double> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::uint32_t s : shape) n *= s;
        return n;
    }
};

// Binary layout: magic "NBVP", u16 version, u32 tensor count; per tensor a
// u16 name length + name bytes, u32 ndims + u32 dims, then little-endian f64s.
inline void saveTensors(const std::vector<NamedTensor>& tensors, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("saveTensors: cannot open " + path);
    f.write("NBVP", 4);
    std::uint16_t ver = 1;
    f.write(reinterpret_cast<const char*>(&ver), 2);
    std::uint32_t n = std::uint32_t(tensors.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const NamedTensor& t : tensors) {
        std::uint16_t nameLen = std::uint16_t(t.name.size());
        f.write(reinterpret_cast<const char*>(&nameLen), 2);
        f.write(t.name.data(), nameLen);
        std::uint32_t nd = std::uint32_t(t.shape.size());
        f.write(reinterpret_cast<const char*>(&nd), 4);
        f.write(reinterpret_cast<const char*>(t.shape.data()), 4 * nd);
        if (t.data.size() != t.count())
            throw std::runtime_error("saveTensors: shape/data mismatch for " + t.name);
        f.write(reinterpret_cast<const char*>(t.data.data()), 8 * t.data.size());
    }
    if (!f) throw std::runtime_error("saveTensors: write failed for " + path);
}

inline std::vector<NamedTensor> loadTensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("loadTensors: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "NBVP", 4) != 0)
        throw std::runtime_error("loadTensors: bad magic in " + path);
    std::uint16_t ver;
    f.read(reinterpret_cast<char*>(&ver), 2);
    if (ver != 1) throw std::runtime_error("loadTensors: unsupported version");
    std::uint32_t n;
    f.read(reinterpret_cast<char*>(&n), 4);
    std::vector<NamedTensor> tensors(n);
    for (NamedTensor& t : tensors) {
        std::uint16_t nameLen;
        f.read(reinterpret_cast<char*>(&nameLen), 2);
        t.name.resize(nameLen);
        f.read(t.name.data(), nameLen);
        std::uint32_t nd;
        f.read(reinterpret_cast<char*>(&nd), 4);
        t.shape.resize(nd);
        f.read(reinterpret_cast<char*>(t.shape.data()), 4 * nd);
        t.data.resize(t.count());
        f.read(reinterpret_cast<char*>(t.data.data()), 8 * t.data.size());
        if (!f) throw std::runtime_error("loadTensors: truncated file " + path);
    }
    return tensors;
}

// FNV-1a 64-bit content hash, used by the artifact manifest.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fileHash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("fileHash: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof buf);
        std::streamsize got = f.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= (unsigned char)buf[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace nbvsim

#endif
