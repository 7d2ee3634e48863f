// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_GRID_HPP
#define NBVSIM_GRID_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbvsim/geom.hpp"

namespace nbvsim {

enum class VoxelState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };
enum class OccOrigin : std::uint8_t { Seen = 0, Predicted = 1 };

constexpr std::int32_t kNoInstance = -1;

struct GridDims {
    int nx = 0, ny = 0, nz = 0;
    double resolution = 0.025;
    Vec3 origin;  // world position of the (0,0,0) voxel's min corner

    std::size_t count() const { return std::size_t(nx) * ny * nz; }
    bool operator==(const GridDims& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz &&
               resolution == o.resolution && origin.x == o.origin.x &&
               origin.y == o.origin.y && origin.z == o.origin.z;
    }

    std::size_t index(int i, int j, int k) const {
        return (std::size_t(k) * ny + j) * nx + i;
    }
    bool inBounds(int i, int j, int k) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
    }

    Vec3 voxelCenter(int i, int j, int k) const {
        return origin + Vec3{(i + 0.5) * resolution, (j + 0.5) * resolution,
                             (k + 0.5) * resolution};
    }
    Aabb voxelBox(int i, int j, int k) const {
        Vec3 lo = origin + Vec3{i * resolution, j * resolution, k * resolution};
        return {lo, lo + Vec3{resolution, resolution, resolution}};
    }
    Aabb worldBox() const {
        return {origin, origin + Vec3{nx * resolution, ny * resolution, nz * resolution}};
    }

    // Voxel containing a world point; false if outside the grid.
    bool locate(const Vec3& p, int& i, int& j, int& k) const {
        Vec3 rel = p - origin;
        i = int(std::floor(rel.x / resolution));
        j = int(std::floor(rel.y / resolution));
        k = int(std::floor(rel.z / resolution));
        return inBounds(i, j, k);
    }
};

// Three-state belief over the scene volume with provenance for occupied
// voxels (directly seen vs predicted by shape completion) and per-voxel
// instance labels for occupied voxels.
class BeliefGrid {
public:
    BeliefGrid() = default;
    explicit BeliefGrid(const GridDims& dims)
        : dims_(dims),
          state_(dims.count(), VoxelState::Unknown),
          origin_(dims.count(), OccOrigin::Seen),
          instance_(dims.count(), kNoInstance) {}

    const GridDims& dims() const { return dims_; }

    VoxelState state(int i, int j, int k) const { return state_[dims_.index(i, j, k)]; }
    VoxelState stateAt(std::size_t idx) const { return state_[idx]; }
    OccOrigin occOrigin(int i, int j, int k) const { return origin_[dims_.index(i, j, k)]; }
    std::int32_t instanceId(int i, int j, int k) const { return instance_[dims_.index(i, j, k)]; }

    void setFree(int i, int j, int k) {
        std::size_t idx = dims_.index(i, j, k);
        state_[idx] = VoxelState::Free;
        instance_[idx] = kNoInstance;
    }
    void setOccupied(int i, int j, int k, OccOrigin og, std::int32_t inst) {
        std::size_t idx = dims_.index(i, j, k);
        state_[idx] = VoxelState::Occupied;
        origin_[idx] = og;
        instance_[idx] = inst;
    }

    std::size_t countNonUnknown() const {
        std::size_t n = 0;
        for (VoxelState s : state_)
            if (s != VoxelState::Unknown) ++n;
        return n;
    }

    std::size_t countState(VoxelState q) const {
        std::size_t n = 0;
        for (VoxelState s : state_)
            if (s == q) ++n;
        return n;
    }

    const std::vector<VoxelState>& rawState() const { return state_; }
    const std::vector<std::int32_t>& rawInstance() const { return instance_; }
    const std::vector<OccOrigin>& rawOrigin() const { return origin_; }

    bool sameDims(const BeliefGrid& o) const { return dims_ == o.dims_; }

private:
    GridDims dims_;
    std::vector<VoxelState> state_;
    std::vector<OccOrigin> origin_;
    std::vector<std::int32_t> instance_;
};

// Volumetric ratio of known voxels over the whole grid.
inline double coverage(const BeliefGrid& g) {
    std::size_t total = g.dims().count();
    if (total == 0) return 0.0;
    return double(g.countNonUnknown()) / double(total);
}

// Fraction of voxels newly known in `next` relative to `prev`. Requires
// matching dims and a monotone belief update between the two grids.
inline double coverageGain(const BeliefGrid& prev, const BeliefGrid& next) {
    if (!prev.sameDims(next)) throw std::invalid_argument("coverageGain: dims mismatch");
    std::size_t total = prev.dims().count();
    std::size_t gained = 0;
    for (std::size_t i = 0; i < total; ++i) {
        bool pKnown = prev.stateAt(i) != VoxelState::Unknown;
        bool nKnown = next.stateAt(i) != VoxelState::Unknown;
        if (pKnown && !nKnown)
            throw std::invalid_argument("coverageGain: monotonicity violation");
        if (!pKnown && nKnown) ++gained;
    }
    return total == 0 ? 0.0 : double(gained) / double(total);
}

// --- run-length-encoded binary serialization -------------------------------
//
// Layout: 16-byte header (magic "ANSV", u16 version, u16 pad, u16 nx, ny, nz,
// u16 pad), then f64 resolution + 3x f64 origin, then u32 run count and runs
// of (u32 length, u8 state, u8 occOrigin, i32 instance).

inline void saveGrid(const BeliefGrid& g, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("saveGrid: cannot open " + path);
    const GridDims& d = g.dims();
    char header[16] = {};
    std::memcpy(header, "ANSV", 4);
    std::uint16_t ver = 1;
    std::uint16_t nx = std::uint16_t(d.nx), ny = std::uint16_t(d.ny), nz = std::uint16_t(d.nz);
    std::memcpy(header + 4, &ver, 2);
    std::memcpy(header + 8, &nx, 2);
    std::memcpy(header + 10, &ny, 2);
    std::memcpy(header + 12, &nz, 2);
    f.write(header, 16);
    double geo[4] = {d.resolution, d.origin.x, d.origin.y, d.origin.z};
    f.write(reinterpret_cast<const char*>(geo), sizeof geo);

    struct Run { std::uint32_t len; std::uint8_t st, og; std::int32_t inst; };
    std::vector<Run> runs;
    std::size_t total = d.count();
    for (std::size_t i = 0; i < total;) {
        std::uint8_t st = std::uint8_t(g.rawState()[i]);
        std::uint8_t og = std::uint8_t(g.rawOrigin()[i]);
        std::int32_t inst = g.rawInstance()[i];
        std::size_t j = i + 1;
        while (j < total && std::uint8_t(g.rawState()[j]) == st &&
               std::uint8_t(g.rawOrigin()[j]) == og && g.rawInstance()[j] == inst)
            ++j;
        runs.push_back({std::uint32_t(j - i), st, og, inst});
        i = j;
    }
    std::uint32_t nRuns = std::uint32_t(runs.size());
    f.write(reinterpret_cast<const char*>(&nRuns), 4);
    for (const Run& r : runs) {
        f.write(reinterpret_cast<const char*>(&r.len), 4);
        f.write(reinterpret_cast<const char*>(&r.st), 1);
        f.write(reinterpret_cast<const char*>(&r.og), 1);
        f.write(reinterpret_cast<const char*>(&r.inst), 4);
    }
    if (!f) throw std::runtime_error("saveGrid: write failed for " + path);
}

inline BeliefGrid loadGrid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("loadGrid: cannot open " + path);
    char header[16];
    f.read(header, 16);
    if (!f || std::memcmp(header, "ANSV", 4) != 0)
        throw std::runtime_error("loadGrid: bad magic in " + path);
    std::uint16_t ver, nx, ny, nz;
    std::memcpy(&ver, header + 4, 2);
    std::memcpy(&nx, header + 8, 2);
    std::memcpy(&ny, header + 10, 2);
    std::memcpy(&nz, header + 12, 2);
    if (ver != 1) throw std::runtime_error("loadGrid: unsupported version");
    double geo[4];
    f.read(reinterpret_cast<char*>(geo), sizeof geo);
    GridDims d;
    d.nx = nx; d.ny = ny; d.nz = nz;
    d.resolution = geo[0];
    d.origin = {geo[1], geo[2], geo[3]};
    BeliefGrid g(d);
    std::uint32_t nRuns;
    f.read(reinterpret_cast<char*>(&nRuns), 4);
    std::size_t pos = 0;
    for (std::uint32_t r = 0; r < nRuns; ++r) {
        std::uint32_t len;
        std::uint8_t st, og;
        std::int32_t inst;
        f.read(reinterpret_cast<char*>(&len), 4);
        f.read(reinterpret_cast<char*>(&st), 1);
        f.read(reinterpret_cast<char*>(&og), 1);
        f.read(reinterpret_cast<char*>(&inst), 4);
        if (!f || pos + len > d.count()) throw std::runtime_error("loadGrid: corrupt runs");
        for (std::uint32_t i = 0; i < len; ++i, ++pos) {
            int vi = int(pos % d.nx);
            int vj = int((pos / d.nx) % d.ny);
            int vk = int(pos / (std::size_t(d.nx) * d.ny));
            if (VoxelState(st) == VoxelState::Free) g.setFree(vi, vj, vk);
            else if (VoxelState(st) == VoxelState::Occupied)
                g.setOccupied(vi, vj, vk, OccOrigin(og), inst);
        }
    }
    if (pos != d.count()) throw std::runtime_error("loadGrid: truncated runs");
    return g;
}

}  // namespace nbvsim

#endif
