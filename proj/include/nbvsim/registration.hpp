// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_REGISTRATION_HPP
#define NBVSIM_REGISTRATION_HPP

#include <algorithm>
#include <climits>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"

namespace nbvsim {

struct PartialCloud {
    std::int32_t instanceHint = kNoInstance;  // raw id from the segmentation oracle
    std::vector<Vec3> points;
};

// Ground-truth instance segmentation stand-in. Groups object-hit pixels by
// instance id, back-projects them to world points, and drops whole instances
// with probability missProb.
inline std::vector<PartialCloud> segmentOracle(const Observation& obs, double missProb,
                                               std::uint64_t seed) {
    if (missProb < 0.0 || missProb > 1.0)
        throw std::invalid_argument("segmentOracle: missProb must be in [0,1]");
    std::map<std::int32_t, PartialCloud> byId;
    int W = obs.intr.width, H = obs.intr.height;
    for (int v = 0; v < H; ++v)
        for (int u = 0; u < W; ++u) {
            std::int32_t id = obs.instanceAt(u, v);
            double d = obs.depthAt(u, v);
            if (id == kNoInstance || !std::isfinite(d)) continue;
            PartialCloud& c = byId[id];
            c.instanceHint = id;
            c.points.push_back(backProject(obs.viewpoint, obs.intr, u, v, d));
        }
    Rng rng(seed);
    std::vector<PartialCloud> out;
    for (auto& [id, cloud] : byId) {
        double draw = rng.uniform();
        if (draw < missProb) continue;  // whole-instance segmentation miss
        out.push_back(std::move(cloud));
    }
    return out;
}

// Exact minimum point-to-point distance, brute force.
inline double minPairDist(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double best2 = std::numeric_limits<double>::infinity();
    for (const Vec3& p : a)
        for (const Vec3& q : b) best2 = std::min(best2, (p - q).norm2());
    return std::sqrt(best2);
}

namespace detail {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::int64_t v : {k.x, k.y, k.z}) {
            h ^= std::uint64_t(v);
            h *= 0x100000001b3ULL;
        }
        return std::size_t(h);
    }
};

}  // namespace detail

// Uniform-hash point index with cell size >= the query radius. Queries are
// exact for distances below the radius (27-cell neighborhood is sufficient).
class PointHash {
public:
    explicit PointHash(double cell) : cell_(cell) {}

    void insert(const Vec3& p) {
        cells_[key(p)].push_back(p);
        ++size_;
    }

    std::size_t size() const { return size_; }

    // Minimum distance from p to any stored point, exact when the result is
    // below the cell size; otherwise returns infinity.
    double minDistWithin(const Vec3& p) const {
        detail::CellKey k = key(p);
        double best2 = std::numeric_limits<double>::infinity();
        for (std::int64_t dz = -1; dz <= 1; ++dz)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    auto it = cells_.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == cells_.end()) continue;
                    for (const Vec3& q : it->second)
                        best2 = std::min(best2, (p - q).norm2());
                }
        double best = std::sqrt(best2);
        return best < cell_ ? best : std::numeric_limits<double>::infinity();
    }

private:
    detail::CellKey key(const Vec3& p) const {
        return {std::int64_t(std::floor(p.x / cell_)), std::int64_t(std::floor(p.y / cell_)),
                std::int64_t(std::floor(p.z / cell_))};
    }
    double cell_;
    std::unordered_map<detail::CellKey, std::vector<Vec3>, detail::CellHash> cells_;
    std::size_t size_ = 0;
};

struct Instance {
    std::int32_t id = 0;
    std::vector<Vec3> points;
    Aabb bounds = Aabb::empty();
    std::set<VoxelCoord> voxels;          // voxelized accumulated points
    std::size_t predictedVoxels = 0;      // last completion output size
};

class InstanceStore {
public:
    explicit InstanceStore(double mergeThreshold = 0.05)
        : eta_(mergeThreshold) {
        if (eta_ <= 0.0) throw std::invalid_argument("InstanceStore: eta must be positive");
    }

    double eta() const { return eta_; }
    const std::vector<Instance>& instances() const { return instances_; }
    std::vector<Instance>& instances() { return instances_; }

    // Append a cloud to the nearest instance below threshold, else create a
    // new instance. Returns the instance id the cloud landed in.
    std::int32_t addCloud(const PartialCloud& cloud, const GridDims& dims) {
        double bestDist = std::numeric_limits<double>::infinity();
        std::int32_t bestId = kNoInstance;
        for (std::size_t n = 0; n < instances_.size(); ++n) {
            double dmin = std::numeric_limits<double>::infinity();
            for (const Vec3& p : cloud.points) {
                dmin = std::min(dmin, hashes_[n].minDistWithin(p));
                if (dmin == 0.0) break;
            }
            if (dmin < eta_ && dmin < bestDist) {
                bestDist = dmin;
                bestId = std::int32_t(n);
            }
        }
        if (bestId == kNoInstance) {
            bestId = std::int32_t(instances_.size());
            instances_.push_back(Instance{bestId, {}, Aabb::empty(), {}, 0});
            hashes_.emplace_back(eta_);
        }
        Instance& inst = instances_[bestId];
        for (const Vec3& p : cloud.points) {
            inst.points.push_back(p);
            inst.bounds.expand(p);
            hashes_[bestId].insert(p);
            int i, j, k;
            if (dims.locate(p, i, j, k)) inst.voxels.insert({i, j, k});
        }
        return bestId;
    }

private:
    double eta_;
    std::vector<Instance> instances_;
    std::vector<PointHash> hashes_;
};

// Reference merge used to cross-check the hashed store: brute-force nearest
// instance below eta.
inline std::int32_t bruteForceMergeTarget(const std::vector<Instance>& instances,
                                          const PartialCloud& cloud, double eta) {
    double bestDist = std::numeric_limits<double>::infinity();
    std::int32_t bestId = kNoInstance;
    for (const Instance& inst : instances) {
        double d = minPairDist(cloud.points, inst.points);
        if (d < eta && d < bestDist) {
            bestDist = d;
            bestId = inst.id;
        }
    }
    return bestId;
}

struct NormalizedCloud {
    std::vector<Vec3> points;
    Vec3 center;
    double scale = 1.0;
};

// Project a partial cloud toward the unit ball: subtract the point mean and
// divide by the cube root of the maximum plausible object volume.
inline NormalizedCloud normalizePartial(const std::vector<Vec3>& points, double volumeCap) {
    if (points.empty()) throw std::invalid_argument("normalizePartial: empty cloud");
    if (volumeCap <= 0.0) throw std::invalid_argument("normalizePartial: bad volume cap");
    NormalizedCloud out;
    Vec3 mean{0, 0, 0};
    for (const Vec3& p : points) mean += p;
    out.center = mean / double(points.size());
    out.scale = std::cbrt(volumeCap);
    out.points.reserve(points.size());
    for (const Vec3& p : points) out.points.push_back((p - out.center) / out.scale);
    return out;
}

inline std::vector<Vec3> denormalize(const NormalizedCloud& c) {
    std::vector<Vec3> out;
    out.reserve(c.points.size());
    for (const Vec3& p : c.points) out.push_back(p * c.scale + c.center);
    return out;
}

// Geometric shape completion: fill the unknown voxels inside the tight AABB
// of the instance's voxelized points. FREE and SEEN voxels are never touched.
inline std::vector<VoxelCoord> completeInstance(const Instance& inst, const BeliefGrid& grid) {
    std::vector<VoxelCoord> predicted;
    if (inst.voxels.empty()) return predicted;
    int i0 = INT_MAX, j0 = INT_MAX, k0 = INT_MAX, i1 = INT_MIN, j1 = INT_MIN, k1 = INT_MIN;
    for (const VoxelCoord& v : inst.voxels) {
        i0 = std::min(i0, v.i); i1 = std::max(i1, v.i);
        j0 = std::min(j0, v.j); j1 = std::max(j1, v.j);
        k0 = std::min(k0, v.k); k1 = std::max(k1, v.k);
    }
    const GridDims& d = grid.dims();
    for (int k = std::max(0, k0); k <= std::min(d.nz - 1, k1); ++k)
        for (int j = std::max(0, j0); j <= std::min(d.ny - 1, j1); ++j)
            for (int i = std::max(0, i0); i <= std::min(d.nx - 1, i1); ++i)
                if (grid.state(i, j, k) == VoxelState::Unknown)
                    predicted.push_back({i, j, k});
    return predicted;
}

// Symmetric squared-L2 Chamfer distance between two point sets.
inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
    auto oneWay = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        double sum = 0.0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) best = std::min(best, (p - q).norm2());
            sum += best;
        }
        return sum / double(from.size());
    };
    return oneWay(a, b) + oneWay(b, a);
}

struct RegistrationConfig {
    double eta = 0.05;
    double missProb = 0.0;
    bool completionOn = true;
    std::uint64_t seed = 0;
};

// Full per-observation registration pipeline: segment, merge into the store,
// carve the belief, then (optionally) complete each touched instance.
inline std::pair<BeliefGrid, InstanceStore> integrateObservation(
    const BeliefGrid& grid, const Observation& obs, const InstanceStore& store,
    const RegistrationConfig& cfg) {
    InstanceStore newStore = store;
    std::vector<PartialCloud> clouds = segmentOracle(obs, cfg.missProb, cfg.seed);

    std::int32_t maxRaw = -1;
    for (const PartialCloud& c : clouds) maxRaw = std::max(maxRaw, c.instanceHint);
    std::vector<std::int32_t> idMap(std::size_t(maxRaw + 1), kNoInstance);
    std::vector<std::int32_t> touched;
    for (const PartialCloud& c : clouds) {
        std::int32_t storeId = newStore.addCloud(c, grid.dims());
        idMap[c.instanceHint] = storeId;
        touched.push_back(storeId);
    }

    BeliefGrid newGrid = carveVisibility(grid, obs, obs.intr, idMap);

    if (cfg.completionOn) {
        for (std::int32_t id : touched) {
            Instance& inst = newStore.instances()[id];
            std::vector<VoxelCoord> pred = completeInstance(inst, newGrid);
            for (const VoxelCoord& v : pred)
                newGrid.setOccupied(v.i, v.j, v.k, OccOrigin::Predicted, id);
            inst.predictedVoxels = pred.size();
        }
    }
    return {std::move(newGrid), std::move(newStore)};
}

// --- serialization ---------------------------------------------------------

inline nlohmann::json storeToJson(const InstanceStore& store) {
    nlohmann::json j = nlohmann::json::array();
    for (const Instance& inst : store.instances()) {
        j.push_back({
            {"id", inst.id},
            {"point_count", inst.points.size()},
            {"aabb", {{"lo", {inst.bounds.lo.x, inst.bounds.lo.y, inst.bounds.lo.z}},
                      {"hi", {inst.bounds.hi.x, inst.bounds.hi.y, inst.bounds.hi.z}}}},
            {"predicted_voxels", inst.predictedVoxels},
        });
    }
    return j;
}

inline void saveXyz(const std::vector<Vec3>& points, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("saveXyz: cannot open " + path);
    for (const Vec3& p : points) f << p.x << " " << p.y << " " << p.z << "\n";
}

}  // namespace nbvsim

#endif
