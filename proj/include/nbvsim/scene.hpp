// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_SCENE_HPP
#define NBVSIM_SCENE_HPP

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"

namespace nbvsim {

enum class Face { MinusX, PlusX, MinusY, PlusY, MinusZ, PlusZ };

enum class ShapeKind { Box, Cylinder, Sphere, LPrism };

inline const char* shapeName(ShapeKind s) {
    switch (s) {
        case ShapeKind::Box: return "box";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::LPrism: return "l-prism";
    }
    return "?";
}

struct VoxelCoord {
    int i, j, k;
    bool operator<(const VoxelCoord& o) const {
        if (k != o.k) return k < o.k;
        if (j != o.j) return j < o.j;
        return i < o.i;
    }
    bool operator==(const VoxelCoord& o) const { return i == o.i && j == o.j && k == o.k; }
};

struct GroundTruthObject {
    int id = 0;
    ShapeKind shape = ShapeKind::Box;
    Vec3 position;      // shape center, world frame
    double yaw = 0.0;
    Vec3 sizeParams;    // full extents per axis (meters)
    std::vector<VoxelCoord> voxels;
};

// Point-in-shape test in the object's local (yaw-rotated, centered) frame.
inline bool insideShape(const GroundTruthObject& obj, const Vec3& worldPoint) {
    Vec3 d = worldPoint - obj.position;
    double c = std::cos(-obj.yaw), s = std::sin(-obj.yaw);
    Vec3 p{c * d.x - s * d.y, s * d.x + c * d.y, d.z};
    Vec3 h = obj.sizeParams * 0.5;
    switch (obj.shape) {
        case ShapeKind::Box:
            return std::abs(p.x) <= h.x && std::abs(p.y) <= h.y && std::abs(p.z) <= h.z;
        case ShapeKind::Cylinder: {
            double r = h.x;
            return p.x * p.x + p.y * p.y <= r * r && std::abs(p.z) <= h.z;
        }
        case ShapeKind::Sphere: {
            double r = h.x;
            return p.norm2() <= r * r;
        }
        case ShapeKind::LPrism:
            // box with the (+x, +z) quadrant removed
            if (!(std::abs(p.x) <= h.x && std::abs(p.y) <= h.y && std::abs(p.z) <= h.z))
                return false;
            return !(p.x > 0.0 && p.z > 0.0);
    }
    return false;
}

struct SceneSpec {
    GridDims dims;
    Face openingFace = Face::MinusX;
    double cabinetHeight = 0.1;   // cabinet floor above world ground
    Vec3 basePosition;            // camera staging base (reach center)
    std::vector<GroundTruthObject> objects;
    std::uint64_t seed = 0;
};

struct Range {
    double lo, hi;
    void check(const char* name) const {
        if (!(lo <= hi)) throw std::invalid_argument(std::string("bad range ") + name);
    }
};

struct DomainRandomizationConfig {
    Range extentX{0.5, 1.0};
    Range extentY{1.1, 1.5};
    Range extentZ{0.3, 0.7};
    Range cabinetHeight{0.05, 0.2};
    Range baseOffsetX{-0.5, -0.1};
    Range baseOffsetY{-0.3, 0.3};
    int minObjects = 3, maxObjects = 10;
    Range objectSize{0.05, 0.25};
    double resolution = 0.025;
    int placementRetries = 60;

    void validate() const {
        extentX.check("extentX"); extentY.check("extentY"); extentZ.check("extentZ");
        cabinetHeight.check("cabinetHeight");
        baseOffsetX.check("baseOffsetX"); baseOffsetY.check("baseOffsetY");
        objectSize.check("objectSize");
        if (minObjects < 3 || maxObjects < minObjects || maxObjects > 10)
            throw std::invalid_argument("object count range must lie within [3,10]");
        if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
    }
};

// Voxelize a shape at its current pose: every grid cell whose center lies
// inside the shape. Returns false if any voxel leaves the strict interior
// [1, n-2] on some axis.
inline bool voxelizeObject(const GridDims& dims, GroundTruthObject& obj) {
    obj.voxels.clear();
    Vec3 h = obj.sizeParams * 0.5;
    double rad = std::sqrt(h.x * h.x + h.y * h.y);  // yaw-swept xy radius
    Aabb b{{obj.position.x - rad, obj.position.y - rad, obj.position.z - h.z},
           {obj.position.x + rad, obj.position.y + rad, obj.position.z + h.z}};
    int i0, j0, k0, i1, j1, k1;
    Vec3 rel0 = b.lo - dims.origin, rel1 = b.hi - dims.origin;
    i0 = int(std::floor(rel0.x / dims.resolution)); i1 = int(std::floor(rel1.x / dims.resolution));
    j0 = int(std::floor(rel0.y / dims.resolution)); j1 = int(std::floor(rel1.y / dims.resolution));
    k0 = int(std::floor(rel0.z / dims.resolution)); k1 = int(std::floor(rel1.z / dims.resolution));
    for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                if (!insideShape(obj, dims.voxelCenter(i, j, k))) continue;
                if (i < 1 || i > dims.nx - 2 || j < 1 || j > dims.ny - 2 ||
                    k < 1 || k > dims.nz - 2)
                    return false;
                obj.voxels.push_back({i, j, k});
            }
    return !obj.voxels.empty();
}

namespace detail {

inline bool overlapsAny(const std::vector<VoxelCoord>& voxels,
                        const std::set<VoxelCoord>& occupied) {
    for (const VoxelCoord& v : voxels)
        if (occupied.count(v)) return true;
    return false;
}

}  // namespace detail

// Generate a randomized ground-truth cabinet scene. Pure function of
// (config, seed): extents, base offset, and object layout all come from a
// single seeded stream. Objects are settled by a vertical drop with overlap
// rejection.
inline SceneSpec generateScene(const DomainRandomizationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    SceneSpec spec;
    spec.seed = seed;

    double dx = rng.uniform(cfg.extentX.lo, cfg.extentX.hi);
    double dy = rng.uniform(cfg.extentY.lo, cfg.extentY.hi);
    double dz = rng.uniform(cfg.extentZ.lo, cfg.extentZ.hi);
    spec.cabinetHeight = rng.uniform(cfg.cabinetHeight.lo, cfg.cabinetHeight.hi);

    spec.dims.resolution = cfg.resolution;
    spec.dims.nx = std::max(4, int(std::lround(dx / cfg.resolution)));
    spec.dims.ny = std::max(4, int(std::lround(dy / cfg.resolution)));
    spec.dims.nz = std::max(4, int(std::lround(dz / cfg.resolution)));
    double wy = spec.dims.ny * cfg.resolution;
    spec.dims.origin = {0.0, -wy / 2.0, spec.cabinetHeight};
    spec.openingFace = Face::MinusX;

    double bx = rng.uniform(cfg.baseOffsetX.lo, cfg.baseOffsetX.hi);
    double by = rng.uniform(cfg.baseOffsetY.lo, cfg.baseOffsetY.hi);
    spec.basePosition = {bx, by, spec.cabinetHeight + spec.dims.nz * cfg.resolution * 0.5};

    int nObj = int(rng.uniformInt(cfg.minObjects, cfg.maxObjects));
    std::set<VoxelCoord> occupied;
    Aabb world = spec.dims.worldBox();

    for (int n = 0; n < nObj; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.placementRetries && !placed; ++attempt) {
            GroundTruthObject obj;
            obj.id = int(spec.objects.size());
            obj.shape = ShapeKind(rng.uniformInt(0, 3));
            double sx = rng.uniform(cfg.objectSize.lo, cfg.objectSize.hi);
            double sy = rng.uniform(cfg.objectSize.lo, cfg.objectSize.hi);
            double sz = rng.uniform(cfg.objectSize.lo, cfg.objectSize.hi);
            if (obj.shape == ShapeKind::Cylinder) sy = sx;
            if (obj.shape == ShapeKind::Sphere) sy = sz = sx;
            obj.sizeParams = {sx, sy, sz};
            obj.yaw = rng.uniform(0.0, 2.0 * M_PI);

            double margin = std::sqrt(sx * sx + sy * sy) / 2.0 + 2.0 * cfg.resolution;
            double xlo = world.lo.x + margin, xhi = world.hi.x - margin;
            double ylo = world.lo.y + margin, yhi = world.hi.y - margin;
            if (xlo >= xhi || ylo >= yhi) continue;
            obj.position = {rng.uniform(xlo, xhi), rng.uniform(ylo, yhi), 0.0};

            // drop: lowest resting height with no interpenetration
            double zFloor = world.lo.z + cfg.resolution + sz / 2.0;
            double zTop = world.hi.z - cfg.resolution - sz / 2.0;
            bool ok = false;
            for (double z = zFloor; z <= zTop + 1e-12; z += cfg.resolution) {
                obj.position.z = z;
                if (!voxelizeObject(spec.dims, obj)) { ok = false; break; }
                if (!detail::overlapsAny(obj.voxels, occupied)) { ok = true; break; }
                ok = false;
            }
            if (!ok) continue;
            for (const VoxelCoord& v : obj.voxels) occupied.insert(v);
            spec.objects.push_back(std::move(obj));
            placed = true;
        }
    }
    if (int(spec.objects.size()) < 3)
        throw std::runtime_error("generateScene: could not place a minimum of 3 objects");
    return spec;
}

// Oracle world used only by the simulated sensor and labelers: everything
// determined, nothing unknown.
inline BeliefGrid groundTruthGrid(const SceneSpec& spec) {
    BeliefGrid g(spec.dims);
    for (int k = 0; k < spec.dims.nz; ++k)
        for (int j = 0; j < spec.dims.ny; ++j)
            for (int i = 0; i < spec.dims.nx; ++i) g.setFree(i, j, k);
    for (const GroundTruthObject& obj : spec.objects)
        for (const VoxelCoord& v : obj.voxels)
            g.setOccupied(v.i, v.j, v.k, OccOrigin::Seen, obj.id);
    return g;
}

// --- JSON serialization ----------------------------------------------------

inline const char* faceName(Face f) {
    switch (f) {
        case Face::MinusX: return "-x"; case Face::PlusX: return "+x";
        case Face::MinusY: return "-y"; case Face::PlusY: return "+y";
        case Face::MinusZ: return "-z"; case Face::PlusZ: return "+z";
    }
    return "?";
}

inline Face faceFromName(const std::string& s) {
    if (s == "-x") return Face::MinusX;
    if (s == "+x") return Face::PlusX;
    if (s == "-y") return Face::MinusY;
    if (s == "+y") return Face::PlusY;
    if (s == "-z") return Face::MinusZ;
    if (s == "+z") return Face::PlusZ;
    throw std::invalid_argument("unknown face " + s);
}

inline ShapeKind shapeFromName(const std::string& s) {
    if (s == "box") return ShapeKind::Box;
    if (s == "cylinder") return ShapeKind::Cylinder;
    if (s == "sphere") return ShapeKind::Sphere;
    if (s == "l-prism") return ShapeKind::LPrism;
    throw std::invalid_argument("unknown shape " + s);
}

inline nlohmann::json sceneToJson(const SceneSpec& spec) {
    nlohmann::json j;
    j["dims"] = {spec.dims.nx, spec.dims.ny, spec.dims.nz};
    j["resolution"] = spec.dims.resolution;
    j["origin"] = {spec.dims.origin.x, spec.dims.origin.y, spec.dims.origin.z};
    j["opening_face"] = faceName(spec.openingFace);
    j["cabinet_height"] = spec.cabinetHeight;
    j["base_position"] = {spec.basePosition.x, spec.basePosition.y, spec.basePosition.z};
    j["seed"] = spec.seed;
    j["objects"] = nlohmann::json::array();
    for (const GroundTruthObject& o : spec.objects) {
        j["objects"].push_back({
            {"id", o.id},
            {"shape", shapeName(o.shape)},
            {"position", {o.position.x, o.position.y, o.position.z}},
            {"yaw", o.yaw},
            {"size", {o.sizeParams.x, o.sizeParams.y, o.sizeParams.z}},
        });
    }
    return j;
}

inline SceneSpec sceneFromJson(const nlohmann::json& j) {
    SceneSpec spec;
    spec.dims.nx = j.at("dims")[0];
    spec.dims.ny = j.at("dims")[1];
    spec.dims.nz = j.at("dims")[2];
    spec.dims.resolution = j.at("resolution");
    spec.dims.origin = {j.at("origin")[0], j.at("origin")[1], j.at("origin")[2]};
    spec.openingFace = faceFromName(j.at("opening_face"));
    spec.cabinetHeight = j.at("cabinet_height");
    spec.basePosition = {j.at("base_position")[0], j.at("base_position")[1],
                         j.at("base_position")[2]};
    spec.seed = j.at("seed");
    for (const auto& jo : j.at("objects")) {
        GroundTruthObject o;
        o.id = jo.at("id");
        o.shape = shapeFromName(jo.at("shape"));
        o.position = {jo.at("position")[0], jo.at("position")[1], jo.at("position")[2]};
        o.yaw = jo.at("yaw");
        o.sizeParams = {jo.at("size")[0], jo.at("size")[1], jo.at("size")[2]};
        if (!voxelizeObject(spec.dims, o))
            throw std::runtime_error("sceneFromJson: object voxelization failed");
        spec.objects.push_back(std::move(o));
    }
    return spec;
}

inline void saveScene(const SceneSpec& spec, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("saveScene: cannot open " + path);
    f << sceneToJson(spec).dump(2) << "\n";
}

inline SceneSpec loadScene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("loadScene: cannot open " + path);
    nlohmann::json j;
    f >> j;
    return sceneFromJson(j);
}

}  // namespace nbvsim

#endif
