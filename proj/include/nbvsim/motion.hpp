// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_MOTION_HPP
#define NBVSIM_MOTION_HPP

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/registration.hpp"
#include "nbvsim/scene.hpp"

namespace nbvsim {

struct SceneGeometry {
    Aabb worldBox;
    Face openingFace = Face::MinusX;
    Vec3 reachCenter;
    double reachRadius = 1.2;
    double stagingDepth = 0.6;  // staging box extends this far out from the opening

    static SceneGeometry fromScene(const SceneSpec& spec) {
        SceneGeometry g;
        g.worldBox = spec.dims.worldBox();
        g.openingFace = spec.openingFace;
        g.reachCenter = spec.basePosition;
        return g;
    }

    Aabb stagingRegion() const {
        Aabb s = worldBox;
        switch (openingFace) {
            case Face::MinusX: s.hi.x = s.lo.x; s.lo.x -= stagingDepth; break;
            case Face::PlusX: s.lo.x = s.hi.x; s.hi.x += stagingDepth; break;
            case Face::MinusY: s.hi.y = s.lo.y; s.lo.y -= stagingDepth; break;
            case Face::PlusY: s.lo.y = s.hi.y; s.hi.y += stagingDepth; break;
            case Face::MinusZ: s.hi.z = s.lo.z; s.lo.z -= stagingDepth; break;
            case Face::PlusZ: s.lo.z = s.hi.z; s.hi.z += stagingDepth; break;
        }
        return s;
    }
};

// Collision world built from one belief snapshot: per-instance AABBs, thin
// boundary slabs (minus the opening aperture), unknown voxels as solid
// blocks, plus the staging region and reach constraint. The camera body is a
// sphere of radius bodyRadius.
struct CollisionModel {
    std::vector<Aabb> objectBoxes;
    std::vector<Aabb> boundarySlabs;
    GridDims dims;
    std::vector<VoxelState> voxelState;  // snapshot for unknown/free queries
    Aabb stagingRegion;
    Vec3 reachCenter;
    double reachRadius = 1.2;
    double bodyRadius = 0.04;
};

// Variant taking explicit object boxes, used when rebuilding a model from a
// recorded episode step for post-hoc path audit.
inline CollisionModel buildCollisionModel(const BeliefGrid& grid,
                                          const std::vector<Aabb>& objectBoxes,
                                          const SceneGeometry& geom,
                                          double bodyRadius = 0.04) {
    CollisionModel m;
    m.dims = grid.dims();
    m.voxelState = grid.rawState();
    m.stagingRegion = geom.stagingRegion();
    m.reachCenter = geom.reachCenter;
    m.reachRadius = geom.reachRadius;
    m.bodyRadius = bodyRadius;
    m.objectBoxes = objectBoxes;

    // one-voxel-thick slabs on every face; the opening face gets none
    const Aabb& w = geom.worldBox;
    double t = grid.dims().resolution;
    auto addSlab = [&](Face f) {
        if (f == geom.openingFace) return;
        Aabb s = w;
        switch (f) {
            case Face::MinusX: s.hi.x = w.lo.x; s.lo.x = w.lo.x - t; break;
            case Face::PlusX: s.lo.x = w.hi.x; s.hi.x = w.hi.x + t; break;
            case Face::MinusY: s.hi.y = w.lo.y; s.lo.y = w.lo.y - t; break;
            case Face::PlusY: s.lo.y = w.hi.y; s.hi.y = w.hi.y + t; break;
            case Face::MinusZ: s.hi.z = w.lo.z; s.lo.z = w.lo.z - t; break;
            case Face::PlusZ: s.lo.z = w.hi.z; s.hi.z = w.hi.z + t; break;
        }
        m.boundarySlabs.push_back(s);
    };
    for (Face f : {Face::MinusX, Face::PlusX, Face::MinusY, Face::PlusY, Face::MinusZ,
                   Face::PlusZ})
        addSlab(f);
    return m;
}

inline CollisionModel buildCollisionModel(const BeliefGrid& grid, const InstanceStore& store,
                                          const SceneGeometry& geom,
                                          double bodyRadius = 0.04) {
    std::vector<Aabb> boxes;
    for (const Instance& inst : store.instances())
        if (inst.points.size() > 0) boxes.push_back(inst.bounds);
    return buildCollisionModel(grid, boxes, geom, bodyRadius);
}

// Feasibility predicate for the free-flying camera body: clear of object
// boxes, wall slabs, and non-FREE voxels; inside staging or observed-free
// space; within reach.
inline bool isFree(const Viewpoint& pose, const CollisionModel& m) {
    const Vec3& p = pose.position;
    double r = m.bodyRadius;
    if ((p - m.reachCenter).norm() > m.reachRadius) return false;

    bool inStaging = m.stagingRegion.contains(p);
    int vi, vj, vk;
    bool inGrid = m.dims.locate(p, vi, vj, vk);
    if (!inStaging) {
        if (!inGrid) return false;
        if (m.voxelState[m.dims.index(vi, vj, vk)] != VoxelState::Free) return false;
    }

    double r2 = r * r;
    for (const Aabb& b : m.objectBoxes)
        if (pointAabbDist2(p, b) < r2) return false;
    for (const Aabb& b : m.boundarySlabs)
        if (pointAabbDist2(p, b) < r2) return false;

    // sphere vs unknown / occupied voxel blocks
    Aabb world = m.dims.worldBox();
    if (pointAabbDist2(p, world) < r2) {
        Vec3 lo = p - Vec3{r, r, r} - m.dims.origin;
        Vec3 hi = p + Vec3{r, r, r} - m.dims.origin;
        double res = m.dims.resolution;
        int i0 = std::max(0, int(std::floor(lo.x / res)));
        int j0 = std::max(0, int(std::floor(lo.y / res)));
        int k0 = std::max(0, int(std::floor(lo.z / res)));
        int i1 = std::min(m.dims.nx - 1, int(std::floor(hi.x / res)));
        int j1 = std::min(m.dims.ny - 1, int(std::floor(hi.y / res)));
        int k1 = std::min(m.dims.nz - 1, int(std::floor(hi.z / res)));
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    if (m.voxelState[m.dims.index(i, j, k)] == VoxelState::Free) continue;
                    if (pointAabbDist2(p, m.dims.voxelBox(i, j, k)) < r2) return false;
                }
    }
    return true;
}

struct Path {
    std::vector<Viewpoint> waypoints;
};

// Pose interpolation used both by planning and by the standalone validator:
// position lerp, orientation slerp.
inline Viewpoint interpolatePose(const Viewpoint& a, const Viewpoint& b, double t) {
    return {a.position + (b.position - a.position) * t,
            slerp(a.orientation, b.orientation, t)};
}

// Dense collision check of one segment at steps no coarser than half a voxel.
inline bool segmentFree(const Viewpoint& a, const Viewpoint& b, const CollisionModel& m) {
    double len = (b.position - a.position).norm();
    double step = m.dims.resolution * 0.5;
    int n = std::max(1, int(std::ceil(len / step)));
    for (int s = 0; s <= n; ++s)
        if (!isFree(interpolatePose(a, b, double(s) / n), m)) return false;
    return true;
}

// Post-hoc audit used by the harness: every consecutive pair densely checked.
inline bool validatePath(const Path& path, const CollisionModel& m) {
    if (path.waypoints.size() < 1) return false;
    for (std::size_t s = 0; s + 1 < path.waypoints.size(); ++s)
        if (!segmentFree(path.waypoints[s], path.waypoints[s + 1], m)) return false;
    return path.waypoints.size() == 1 ? isFree(path.waypoints[0], m) : true;
}

struct PlanParams {
    int rrtBudget = 5000;
    double rrtStep = 0.05;
    std::uint64_t seed = 0;
};

// Straight-segment shortcut first; otherwise a rapidly-exploring random tree
// over positions with orientations slerped along the solution. Returned paths
// are re-validated by dense interpolation.
inline std::optional<Path> planPath(const Viewpoint& from, const Viewpoint& to,
                                    const CollisionModel& m, const PlanParams& pp = {}) {
    if (!isFree(from, m) || !isFree(to, m)) return std::nullopt;
    if (segmentFree(from, to, m)) return Path{{from, to}};

    // RRT over positions within staging + grid volume
    Aabb sampleBox = m.stagingRegion;
    Aabb world = m.dims.worldBox();
    sampleBox.expand(world.lo);
    sampleBox.expand(world.hi);

    struct Node { Vec3 p; int parent; };
    std::vector<Node> nodes{{from.position, -1}};
    Rng rng(pp.seed ^ 0x5eedf00dULL);
    auto poseAt = [&](const Vec3& p) {
        // orientation slerped by progress toward the goal
        double total = (to.position - from.position).norm();
        double t = total > 1e-12 ? std::min(1.0, (p - from.position).norm() / total) : 1.0;
        return Viewpoint{p, slerp(from.orientation, to.orientation, t)};
    };

    int goalNode = -1;
    for (int it = 0; it < pp.rrtBudget && goalNode < 0; ++it) {
        Vec3 target = (it % 10 == 0) ? to.position
                                     : Vec3{rng.uniform(sampleBox.lo.x, sampleBox.hi.x),
                                            rng.uniform(sampleBox.lo.y, sampleBox.hi.y),
                                            rng.uniform(sampleBox.lo.z, sampleBox.hi.z)};
        int nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            double d2 = (nodes[n].p - target).norm2();
            if (d2 < best) { best = d2; nearest = int(n); }
        }
        Vec3 dir = target - nodes[nearest].p;
        double len = dir.norm();
        if (len < 1e-9) continue;
        Vec3 next = nodes[nearest].p + dir * (std::min(pp.rrtStep, len) / len);
        Viewpoint a = poseAt(nodes[nearest].p), b = poseAt(next);
        if (!segmentFree(a, b, m)) continue;
        nodes.push_back({next, nearest});
        if ((next - to.position).norm() < pp.rrtStep &&
            segmentFree(poseAt(next), to, m))
            goalNode = int(nodes.size()) - 1;
    }
    if (goalNode < 0) return std::nullopt;

    std::vector<Vec3> rev;
    for (int n = goalNode; n >= 0; n = nodes[n].parent) rev.push_back(nodes[n].p);
    Path path;
    path.waypoints.push_back(from);
    for (auto it = rev.rbegin() + 1; it != rev.rend(); ++it)
        path.waypoints.push_back(poseAt(*it));
    path.waypoints.push_back(to);

    // greedy shortcutting, then final validation
    std::vector<Viewpoint>& wp = path.waypoints;
    std::size_t s = 0;
    while (s + 2 < wp.size()) {
        if (segmentFree(wp[s], wp[s + 2], m))
            wp.erase(wp.begin() + long(s) + 1);
        else
            ++s;
    }
    if (!validatePath(path, m)) return std::nullopt;
    return path;
}

// (C-space meters + weighted radians, workspace meters)
inline std::pair<double, double> pathDistances(const Path& path, double lambda = 0.1) {
    double ws = 0.0, cs = 0.0;
    for (std::size_t s = 0; s + 1 < path.waypoints.size(); ++s) {
        const Viewpoint& a = path.waypoints[s];
        const Viewpoint& b = path.waypoints[s + 1];
        double d = (b.position - a.position).norm();
        ws += d;
        cs += d + lambda * quatAngle(a.orientation, b.orientation);
    }
    return {cs, ws};
}

struct ExecNoiseConfig {
    double posSigma = 0.0;  // meters
    double angSigma = 0.0;  // radians, small-angle
};

// Reached pose after executing the path: the final waypoint plus seeded
// Gaussian pose noise. sigma 0 reproduces the target exactly.
inline Viewpoint executeWithNoise(const Path& path, const ExecNoiseConfig& cfg,
                                  std::uint64_t seed) {
    Viewpoint v = path.waypoints.back();
    if (cfg.posSigma == 0.0 && cfg.angSigma == 0.0) return v;
    Rng rng(seed);
    v.position += Vec3{rng.gaussian(0, cfg.posSigma), rng.gaussian(0, cfg.posSigma),
                       rng.gaussian(0, cfg.posSigma)};
    if (cfg.angSigma > 0.0) {
        Vec3 axis{rng.gaussian(), rng.gaussian(), rng.gaussian()};
        if (axis.norm2() < 1e-18) axis = {0, 0, 1};
        double ang = rng.gaussian(0, cfg.angSigma);
        v.orientation = (Quat::fromAxisAngle(axis, ang) * v.orientation).normalized();
    }
    return v;
}

inline nlohmann::json pathToJson(const Path& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const Viewpoint& v : path.waypoints)
        j.push_back({{"position", {v.position.x, v.position.y, v.position.z}},
                     {"orientation", {v.orientation.w, v.orientation.x, v.orientation.y,
                                      v.orientation.z}}});
    return j;
}

inline Path pathFromJson(const nlohmann::json& j) {
    Path p;
    for (const auto& jw : j) {
        Viewpoint v;
        v.position = {jw.at("position")[0], jw.at("position")[1], jw.at("position")[2]};
        v.orientation = Quat{jw.at("orientation")[0], jw.at("orientation")[1],
                             jw.at("orientation")[2], jw.at("orientation")[3]}
                            .normalized();
        p.waypoints.push_back(v);
    }
    return p;
}

}  // namespace nbvsim

#endif
