// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test suite: independent oracles and tiny scene
// builders. Oracles deliberately re-derive results through a different code
// path than the library (projection vs DDA, brute force vs accelerated).

#ifndef NBVSIM_TEST_UTIL_HPP
#define NBVSIM_TEST_UTIL_HPP

#include <vector>

#include "nbvsim/nbvsim.hpp"

namespace nbvtest {

using namespace nbvsim;

// Independent carve oracle: label every voxel by projecting its center onto
// the image with the public pinhole projection, then mark hits by explicit
// back-projection. Must agree with carveVisibility voxel-for-voxel.
inline BeliefGrid oracleCarve(const BeliefGrid& grid, const Observation& obs) {
    BeliefGrid out = grid;
    const GridDims& d = grid.dims();
    const CameraIntrinsics& intr = obs.intr;
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                VoxelState s = grid.state(i, j, k);
                if (s == VoxelState::Free) continue;
                if (s == VoxelState::Occupied &&
                    grid.occOrigin(i, j, k) == OccOrigin::Seen)
                    continue;
                int u, v;
                double range;
                if (!projectPoint(obs.viewpoint, intr, d.voxelCenter(i, j, k), u, v, range))
                    continue;
                double meas = obs.depthAt(u, v);
                double eff = std::isfinite(meas) ? std::min(meas, intr.maxRange)
                                                 : intr.maxRange;
                if (range < eff - d.resolution) out.setFree(i, j, k);
            }
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            double meas = obs.depthAt(u, v);
            if (!std::isfinite(meas) || obs.instanceAt(u, v) == kNoInstance) continue;
            Vec3 p = backProject(obs.viewpoint, intr, u, v, meas + 0.25 * d.resolution);
            int i, j, k;
            if (!d.locate(p, i, j, k)) continue;
            out.setOccupied(i, j, k, OccOrigin::Seen, obs.instanceAt(u, v));
        }
    return out;
}

inline bool gridsEqual(const BeliefGrid& a, const BeliefGrid& b) {
    return a.sameDims(b) && a.rawState() == b.rawState() &&
           a.rawInstance() == b.rawInstance();
}

// Small cube scene: n^3 grid at the given resolution, -X opening, with
// optional box objects specified as inclusive voxel ranges.
struct VoxelRange {
    int i0, j0, k0, i1, j1, k1;
};

inline SceneSpec makeTinyScene(int n, double res, const std::vector<VoxelRange>& boxes) {
    SceneSpec spec;
    spec.dims = {n, n, n, res, {0.0, -0.5 * n * res, 0.0}};
    spec.openingFace = Face::MinusX;
    spec.cabinetHeight = 0.0;
    spec.basePosition = {-0.3, 0.0, 0.5 * n * res};
    spec.seed = 1;
    std::int32_t id = 0;
    for (const VoxelRange& r : boxes) {
        GroundTruthObject obj;
        obj.id = id++;
        obj.shape = ShapeKind::Box;
        Vec3 lo = spec.dims.voxelBox(r.i0, r.j0, r.k0).lo;
        Vec3 hi = spec.dims.voxelBox(r.i1, r.j1, r.k1).hi;
        obj.position = (lo + hi) * 0.5;
        obj.yaw = 0.0;
        obj.sizeParams = hi - lo;
        for (int k = r.k0; k <= r.k1; ++k)
            for (int j = r.j0; j <= r.j1; ++j)
                for (int i = r.i0; i <= r.i1; ++i) obj.voxels.push_back({i, j, k});
        spec.objects.push_back(std::move(obj));
    }
    return spec;
}

// Random tiny scene with 0-2 interior boxes, for oracle sweeps.
inline SceneSpec randomTinyScene(Rng& rng, int n = 8, double res = 0.05) {
    std::vector<VoxelRange> boxes;
    int nBoxes = int(rng.uniformInt(0, 2));
    for (int b = 0; b < nBoxes; ++b) {
        int i0 = int(rng.uniformInt(1, n - 3)), j0 = int(rng.uniformInt(1, n - 3)),
            k0 = int(rng.uniformInt(1, n - 3));
        int di = int(rng.uniformInt(0, 2)), dj = int(rng.uniformInt(0, 2)),
            dk = int(rng.uniformInt(0, 2));
        boxes.push_back({i0, j0, k0, std::min(n - 2, i0 + di), std::min(n - 2, j0 + dj),
                         std::min(n - 2, k0 + dk)});
    }
    return makeTinyScene(n, res, boxes);
}

// Viewpoint in front of the -X opening looking into the box.
inline Viewpoint frontView(const SceneSpec& spec, double dist = 0.3, double dy = 0.0,
                           double dz = 0.0) {
    Aabb box = spec.dims.worldBox();
    Vec3 c = box.center();
    return Viewpoint::lookAt({box.lo.x - dist, c.y + dy, c.z + dz}, c);
}

// Brute-force ray march through ground truth at a fine step; independent of
// the DDA renderer. Returns the depth and instance of the first solid sample.
inline std::pair<double, std::int32_t> bruteForceRay(const SceneSpec& spec,
                                                     const BeliefGrid& gt, const Vec3& o,
                                                     const Vec3& dir, double maxRange,
                                                     double step) {
    Aabb box = spec.dims.worldBox();
    bool wasInside = box.contains(o);
    for (double t = step; t <= maxRange; t += step) {
        Vec3 p = o + dir * t;
        bool inside = box.contains(p);
        if (inside) {
            int i, j, k;
            if (spec.dims.locate(p, i, j, k) && gt.state(i, j, k) == VoxelState::Occupied)
                return {t, gt.instanceId(i, j, k)};
            if (!wasInside) {
                // entered the box: which face did we cross?
                Vec3 prev = o + dir * (t - step);
                Face f;
                if (prev.x < box.lo.x) f = Face::MinusX;
                else if (prev.x > box.hi.x) f = Face::PlusX;
                else if (prev.y < box.lo.y) f = Face::MinusY;
                else if (prev.y > box.hi.y) f = Face::PlusY;
                else if (prev.z < box.lo.z) f = Face::MinusZ;
                else f = Face::PlusZ;
                if (f != spec.openingFace) return {t, kNoInstance};  // wall
            }
        } else if (wasInside) {
            // exiting: crossing a non-opening face is a wall hit
            Face f;
            if (p.x < box.lo.x) f = Face::MinusX;
            else if (p.x > box.hi.x) f = Face::PlusX;
            else if (p.y < box.lo.y) f = Face::MinusY;
            else if (p.y > box.hi.y) f = Face::PlusY;
            else if (p.z < box.lo.z) f = Face::MinusZ;
            else f = Face::PlusZ;
            if (f != spec.openingFace) return {t, kNoInstance};
            return {kNoHit, kNoInstance};  // left through the opening
        }
        wasInside = inside;
    }
    return {kNoHit, kNoInstance};
}

// Central finite difference of a scalar function of theta[idx].
template <typename F>
double centralDiff(std::vector<double>& theta, std::size_t idx, double h, F&& f) {
    double orig = theta[idx];
    theta[idx] = orig + h;
    double up = f();
    theta[idx] = orig - h;
    double dn = f();
    theta[idx] = orig;
    return (up - dn) / (2.0 * h);
}

inline double relErr(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

}  // namespace nbvtest

#endif
