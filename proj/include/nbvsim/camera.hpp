// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_CAMERA_HPP
#define NBVSIM_CAMERA_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/scene.hpp"

namespace nbvsim {

// 7D camera pose: position + unit quaternion. Camera looks along its local
// +X axis; +Y is left, +Z is up.
struct Viewpoint {
    Vec3 position;
    Quat orientation;

    Vec3 forward() const { return orientation.rotate({1, 0, 0}); }
    Vec3 left() const { return orientation.rotate({0, 1, 0}); }
    Vec3 up() const { return orientation.rotate({0, 0, 1}); }

    std::array<double, 7> asArray() const {
        return {position.x, position.y, position.z,
                orientation.w, orientation.x, orientation.y, orientation.z};
    }
    static Viewpoint fromArray(const std::array<double, 7>& a) {
        return {{a[0], a[1], a[2]}, Quat{a[3], a[4], a[5], a[6]}.normalized()};
    }

    // Pose looking from `eye` toward `target`, roll chosen so camera-up
    // stays as close to world +Z as possible.
    static Viewpoint lookAt(const Vec3& eye, const Vec3& target) {
        Vec3 f = (target - eye).normalized();
        Vec3 left = Vec3{0, 0, 1}.cross(f);
        if (left.norm2() < 1e-12) left = {0, 1, 0};
        left = left.normalized();
        Vec3 u = f.cross(left);
        // rotation matrix columns are the frame axes; convert to quaternion
        double m00 = f.x, m01 = left.x, m02 = u.x;
        double m10 = f.y, m11 = left.y, m12 = u.y;
        double m20 = f.z, m21 = left.z, m22 = u.z;
        double tr = m00 + m11 + m22;
        Quat q;
        if (tr > 0) {
            double s = std::sqrt(tr + 1.0) * 2;
            q = {0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
        } else if (m00 > m11 && m00 > m22) {
            double s = std::sqrt(1.0 + m00 - m11 - m22) * 2;
            q = {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
        } else if (m11 > m22) {
            double s = std::sqrt(1.0 + m11 - m00 - m22) * 2;
            q = {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
        } else {
            double s = std::sqrt(1.0 + m22 - m00 - m11) * 2;
            q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
        }
        return {eye, q.normalized()};
    }
};

struct CameraIntrinsics {
    double hfovDeg = 70.25;
    int width = 80, height = 45;
    double maxRange = 2.0;

    double tanHalfH() const { return std::tan(hfovDeg * M_PI / 360.0); }
    double tanHalfV() const { return tanHalfH() * double(height) / double(width); }

    CameraIntrinsics downsampled(int w, int h) const {
        CameraIntrinsics c = *this;
        c.width = w;
        c.height = h;
        return c;
    }
};

constexpr double kNoHit = std::numeric_limits<double>::infinity();

struct Observation {
    Viewpoint viewpoint;
    CameraIntrinsics intr;
    std::vector<double> depth;          // range along the pixel ray, kNoHit sentinel
    std::vector<std::int32_t> instance; // kNoInstance when not an object hit

    double depthAt(int u, int v) const { return depth[std::size_t(v) * intr.width + u]; }
    std::int32_t instanceAt(int u, int v) const {
        return instance[std::size_t(v) * intr.width + u];
    }
};

// Unit direction of the ray through pixel (u, v).
inline Vec3 pixelRay(const Viewpoint& vp, const CameraIntrinsics& intr, int u, int v) {
    double ndcX = 2.0 * (u + 0.5) / intr.width - 1.0;
    double ndcY = 2.0 * (v + 0.5) / intr.height - 1.0;
    Vec3 f = vp.forward();
    Vec3 right = vp.left() * -1.0;
    Vec3 down = vp.up() * -1.0;
    return (f + right * (ndcX * intr.tanHalfH()) + down * (ndcY * intr.tanHalfV()))
        .normalized();
}

// Project a world point onto the image. Returns false when behind the camera
// or outside the field of view. On success fills the containing pixel and the
// Euclidean range of the point.
inline bool projectPoint(const Viewpoint& vp, const CameraIntrinsics& intr,
                         const Vec3& p, int& u, int& v, double& range) {
    Vec3 d = p - vp.position;
    double zf = d.dot(vp.forward());
    if (zf <= 1e-12) return false;
    double a = d.dot(vp.left() * -1.0) / (zf * intr.tanHalfH());
    double b = d.dot(vp.up() * -1.0) / (zf * intr.tanHalfV());
    if (a < -1.0 || a > 1.0 || b < -1.0 || b > 1.0) return false;
    double cu = (a + 1.0) * 0.5 * intr.width - 0.5;
    double cv = (b + 1.0) * 0.5 * intr.height - 0.5;
    u = std::min(intr.width - 1, std::max(0, int(std::lround(cu))));
    v = std::min(intr.height - 1, std::max(0, int(std::lround(cv))));
    range = d.norm();
    return true;
}

// Back-project pixel (u, v) at the given range to a world point.
inline Vec3 backProject(const Viewpoint& vp, const CameraIntrinsics& intr,
                        int u, int v, double range) {
    return vp.position + pixelRay(vp, intr, u, v) * range;
}

namespace detail {

// Slab intersection of a ray with an AABB; fills entry/exit parameters and
// the axis (0..2) limiting each.
inline bool rayBox(const Vec3& o, const Vec3& dir, const Aabb& box,
                   double& tEnter, double& tExit, int& enterAxis, int& exitAxis) {
    tEnter = -std::numeric_limits<double>::infinity();
    tExit = std::numeric_limits<double>::infinity();
    enterAxis = exitAxis = -1;
    const double dv[3] = {dir.x, dir.y, dir.z};
    const double ov[3] = {o.x, o.y, o.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int ax = 0; ax < 3; ++ax) {
        if (std::abs(dv[ax]) < 1e-15) {
            if (ov[ax] < lo[ax] || ov[ax] > hi[ax]) return false;
            continue;
        }
        double t0 = (lo[ax] - ov[ax]) / dv[ax];
        double t1 = (hi[ax] - ov[ax]) / dv[ax];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tEnter) { tEnter = t0; enterAxis = ax; }
        if (t1 < tExit) { tExit = t1; exitAxis = ax; }
    }
    return tEnter <= tExit && tExit > 0.0;
}

// Which face of the grid box a boundary crossing at parameter t belongs to.
inline Face crossingFace(const Vec3& o, const Vec3& dir, int axis, const Aabb& box,
                         double t) {
    Vec3 p = o + dir * t;
    double mid;
    switch (axis) {
        case 0: mid = (box.lo.x + box.hi.x) / 2; return p.x < mid ? Face::MinusX : Face::PlusX;
        case 1: mid = (box.lo.y + box.hi.y) / 2; return p.y < mid ? Face::MinusY : Face::PlusY;
        default: mid = (box.lo.z + box.hi.z) / 2; return p.z < mid ? Face::MinusZ : Face::PlusZ;
    }
}

}  // namespace detail

// Render a depth + instance image by exact 3D DDA traversal of the ground
// truth. Walls are the grid's boundary faces, solid everywhere except the
// opening face. Throws when the viewpoint sits inside solid geometry.
// The overload taking a precomputed ground-truth grid avoids rebuilding it
// inside scoring loops.
inline Observation renderDepthWithGt(const SceneSpec& spec, const BeliefGrid& gt,
                                     const Viewpoint& vp, const CameraIntrinsics& intr) {
    const GridDims& d = spec.dims;
    {
        int i, j, k;
        if (d.locate(vp.position, i, j, k) && gt.state(i, j, k) == VoxelState::Occupied)
            throw std::invalid_argument("renderDepth: viewpoint inside solid geometry");
    }

    Observation obs;
    obs.viewpoint = vp;
    obs.intr = intr;
    obs.depth.assign(std::size_t(intr.width) * intr.height, kNoHit);
    obs.instance.assign(std::size_t(intr.width) * intr.height, kNoInstance);

    Aabb box = d.worldBox();
    const double res = d.resolution;

    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            std::size_t px = std::size_t(v) * intr.width + u;
            Vec3 dir = pixelRay(vp, intr, u, v);
            double tEnter, tExit;
            int enterAxis, exitAxis;
            if (!detail::rayBox(vp.position, dir, box, tEnter, tExit, enterAxis, exitAxis))
                continue;  // misses the cabinet entirely

            bool startsInside = tEnter < 0.0;
            if (!startsInside) {
                Face f = detail::crossingFace(vp.position, dir, enterAxis, box, tEnter);
                if (f != spec.openingFace) {
                    // outer wall hit
                    if (tEnter <= intr.maxRange) obs.depth[px] = tEnter;
                    continue;
                }
            }

            double t = std::max(tEnter, 0.0);
            Vec3 start = vp.position + dir * (t + 1e-9);
            int i, j, k;
            if (!d.locate(start, i, j, k)) continue;

            // Amanatides-Woo stepping
            int stepI = dir.x > 0 ? 1 : -1, stepJ = dir.y > 0 ? 1 : -1,
                stepK = dir.z > 0 ? 1 : -1;
            auto boundary = [&](int idx, int step, double originAx) {
                return originAx + (idx + (step > 0 ? 1 : 0)) * res;
            };
            double inf = std::numeric_limits<double>::infinity();
            double tMaxI = std::abs(dir.x) < 1e-15 ? inf
                : (boundary(i, stepI, d.origin.x) - vp.position.x) / dir.x;
            double tMaxJ = std::abs(dir.y) < 1e-15 ? inf
                : (boundary(j, stepJ, d.origin.y) - vp.position.y) / dir.y;
            double tMaxK = std::abs(dir.z) < 1e-15 ? inf
                : (boundary(k, stepK, d.origin.z) - vp.position.z) / dir.z;
            double tDeltaI = std::abs(dir.x) < 1e-15 ? inf : res / std::abs(dir.x);
            double tDeltaJ = std::abs(dir.y) < 1e-15 ? inf : res / std::abs(dir.y);
            double tDeltaK = std::abs(dir.z) < 1e-15 ? inf : res / std::abs(dir.z);

            bool hit = false;
            double tHit = t;
            while (true) {
                if (gt.state(i, j, k) == VoxelState::Occupied) {
                    if (tHit <= intr.maxRange) {
                        obs.depth[px] = tHit;
                        obs.instance[px] = gt.instanceId(i, j, k);
                    }
                    hit = true;
                    break;
                }
                if (tHit > intr.maxRange) { hit = true; break; }  // out of range
                int axis;
                if (tMaxI <= tMaxJ && tMaxI <= tMaxK) {
                    tHit = tMaxI; tMaxI += tDeltaI; i += stepI; axis = 0;
                } else if (tMaxJ <= tMaxK) {
                    tHit = tMaxJ; tMaxJ += tDeltaJ; j += stepJ; axis = 1;
                } else {
                    tHit = tMaxK; tMaxK += tDeltaK; k += stepK; axis = 2;
                }
                if (!d.inBounds(i, j, k)) {
                    Face f = detail::crossingFace(vp.position, dir, axis, box, tHit);
                    if (f != spec.openingFace && tHit <= intr.maxRange)
                        obs.depth[px] = tHit;  // inner wall
                    hit = true;
                    break;
                }
            }
            (void)hit;
        }
    }
    return obs;
}

inline Observation renderDepth(const SceneSpec& spec, const Viewpoint& vp,
                               const CameraIntrinsics& intr) {
    return renderDepthWithGt(spec, groundTruthGrid(spec), vp, intr);
}

// Rigid body-to-optical-center offset, expressed in the body frame. The
// default matches a camera mounted ahead of and above the planned body pose;
// identity offset keeps body pose == optical pose.
inline Viewpoint applyCameraOffset(const Viewpoint& body,
                                   const Vec3& offset = {0.11, 0.0, 0.07}) {
    return {body.position + body.orientation.rotate(offset), body.orientation};
}

struct SensorNoiseConfig {
    double depthSigma = 0.0;     // per-pixel Gaussian, meters
    double edgeDropProb = 0.0;   // dropout probability at depth discontinuities
    double edgeThreshold = 0.05; // neighbor depth jump that counts as an edge
};

// Optional depth distortion applied before carving. No-op with defaults.
inline Observation addSensorNoise(const Observation& obs, const SensorNoiseConfig& cfg,
                                  std::uint64_t seed) {
    if (cfg.depthSigma == 0.0 && cfg.edgeDropProb == 0.0) return obs;
    Observation out = obs;
    Rng rng(seed);
    int W = obs.intr.width, H = obs.intr.height;
    for (int v = 0; v < H; ++v)
        for (int u = 0; u < W; ++u) {
            std::size_t px = std::size_t(v) * W + u;
            if (!std::isfinite(out.depth[px])) continue;
            if (cfg.edgeDropProb > 0.0) {
                bool edge = false;
                for (auto [du, dv] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                    int nu = u + du, nv = v + dv;
                    if (nu < 0 || nu >= W || nv < 0 || nv >= H) continue;
                    double nd = obs.depthAt(nu, nv);
                    if (!std::isfinite(nd) ||
                        std::abs(nd - obs.depth[px]) > cfg.edgeThreshold) {
                        edge = true;
                        break;
                    }
                }
                if (edge && rng.uniform() < cfg.edgeDropProb) {
                    out.depth[px] = kNoHit;
                    out.instance[px] = kNoInstance;
                    continue;
                }
            }
            if (cfg.depthSigma > 0.0)
                out.depth[px] = std::max(1e-4, out.depth[px] + rng.gaussian(0, cfg.depthSigma));
        }
    return out;
}

// Carve the belief with one observation: voxels whose center lies in the view
// frustum strictly nearer than the measured depth (one-voxel safety margin)
// become FREE; the voxel containing each object hit becomes OCCUPIED/SEEN.
// A voxel already SEEN-occupied is never carved free. `idMap`, when nonempty,
// remaps raw observation instance ids to store ids.
inline BeliefGrid carveVisibility(const BeliefGrid& grid, const Observation& obs,
                                  const CameraIntrinsics& intr,
                                  const std::vector<std::int32_t>& idMap = {}) {
    if (intr.width != obs.intr.width || intr.height != obs.intr.height)
        throw std::invalid_argument("carveVisibility: intrinsics mismatch");
    BeliefGrid out = grid;
    const GridDims& d = grid.dims();
    const Viewpoint& vp = obs.viewpoint;
    const double margin = d.resolution;

    Vec3 f = vp.forward();
    Vec3 right = vp.left() * -1.0;
    Vec3 down = vp.up() * -1.0;
    double tanH = intr.tanHalfH(), tanV = intr.tanHalfV();

    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                VoxelState s = out.state(i, j, k);
                if (s == VoxelState::Free) continue;
                if (s == VoxelState::Occupied && out.occOrigin(i, j, k) == OccOrigin::Seen)
                    continue;
                Vec3 c = d.voxelCenter(i, j, k);
                Vec3 rel = c - vp.position;
                double zf = rel.dot(f);
                if (zf <= 1e-12) continue;
                double a = rel.dot(right) / (zf * tanH);
                double b = rel.dot(down) / (zf * tanV);
                if (a < -1.0 || a > 1.0 || b < -1.0 || b > 1.0) continue;
                int u = std::min(intr.width - 1,
                                 std::max(0, int(std::lround((a + 1.0) * 0.5 * intr.width - 0.5))));
                int v = std::min(intr.height - 1,
                                 std::max(0, int(std::lround((b + 1.0) * 0.5 * intr.height - 0.5))));
                double meas = obs.depthAt(u, v);
                double eff = std::isfinite(meas) ? std::min(meas, intr.maxRange)
                                                 : intr.maxRange;
                double range = rel.norm();
                if (range < eff - margin) out.setFree(i, j, k);
            }

    // mark object hits
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            double meas = obs.depthAt(u, v);
            std::int32_t raw = obs.instanceAt(u, v);
            if (!std::isfinite(meas) || raw == kNoInstance) continue;
            Vec3 p = vp.position + pixelRay(vp, intr, u, v) * (meas + 0.25 * d.resolution);
            int i, j, k;
            if (!d.locate(p, i, j, k)) continue;
            std::int32_t id = raw;
            if (!idMap.empty() && raw >= 0 && raw < std::int32_t(idMap.size()))
                id = idMap[raw];
            out.setOccupied(i, j, k, OccOrigin::Seen, id);
        }
    return out;
}

// --- PGM export ------------------------------------------------------------

inline void saveDepthPgm(const Observation& obs, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("saveDepthPgm: cannot open " + path);
    f << "P5\n" << obs.intr.width << " " << obs.intr.height << "\n65535\n";
    for (double dpt : obs.depth) {
        std::uint16_t mm = std::isfinite(dpt)
            ? std::uint16_t(std::min(65534L, std::lround(dpt * 1000.0))) : 65535;
        unsigned char b[2] = {(unsigned char)(mm >> 8), (unsigned char)(mm & 0xff)};
        f.write(reinterpret_cast<char*>(b), 2);
    }
}

inline void saveInstancePgm(const Observation& obs, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("saveInstancePgm: cannot open " + path);
    f << "P5\n" << obs.intr.width << " " << obs.intr.height << "\n65535\n";
    for (std::int32_t id : obs.instance) {
        std::uint16_t v = std::uint16_t(id + 1);
        unsigned char b[2] = {(unsigned char)(v >> 8), (unsigned char)(v & 0xff)};
        f.write(reinterpret_cast<char*>(b), 2);
    }
}

}  // namespace nbvsim

#endif
