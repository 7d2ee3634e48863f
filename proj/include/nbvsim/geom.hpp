// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_GEOM_HPP
#define NBVSIM_GEOM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace nbvsim {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? *this / n : Vec3{0, 0, 0};
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Unit quaternion, (w, x, y, z) convention.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const {
        double n = norm();
        if (n <= 0.0) return Quat{1, 0, 0, 0};
        return {w / n, x / n, y / n, z / n};
    }
    Quat conjugate() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& q) const {
        return {w * q.w - x * q.x - y * q.y - z * q.z,
                w * q.x + x * q.w + y * q.z - z * q.y,
                w * q.y - x * q.z + y * q.w + z * q.x,
                w * q.z + x * q.y - y * q.x + z * q.w};
    }

    Vec3 rotate(const Vec3& v) const {
        // q * v * q^-1 expanded
        Vec3 u{x, y, z};
        Vec3 t = 2.0 * u.cross(v);
        return v + w * t + u.cross(t);
    }

    double dot(const Quat& q) const { return w * q.w + x * q.x + y * q.y + z * q.z; }

    static Quat identity() { return {1, 0, 0, 0}; }

    static Quat fromAxisAngle(const Vec3& axis, double angle) {
        Vec3 a = axis.normalized();
        double h = 0.5 * angle, s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }

    static Quat fromYaw(double yaw) { return fromAxisAngle({0, 0, 1}, yaw); }
};

// Geodesic angle between two unit quaternions, double-cover aware.
inline double quatAngle(const Quat& a, const Quat& b) {
    double d = std::abs(a.dot(b));
    d = std::min(1.0, d);
    return 2.0 * std::acos(d);
}

inline Quat slerp(const Quat& a, Quat b, double t) {
    double d = a.dot(b);
    if (d < 0.0) { b = {-b.w, -b.x, -b.y, -b.z}; d = -d; }
    if (d > 0.9995) {
        Quat r{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x),
               a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
        return r.normalized();
    }
    double th = std::acos(d);
    double sa = std::sin((1.0 - t) * th) / std::sin(th);
    double sb = std::sin(t * th) / std::sin(th);
    return Quat{sa * a.w + sb * b.w, sa * a.x + sb * b.x,
                sa * a.y + sb * b.y, sa * a.z + sb * b.z}.normalized();
}

struct Aabb {
    Vec3 lo, hi;

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
               p.z >= lo.z && p.z <= hi.z;
    }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
    double volume() const {
        Vec3 e = extent();
        return std::max(0.0, e.x) * std::max(0.0, e.y) * std::max(0.0, e.z);
    }
    Aabb inflated(double r) const {
        return {{lo.x - r, lo.y - r, lo.z - r}, {hi.x + r, hi.y + r, hi.z + r}};
    }
    void expand(const Vec3& p) {
        lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
    }
    static Aabb empty() {
        double inf = std::numeric_limits<double>::infinity();
        return {{inf, inf, inf}, {-inf, -inf, -inf}};
    }
};

// Squared distance from a point to an AABB (0 inside).
inline double pointAabbDist2(const Vec3& p, const Aabb& b) {
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        double v = p[i], lo = b.lo[i], hi = b.hi[i];
        if (v < lo) d2 += (lo - v) * (lo - v);
        else if (v > hi) d2 += (v - hi) * (v - hi);
    }
    return d2;
}

// Deterministic RNG: splitmix64 core with hand-rolled distributions so
// streams are bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t nextU64() {
        // splitmix64
        std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(nextU64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniformInt(std::int64_t lo, std::int64_t hi) {
        return lo + std::int64_t(nextU64() % std::uint64_t(hi - lo + 1));
    }

    double gaussian() {
        if (haveSpare_) { haveSpare_ = false; return spare_; }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        haveSpare_ = true;
        return r * std::cos(th);
    }

    double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

    // Derive an independent stream, e.g. per scene or per episode.
    Rng fork(std::uint64_t salt) {
        std::uint64_t z = s_ ^ (0xd1342543de82ef95ULL * (salt + 1));
        Rng r(z);
        r.nextU64();
        return r;
    }

private:
    std::uint64_t s_;
    bool haveSpare_ = false;
    double spare_ = 0.0;
};

}  // namespace nbvsim

#endif
