// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace nbvsim;
using nbvtest::makeTinyScene;

namespace {

Viewpoint poseAt(Vec3 p, Quat q = Quat::identity()) {
    Viewpoint v;
    v.position = p;
    v.orientation = q;
    return v;
}

BeliefGrid allFree(const GridDims& d) {
    BeliefGrid g(d);
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) g.setFree(i, j, k);
    return g;
}

}  // namespace

TEST_CASE("scene geometry staging region sits outside the opening") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    Aabb world = spec.dims.worldBox();
    Aabb staging = geom.stagingRegion();
    REQUIRE(staging.hi.x == Catch::Approx(world.lo.x));
    REQUIRE(staging.lo.x == Catch::Approx(world.lo.x - 0.6));
    REQUIRE(staging.lo.y == Catch::Approx(world.lo.y));
    REQUIRE(staging.hi.z == Catch::Approx(world.hi.z));
}

TEST_CASE("feasibility predicate analytic cases") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    Aabb world = spec.dims.worldBox();
    Vec3 c = world.center();

    SECTION("all-unknown belief: staging free, interior blocked") {
        CollisionModel m = buildCollisionModel(BeliefGrid(spec.dims), std::vector<Aabb>{},
                                               geom);
        Vec3 stage = m.stagingRegion.center();
        REQUIRE(isFree(poseAt(stage), m));
        REQUIRE_FALSE(isFree(poseAt(c), m));  // unknown voxels are solid
    }
    SECTION("fully observed free interior is reachable") {
        CollisionModel m = buildCollisionModel(allFree(spec.dims), std::vector<Aabb>{},
                                               geom);
        REQUIRE(isFree(poseAt(c), m));
        // but not when hugging a wall closer than the body radius
        REQUIRE_FALSE(isFree(poseAt({world.hi.x - 0.01, c.y, c.z}), m));
    }
    SECTION("reach limit applies") {
        CollisionModel m = buildCollisionModel(allFree(spec.dims), std::vector<Aabb>{},
                                               geom);
        Vec3 far = geom.reachCenter + Vec3{geom.reachRadius + 0.01, 0, 0};
        REQUIRE_FALSE(isFree(poseAt(far), m));
    }
    SECTION("object boxes block a sphere of bodyRadius") {
        Aabb box{{c.x - 0.05, c.y - 0.05, c.z - 0.05}, {c.x + 0.05, c.y + 0.05, c.z + 0.05}};
        CollisionModel m = buildCollisionModel(allFree(spec.dims), std::vector<Aabb>{box},
                                               geom);
        double r = m.bodyRadius;
        REQUIRE_FALSE(isFree(poseAt({box.hi.x + r - 0.005, c.y, c.z}), m));
        REQUIRE(isFree(poseAt({box.hi.x + r + 0.005, c.y, c.z}), m));
    }
    SECTION("outside staging and grid is never free") {
        CollisionModel m = buildCollisionModel(allFree(spec.dims), std::vector<Aabb>{},
                                               geom);
        REQUIRE_FALSE(isFree(poseAt({world.hi.x + 0.3, c.y, c.z}), m));
    }
}

TEST_CASE("pose interpolation endpoints and midpoint") {
    Viewpoint a = poseAt({0, 0, 0}, Quat::identity());
    Viewpoint b = poseAt({1, 0, 0}, Quat::fromYaw(1.0));
    Viewpoint m = interpolatePose(a, b, 0.5);
    REQUIRE(m.position.x == Catch::Approx(0.5));
    REQUIRE(quatAngle(Quat::identity(), m.orientation) == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(interpolatePose(a, b, 0.0).position.x == 0.0);
    REQUIRE(interpolatePose(a, b, 1.0).position.x == 1.0);
}

TEST_CASE("path planning") {
    SceneSpec spec = makeTinyScene(12, 0.05, {});
    SceneGeometry geom = SceneGeometry::fromScene(spec);

    SECTION("identical endpoints give a trivial valid path") {
        CollisionModel m = buildCollisionModel(BeliefGrid(spec.dims), std::vector<Aabb>{},
                                               geom);
        Viewpoint v = poseAt(m.stagingRegion.center());
        std::optional<Path> p = planPath(v, v, m);
        REQUIRE(p);
        REQUIRE(validatePath(*p, m));
    }
    SECTION("straight segment within staging") {
        CollisionModel m = buildCollisionModel(BeliefGrid(spec.dims), std::vector<Aabb>{},
                                               geom);
        Aabb s = m.stagingRegion;
        Viewpoint a = poseAt(s.center() + Vec3{-0.1, -0.1, 0});
        Viewpoint b = poseAt(s.center() + Vec3{0.1, 0.1, 0}, Quat::fromYaw(0.5));
        std::optional<Path> p = planPath(a, b, m);
        REQUIRE(p);
        REQUIRE(p->waypoints.size() == 2);
        REQUIRE(validatePath(*p, m));
    }
    SECTION("detour around a blocking box passes the dense validator") {
        // free interior with a large object box in the middle
        Aabb world = spec.dims.worldBox();
        Vec3 c = world.center();
        Aabb block{{c.x - 0.06, world.lo.y + 0.15, world.lo.z},
                   {c.x + 0.06, world.hi.y - 0.15, world.hi.z}};
        CollisionModel m = buildCollisionModel(allFree(spec.dims),
                                               std::vector<Aabb>{block}, geom);
        Viewpoint a = poseAt({world.lo.x + 0.06, c.y, c.z});
        Viewpoint b = poseAt({world.hi.x - 0.06, c.y, c.z}, Quat::fromYaw(1.0));
        REQUIRE_FALSE(segmentFree(a, b, m));  // forced to detour
        PlanParams pp;
        pp.seed = 3;
        std::optional<Path> p = planPath(a, b, m, pp);
        REQUIRE(p);
        REQUIRE(p->waypoints.size() >= 3);
        REQUIRE(validatePath(*p, m));
        REQUIRE(p->waypoints.front().position.x == a.position.x);
        REQUIRE(p->waypoints.back().position.x == b.position.x);
    }
    SECTION("infeasible goal returns nullopt") {
        CollisionModel m = buildCollisionModel(BeliefGrid(spec.dims), std::vector<Aabb>{},
                                               geom);
        Viewpoint a = poseAt(m.stagingRegion.center());
        Viewpoint b = poseAt(spec.dims.worldBox().center());  // unknown space
        REQUIRE_FALSE(planPath(a, b, m));
    }
}

TEST_CASE("validator catches a tunneling path") {
    SceneSpec spec = makeTinyScene(12, 0.05, {});
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    Aabb world = spec.dims.worldBox();
    Vec3 c = world.center();
    Aabb block{{c.x - 0.06, world.lo.y, world.lo.z}, {c.x + 0.06, world.hi.y, world.hi.z}};
    CollisionModel m = buildCollisionModel(allFree(spec.dims), std::vector<Aabb>{block},
                                           geom);
    Path tunnel;
    tunnel.waypoints = {poseAt({world.lo.x + 0.06, c.y, c.z}),
                        poseAt({world.hi.x - 0.06, c.y, c.z})};
    REQUIRE(isFree(tunnel.waypoints[0], m));
    REQUIRE(isFree(tunnel.waypoints[1], m));
    REQUIRE_FALSE(validatePath(tunnel, m));  // straight line pierces the box
    REQUIRE_FALSE(validatePath(Path{}, m));  // empty path is invalid
}

TEST_CASE("path distances") {
    SECTION("single pose has zero length") {
        Path p;
        p.waypoints = {poseAt({1, 2, 3})};
        auto [cs, ws] = pathDistances(p);
        REQUIRE(cs == 0.0);
        REQUIRE(ws == 0.0);
    }
    SECTION("pure translation") {
        Path p;
        p.waypoints = {poseAt({0, 0, 0}), poseAt({0.3, 0.4, 0})};
        auto [cs, ws] = pathDistances(p);
        REQUIRE(ws == Catch::Approx(0.5));
        REQUIRE(cs == Catch::Approx(0.5));
    }
    SECTION("pure rotation weights by lambda") {
        Path p;
        p.waypoints = {poseAt({0, 0, 0}), poseAt({0, 0, 0}, Quat::fromYaw(M_PI / 2))};
        auto [cs, ws] = pathDistances(p, 0.1);
        REQUIRE(ws == 0.0);
        REQUIRE(cs == Catch::Approx(0.1 * M_PI / 2));
    }
    SECTION("multi-segment sums") {
        Path p;
        p.waypoints = {poseAt({0, 0, 0}), poseAt({1, 0, 0}),
                       poseAt({1, 1, 0}, Quat::fromYaw(1.0))};
        auto [cs, ws] = pathDistances(p, 0.2);
        REQUIRE(ws == Catch::Approx(2.0));
        REQUIRE(cs == Catch::Approx(2.0 + 0.2 * 1.0));
    }
}

TEST_CASE("noisy execution") {
    Path p;
    p.waypoints = {poseAt({0, 0, 0}), poseAt({0.5, 0.2, 0.1}, Quat::fromYaw(0.7))};

    SECTION("zero noise reproduces the target bitwise") {
        Viewpoint v = executeWithNoise(p, {}, 99);
        REQUIRE(v.position.x == 0.5);
        REQUIRE(v.orientation.w == p.waypoints.back().orientation.w);
    }
    SECTION("noise is seeded and the quaternion stays unit") {
        ExecNoiseConfig cfg{0.005, 0.02};
        Viewpoint a = executeWithNoise(p, cfg, 7);
        Viewpoint b = executeWithNoise(p, cfg, 7);
        REQUIRE(a.position.x == b.position.x);
        REQUIRE(a.orientation.w == b.orientation.w);
        REQUIRE(a.orientation.norm() == Catch::Approx(1.0).margin(1e-12));
        Viewpoint c = executeWithNoise(p, cfg, 8);
        REQUIRE(a.position.x != c.position.x);
    }
    SECTION("position error rarely exceeds four sigma-norms") {
        ExecNoiseConfig cfg{0.005, 0.0};
        Vec3 target = p.waypoints.back().position;
        int within = 0;
        const int N = 10000;
        for (int s = 0; s < N; ++s) {
            Viewpoint v = executeWithNoise(p, cfg, std::uint64_t(s));
            if ((v.position - target).norm() < 0.02) ++within;
        }
        REQUIRE(within >= N * 99 / 100);
    }
}

TEST_CASE("path JSON round trip") {
    Path p;
    p.waypoints = {poseAt({0.1, -0.2, 0.3}, Quat::fromYaw(0.4)),
                   poseAt({0.5, 0.6, -0.7}, Quat::fromAxisAngle({1, 0, 0}, 0.9))};
    Path back = pathFromJson(pathToJson(p));
    REQUIRE(back.waypoints.size() == p.waypoints.size());
    for (std::size_t s = 0; s < back.waypoints.size(); ++s) {
        REQUIRE((back.waypoints[s].position - p.waypoints[s].position).norm() < 1e-12);
        REQUIRE(quatAngle(back.waypoints[s].orientation, p.waypoints[s].orientation) <
                1e-9);
    }
}
