// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <set>

#include "test_util.hpp"

using namespace nbvsim;

TEST_CASE("generate_scene is deterministic in (config, seed)") {
    DomainRandomizationConfig cfg;
    SceneSpec a = generateScene(cfg, 42);
    SceneSpec b = generateScene(cfg, 42);
    REQUIRE(a.dims.nx == b.dims.nx);
    REQUIRE(a.dims.origin.x == b.dims.origin.x);
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t o = 0; o < a.objects.size(); ++o) {
        REQUIRE(a.objects[o].shape == b.objects[o].shape);
        REQUIRE(a.objects[o].position.x == b.objects[o].position.x);
        REQUIRE(a.objects[o].voxels == b.objects[o].voxels);
    }
    SceneSpec c = generateScene(cfg, 43);
    bool differs = c.dims.nx != a.dims.nx || c.objects.size() != a.objects.size() ||
                   c.objects[0].voxels != a.objects[0].voxels;
    REQUIRE(differs);
}

TEST_CASE("domain randomization ranges over 1000 draws") {
    DomainRandomizationConfig cfg;
    Rng master(99);
    for (int s = 0; s < 1000; ++s) {
        SceneSpec spec = generateScene(cfg, master.nextU64());
        double ex = spec.dims.nx * spec.dims.resolution;
        double ey = spec.dims.ny * spec.dims.resolution;
        double ez = spec.dims.nz * spec.dims.resolution;
        // voxelization rounds extents up to whole voxels
        REQUIRE(ex >= 0.5);
        REQUIRE(ex <= 1.0 + cfg.resolution);
        REQUIRE(ey >= 1.1);
        REQUIRE(ey <= 1.5 + cfg.resolution);
        REQUIRE(ez >= 0.3);
        REQUIRE(ez <= 0.7 + cfg.resolution);
        REQUIRE(spec.cabinetHeight >= 0.05);
        REQUIRE(spec.cabinetHeight <= 0.2);
        REQUIRE(spec.objects.size() >= 3);
        REQUIRE(spec.objects.size() <= 10);
    }
}

TEST_CASE("degenerate object count range") {
    DomainRandomizationConfig cfg;
    cfg.minObjects = cfg.maxObjects = 3;
    Rng master(5);
    for (int s = 0; s < 20; ++s)
        REQUIRE(generateScene(cfg, master.nextU64()).objects.size() == 3);
}

TEST_CASE("objects are strictly interior and pairwise disjoint") {
    DomainRandomizationConfig cfg;
    Rng master(17);
    for (int s = 0; s < 50; ++s) {
        SceneSpec spec = generateScene(cfg, master.nextU64());
        std::set<VoxelCoord> all;
        for (const GroundTruthObject& obj : spec.objects) {
            REQUIRE_FALSE(obj.voxels.empty());
            for (const VoxelCoord& v : obj.voxels) {
                REQUIRE(v.i >= 1);
                REQUIRE(v.i <= spec.dims.nx - 2);
                REQUIRE(v.j >= 1);
                REQUIRE(v.j <= spec.dims.ny - 2);
                REQUIRE(v.k >= 1);
                REQUIRE(v.k <= spec.dims.nz - 2);
                REQUIRE(all.insert(v).second);  // disjoint
            }
        }
    }
}

TEST_CASE("objects rest on the floor or on another object") {
    DomainRandomizationConfig cfg;
    Rng master(23);
    for (int s = 0; s < 20; ++s) {
        SceneSpec spec = generateScene(cfg, master.nextU64());
        for (const GroundTruthObject& obj : spec.objects) {
            // settled means the object cannot drop one more voxel layer:
            // doing so either leaves the strict interior (floor contact) or
            // interpenetrates another object's voxels
            std::set<VoxelCoord> others;
            for (const GroundTruthObject& o : spec.objects)
                if (o.id != obj.id)
                    for (const VoxelCoord& v : o.voxels) others.insert(v);
            GroundTruthObject lowered = obj;
            lowered.position.z -= spec.dims.resolution;
            bool supported = !voxelizeObject(spec.dims, lowered);
            if (!supported)
                for (const VoxelCoord& v : lowered.voxels)
                    if (others.count(v)) {
                        supported = true;
                        break;
                    }
            REQUIRE(supported);
        }
    }
}

TEST_CASE("ground truth grid") {
    SECTION("empty scene is fully free") {
        SceneSpec spec = nbvtest::makeTinyScene(6, 0.05, {});
        BeliefGrid gt = groundTruthGrid(spec);
        REQUIRE(coverage(gt) == 1.0);
        REQUIRE(gt.countState(VoxelState::Free) == gt.dims().count());
    }
    SECTION("2x2x2 box in a 4x4x4 grid occupies exactly 8 voxels") {
        SceneSpec spec = nbvtest::makeTinyScene(4, 0.05, {{1, 1, 1, 2, 2, 2}});
        BeliefGrid gt = groundTruthGrid(spec);
        REQUIRE(gt.countState(VoxelState::Occupied) == 8);
        REQUIRE(coverage(gt) == 1.0);
        REQUIRE(gt.state(1, 1, 1) == VoxelState::Occupied);
        REQUIRE(gt.instanceId(2, 2, 2) == 0);
        REQUIRE(gt.occOrigin(1, 2, 1) == OccOrigin::Seen);
    }
    SECTION("random scenes always have coverage 1") {
        DomainRandomizationConfig cfg;
        Rng master(31);
        for (int s = 0; s < 5; ++s)
            REQUIRE(coverage(groundTruthGrid(generateScene(cfg, master.nextU64()))) == 1.0);
    }
}

TEST_CASE("voxelization matches the shape membership rule") {
    SceneSpec spec = generateScene({}, 77);
    for (const GroundTruthObject& obj : spec.objects) {
        std::set<VoxelCoord> vox(obj.voxels.begin(), obj.voxels.end());
        for (int k = 1; k <= spec.dims.nz - 2; ++k)
            for (int j = 1; j <= spec.dims.ny - 2; ++j)
                for (int i = 1; i <= spec.dims.nx - 2; ++i) {
                    bool inside = insideShape(obj, spec.dims.voxelCenter(i, j, k));
                    REQUIRE(inside == (vox.count({i, j, k}) > 0));
                }
    }
}

TEST_CASE("scene JSON round trip") {
    SceneSpec spec = generateScene({}, 123);
    std::string path = "test_scene_roundtrip.json";
    saveScene(spec, path);
    SceneSpec r = loadScene(path);
    REQUIRE(r.dims.nx == spec.dims.nx);
    REQUIRE(r.dims.resolution == spec.dims.resolution);
    REQUIRE(r.openingFace == spec.openingFace);
    REQUIRE(r.cabinetHeight == spec.cabinetHeight);
    REQUIRE(r.objects.size() == spec.objects.size());
    for (std::size_t o = 0; o < r.objects.size(); ++o) {
        REQUIRE(r.objects[o].shape == spec.objects[o].shape);
        REQUIRE(r.objects[o].voxels == spec.objects[o].voxels);
    }
    std::remove(path.c_str());
}
