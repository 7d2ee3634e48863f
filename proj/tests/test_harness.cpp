// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"

using namespace nbvsim;
using nbvtest::makeTinyScene;

namespace {

// Fast episode profile for tiny scenes: guided sampling + heuristic scoring.
EpisodeConfig quickConfig() {
    EpisodeConfig cfg;
    cfg.policy = Policy::RandomGuided;
    cfg.scoreModelKind = ScoreKind::Heuristic;
    cfg.intr = CameraIntrinsics{}.downsampled(40, 22);
    cfg.scoreIntr = CameraIntrinsics{}.downsampled(16, 9);
    cfg.batch = 20;
    cfg.tMax = 10;
    return cfg;
}

std::string readFile(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("episode terminates immediately once coverage clears the threshold") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    EpisodeConfig cfg = quickConfig();
    cfg.cMax = 0.0;  // any nonzero coverage suffices
    EpisodeLog log = runEpisode(spec, cfg);
    REQUIRE(log.status == EpisodeStatus::Success);
    REQUIRE(log.steps.size() == 1);
    REQUIRE(log.finalCoverage > 0.0);
    REQUIRE(log.beliefBefore.size() == 1);
    REQUIRE(log.beliefAfter.size() == 1);
    REQUIRE(log.observations.size() == 1);
}

TEST_CASE("empty interior reaches high coverage in a few views") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    EpisodeConfig cfg = quickConfig();
    cfg.cMax = 0.85;
    EpisodeLog log = runEpisode(spec, cfg);
    REQUIRE(log.status == EpisodeStatus::Success);
    REQUIRE(log.finalCoverage > 0.85);
    // coverage is monotone along the episode
    double prev = 0.0;
    for (const StepRecord& r : log.steps) {
        REQUIRE(r.coverageAfter >= prev);
        prev = r.coverageAfter;
    }
    REQUIRE(log.finalCoverage == log.steps.back().coverageAfter);
}

TEST_CASE("hopeless validation threshold hits the bounded discard limit") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    EpisodeConfig cfg = quickConfig();
    cfg.noiseCfg = {0.5, 0.0};  // gross execution noise
    cfg.epsPos = 1e-6;          // nothing can pass validation
    EpisodeLog log = runEpisode(spec, cfg);
    REQUIRE(log.status == EpisodeStatus::StepLimit);
    REQUIRE(log.steps.empty());
    REQUIRE(log.discardedSteps == cfg.tMax);
    REQUIRE(log.finalCoverage == 0.0);
}

TEST_CASE("episodes are deterministic in their seeds") {
    SceneSpec spec = makeTinyScene(8, 0.05, {{2, 2, 2, 4, 4, 4}});
    EpisodeConfig cfg = quickConfig();
    cfg.noiseCfg = {0.002, 0.005};
    cfg.sensorNoise.depthSigma = 0.002;
    EpisodeLog a = runEpisode(spec, cfg);
    EpisodeLog b = runEpisode(spec, cfg);
    REQUIRE(a.status == b.status);
    REQUIRE(a.finalCoverage == b.finalCoverage);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t s = 0; s < a.steps.size(); ++s) {
        REQUIRE(a.steps[s].reached.position.x == b.steps[s].reached.position.x);
        REQUIRE(a.steps[s].reached.orientation.w == b.steps[s].reached.orientation.w);
        REQUIRE(a.steps[s].coverageAfter == b.steps[s].coverageAfter);
        REQUIRE(a.steps[s].cspace == b.steps[s].cspace);
    }
    // and sensitive to the seed
    cfg.seed += 1;
    EpisodeLog c = runEpisode(spec, cfg);
    bool differs = c.steps.size() != a.steps.size() ||
                   c.steps[0].reached.position.x != a.steps[0].reached.position.x;
    REQUIRE(differs);
}

TEST_CASE("vpformer policy requires a model") {
    SceneSpec spec = makeTinyScene(8, 0.05, {});
    EpisodeConfig cfg = quickConfig();
    cfg.policy = Policy::VpFormerPolicy;
    REQUIRE_THROWS_AS(runEpisode(spec, cfg), std::invalid_argument);
}

TEST_CASE("episode config JSON supports partial override") {
    EpisodeConfig cfg;
    nlohmann::json j = episodeConfigToJson(cfg);
    REQUIRE(j.at("policy") == "bilevel_mpc");
    REQUIRE(j.at("c_max") == cfg.cMax);

    // apply only two keys on top of a modified baseline
    EpisodeConfig mod = quickConfig();
    double oldEps = mod.epsPos;
    episodeConfigFromJson({{"t_max", 4}, {"policy", "random"}}, mod);
    REQUIRE(mod.tMax == 4);
    REQUIRE(mod.policy == Policy::Random);
    REQUIRE(mod.epsPos == oldEps);                      // untouched
    REQUIRE(mod.scoreModelKind == ScoreKind::Heuristic);  // untouched

    // full round trip
    EpisodeConfig back;
    episodeConfigFromJson(episodeConfigToJson(mod), back);
    REQUIRE(back.tMax == mod.tMax);
    REQUIRE(back.policy == mod.policy);
    REQUIRE(back.cMax == mod.cMax);
    REQUIRE(back.intr.width == mod.intr.width);
    REQUIRE_THROWS_AS(episodeConfigFromJson({{"policy", "bogus"}}, back),
                      std::invalid_argument);
}

TEST_CASE("benchmark over explicit scenes") {
    BenchmarkConfig cfg;
    cfg.explicitScenes = {makeTinyScene(8, 0.05, {{2, 2, 2, 4, 4, 4}}),
                          makeTinyScene(8, 0.05, {})};
    cfg.explicitScenes[0].seed = 11;
    cfg.explicitScenes[1].seed = 12;
    cfg.policies = {Policy::Random, Policy::RandomGuided};
    cfg.episode = quickConfig();
    cfg.episode.cMax = 0.6;
    cfg.episode.tMax = 6;

    MetricsTable table = runBenchmark(cfg);
    REQUIRE(table.rows.size() == 4);  // policies x scenes
    REQUIRE(table.summaries.size() == 2);
    for (const EpisodeMetric& m : table.rows) {
        REQUIRE(int(m.coverageCurve.size()) == cfg.episode.tMax);
        if (m.success) REQUIRE(m.viewpoints <= cfg.episode.tMax);
        else REQUIRE(m.viewpoints == cfg.episode.tMax);
    }
    for (const PolicySummary& s : table.summaries) {
        REQUIRE(s.episodes == 2);
        REQUIRE(s.successRate >= 0.0);
        REQUIRE(s.successRate <= 1.0);
        REQUIRE(s.meanViews > 0.0);
    }

    // identical config twice gives identical tables
    MetricsTable again = runBenchmark(cfg);
    REQUIRE(again.rows.size() == table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        REQUIRE(again.rows[r].finalCoverage == table.rows[r].finalCoverage);
        REQUIRE(again.rows[r].viewpoints == table.rows[r].viewpoints);
        REQUIRE(again.rows[r].cspace == table.rows[r].cspace);
    }
}

TEST_CASE("artifact export, reproducibility, and path audit") {
    namespace fs = std::filesystem;
    BenchmarkConfig cfg;
    cfg.explicitScenes = {makeTinyScene(8, 0.05, {{2, 2, 2, 4, 4, 4}})};
    cfg.explicitScenes[0].seed = 21;
    cfg.policies = {Policy::RandomGuided};
    cfg.episode = quickConfig();
    cfg.episode.cMax = 0.6;
    cfg.episode.tMax = 5;

    std::string dirA = "harness_run_a", dirB = "harness_run_b";
    for (const std::string& d : {dirA, dirB}) {
        ArtifactWriter writer(d);
        MetricsTable table = runBenchmark(cfg, {}, &writer);
        writer.finish(table);
    }

    SECTION("deterministic outputs are byte-identical across runs") {
        for (const char* rel : {"episodes.jsonl", "metrics.csv", "summary.json",
                                "manifest.json"})
            REQUIRE(readFile(dirA + "/" + std::string(rel)) ==
                    readFile(dirB + "/" + std::string(rel)));
    }
    SECTION("metrics.csv has a header plus one row per episode") {
        std::string csv = readFile(dirA + "/metrics.csv");
        REQUIRE(csv.rfind("policy,scene,scene_seed,status,viewpoints,success,", 0) == 0);
        REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + 1 episode
        // timings sidecar exists but is not in the manifest
        REQUIRE(fs::exists(dirA + "/timings.csv"));
        nlohmann::json manifest = nlohmann::json::parse(readFile(dirA + "/manifest.json"));
        for (const auto& e : manifest)
            REQUIRE(e.at("path").get<std::string>() != "timings.csv");
    }
    SECTION("manifest hashes match the files on disk") {
        nlohmann::json manifest = nlohmann::json::parse(readFile(dirA + "/manifest.json"));
        REQUIRE(manifest.size() >= 3);
        for (const auto& e : manifest) {
            char hex[20];
            std::snprintf(hex, sizeof hex, "%016llx",
                          (unsigned long long)fileHash(dirA + "/" +
                                                       e.at("path").get<std::string>()));
            REQUIRE(e.at("fnv1a64").get<std::string>() == hex);
        }
    }
    SECTION("every recorded path passes the standalone audit") {
        PathAuditResult audit = auditEpisodesFile(dirA);
        REQUIRE(audit.paths > 0);
        REQUIRE(audit.valid == audit.paths);
        REQUIRE(audit.failures.empty());
    }
    fs::remove_all(dirA);
    fs::remove_all(dirB);
}

TEST_CASE("artifact writer with zero episodes still emits valid files") {
    namespace fs = std::filesystem;
    std::string dir = "harness_run_empty";
    {
        ArtifactWriter writer(dir);
        MetricsTable empty;
        writer.finish(empty);
    }
    std::string csv = readFile(dir + "/metrics.csv");
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1);  // header only
    REQUIRE(fs::exists(dir + "/episodes.jsonl"));
    REQUIRE(fs::exists(dir + "/manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("expert data collection produces bounded token sequences") {
    // two tiny hand-built scenes through the benchmark-free path: call the
    // episode loop directly via collectExpertData's random scenes is heavy, so
    // emulate with explicit episodes instead.
    SceneSpec spec = makeTinyScene(8, 0.05, {{2, 2, 2, 4, 4, 4}});
    EpisodeConfig cfg = quickConfig();
    cfg.policy = Policy::BilevelMpc;
    cfg.cMax = 0.5;
    cfg.tMax = 4;
    EpisodeLog log = runEpisode(spec, cfg);
    REQUIRE_FALSE(log.steps.empty());
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    Aabb box = poseBox(geom);
    // tokens reconstructed from the log line up with the recorded poses
    for (const StepRecord& r : log.steps) {
        std::array<double, 7> feat = boxVpFeat(box, r.reached);
        Viewpoint back = boxVpUnfeat(box, feat);
        REQUIRE((back.position - r.reached.position).norm() < 1e-9);
        // quatAngle goes through acos, which loses half the precision near 0
        REQUIRE(quatAngle(back.orientation, r.reached.orientation) < 1e-6);
        for (int d = 0; d < 3; ++d) {
            REQUIRE(feat[d] >= -1.0);
            REQUIRE(feat[d] <= 1.0);
        }
        REQUIRE(feat[3] >= 0.0);  // canonical hemisphere
    }
}

TEST_CASE("fmtDouble is a shortest exact round trip") {
    for (double v : {0.0, 1.0, -1.5, 0.1, 1.0 / 3.0, 123456.789, 1e-12, 3.14159265358979}) {
        std::string s = fmtDouble(v);
        REQUIRE(std::stod(s) == v);
    }
    REQUIRE(fmtDouble(0.5) == "0.5");
    REQUIRE(fmtDouble(2.0) == "2");
}
