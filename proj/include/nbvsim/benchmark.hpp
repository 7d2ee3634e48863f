// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_BENCHMARK_HPP
#define NBVSIM_BENCHMARK_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/episode.hpp"

namespace nbvsim {

// Deterministic shortest-round-trip double formatting for CSV cells.
inline std::string fmtDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof probe, "%.*g", prec, v);
        std::sscanf(probe, "%lf", &back);
        if (back == v) return probe;
    }
    return buf;
}

struct EpisodeMetric {
    Policy policy = Policy::Random;
    int sceneIndex = 0;
    std::uint64_t sceneSeed = 0;
    EpisodeStatus status = EpisodeStatus::StepLimit;
    int viewpoints = 0;  // executed views on success, the step cap otherwise
    bool success = false;
    double finalCoverage = 0.0;
    double cspace = 0.0, workspace = 0.0;
    double planningSeconds = 0.0;  // wall clock; sidecar only
    int volumeBucket = 0;          // 0 small / 1 medium / 2 large
    std::vector<double> coverageCurve;
};

struct PolicySummary {
    Policy policy = Policy::Random;
    int episodes = 0;
    double meanViews = 0.0, stdViews = 0.0;
    double successRate = 0.0;
    double meanPlanningSeconds = 0.0;
    double meanCspace = 0.0, meanWorkspace = 0.0;
    std::vector<double> coverageCurve;          // mean coverage per view index
    std::array<double, 3> bucketMeanViews{};    // by scene-volume tercile
};

struct MetricsTable {
    std::vector<EpisodeMetric> rows;
    std::vector<PolicySummary> summaries;
    std::array<double, 2> bucketEdges{};  // volume terciles
    int tMax = 15;
};

struct BenchmarkConfig {
    int nScenes = 30;
    std::vector<Policy> policies{Policy::Random, Policy::RandomGuided, Policy::BilevelMpc};
    EpisodeConfig episode;
    DomainRandomizationConfig scenes;
    std::uint64_t seed = 1000;  // scene seeds derive from this; keep disjoint from training
    std::vector<SceneSpec> explicitScenes;  // overrides generation when non-empty
};

// Streams per-episode artifacts to disk as they finish so benchmark memory
// stays flat; collects the file list for the manifest.
class ArtifactWriter {
public:
    explicit ArtifactWriter(const std::string& outDir) : dir_(outDir) {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        fs::create_directories(dir_ + "/scenes", ec);
        fs::create_directories(dir_ + "/grids", ec);
        fs::create_directories(dir_ + "/frames", ec);
        if (!fs::exists(dir_))
            throw std::runtime_error("ArtifactWriter: cannot create " + dir_);
        episodes_.open(dir_ + "/episodes.jsonl");
        if (!episodes_) throw std::runtime_error("ArtifactWriter: cannot open episodes.jsonl");
        files_.push_back("episodes.jsonl");
    }

    const std::string& dir() const { return dir_; }

    void addScene(int sceneIndex, const SceneSpec& spec) {
        std::string rel = "scenes/scene" + std::to_string(sceneIndex) + ".json";
        saveScene(spec, dir_ + "/" + rel);
        files_.push_back(rel);
    }

    void addEpisode(int sceneIndex, Policy policy, const EpisodeLog& log) {
        std::string tag = std::string(policyName(policy)) + "_s" +
                          std::to_string(sceneIndex);
        std::string gridPrefix = "grids/" + tag;
        for (std::size_t s = 0; s < log.steps.size(); ++s) {
            std::string rel = gridPrefix + "_step" + std::to_string(s) + "_pre.grid";
            saveGrid(log.beliefBefore[s], dir_ + "/" + rel);
            files_.push_back(rel);
            std::string depth = "frames/" + tag + "_step" + std::to_string(s) + "_depth.pgm";
            std::string inst = "frames/" + tag + "_step" + std::to_string(s) + "_inst.pgm";
            saveDepthPgm(log.observations[s], dir_ + "/" + depth);
            saveInstancePgm(log.observations[s], dir_ + "/" + inst);
            files_.push_back(depth);
            files_.push_back(inst);
            for (int axis = 0; axis < 3; ++axis) {
                std::string rnd = "frames/" + tag + "_step" + std::to_string(s) + "_ortho" +
                                  std::to_string(axis) + ".ppm";
                saveOrthoPpm(log.beliefAfter[s], axis, dir_ + "/" + rnd);
                files_.push_back(rnd);
            }
        }
        std::string sceneRel = "scenes/scene" + std::to_string(sceneIndex) + ".json";
        episodes_ << episodeToJson(log, sceneRel, gridPrefix).dump() << "\n";
    }

    // Orthographic projection along one axis, color-coded by the dominant
    // voxel state in each column (SEEN > PREDICTED > UNKNOWN > FREE).
    static void saveOrthoPpm(const BeliefGrid& g, int axis, const std::string& path) {
        const GridDims& d = g.dims();
        int w, h;
        if (axis == 0) { w = d.ny; h = d.nz; }
        else if (axis == 1) { w = d.nx; h = d.nz; }
        else { w = d.nx; h = d.ny; }
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("saveOrthoPpm: cannot open " + path);
        f << "P6\n" << w << " " << h << "\n255\n";
        auto rank = [&](int i, int j, int k) {
            VoxelState s = g.state(i, j, k);
            if (s == VoxelState::Occupied)
                return g.occOrigin(i, j, k) == OccOrigin::Seen ? 3 : 2;
            return s == VoxelState::Unknown ? 1 : 0;
        };
        static const unsigned char colors[4][3] = {
            {255, 255, 255},  // FREE
            {128, 128, 128},  // UNKNOWN
            {255, 160, 32},   // PREDICTED
            {32, 192, 64},    // SEEN
        };
        for (int row = h - 1; row >= 0; --row)
            for (int col = 0; col < w; ++col) {
                int best = 0;
                if (axis == 0)
                    for (int i = 0; i < d.nx; ++i) best = std::max(best, rank(i, col, row));
                else if (axis == 1)
                    for (int j = 0; j < d.ny; ++j) best = std::max(best, rank(col, j, row));
                else
                    for (int k = 0; k < d.nz; ++k) best = std::max(best, rank(col, row, k));
                f.write(reinterpret_cast<const char*>(colors[best]), 3);
            }
        if (!f) throw std::runtime_error("saveOrthoPpm: write failed for " + path);
    }

    void writeText(const std::string& rel, const std::string& content) {
        std::ofstream f(dir_ + "/" + rel);
        if (!f) throw std::runtime_error("ArtifactWriter: cannot open " + rel);
        f << content;
        if (!f) throw std::runtime_error("ArtifactWriter: write failed for " + rel);
        files_.push_back(rel);
    }

    // metrics.csv + summary + manifest. Wall-clock timings go to a separate
    // sidecar so the deterministic outputs stay byte-identical across runs.
    nlohmann::json finish(const MetricsTable& table) {
        episodes_.close();

        std::string csv =
            "policy,scene,scene_seed,status,viewpoints,success,final_coverage,"
            "cspace,workspace,volume_bucket\n";
        std::string timings = "policy,scene,planning_seconds\n";
        for (const EpisodeMetric& m : table.rows) {
            csv += std::string(policyName(m.policy)) + "," + std::to_string(m.sceneIndex) +
                   "," + std::to_string(m.sceneSeed) + "," + statusName(m.status) + "," +
                   std::to_string(m.viewpoints) + "," + (m.success ? "1" : "0") + "," +
                   fmtDouble(m.finalCoverage) + "," + fmtDouble(m.cspace) + "," +
                   fmtDouble(m.workspace) + "," + std::to_string(m.volumeBucket) + "\n";
            timings += std::string(policyName(m.policy)) + "," +
                       std::to_string(m.sceneIndex) + "," +
                       fmtDouble(m.planningSeconds) + "\n";
        }
        writeText("metrics.csv", csv);
        std::ofstream tf(dir_ + "/timings.csv");  // sidecar, not in the manifest
        tf << timings;

        nlohmann::json summary = nlohmann::json::array();
        for (const PolicySummary& s : table.summaries)
            summary.push_back({{"policy", policyName(s.policy)},
                               {"episodes", s.episodes},
                               {"mean_viewpoints", s.meanViews},
                               {"std_viewpoints", s.stdViews},
                               {"success_rate", s.successRate},
                               {"mean_cspace", s.meanCspace},
                               {"mean_workspace", s.meanWorkspace},
                               {"coverage_curve", s.coverageCurve},
                               {"bucket_mean_viewpoints", s.bucketMeanViews}});
        writeText("summary.json",
                  nlohmann::json{{"policies", summary},
                                 {"bucket_edges", table.bucketEdges},
                                 {"t_max", table.tMax}}
                      .dump(2) +
                      "\n");

        nlohmann::json manifest = nlohmann::json::array();
        std::sort(files_.begin(), files_.end());
        for (const std::string& rel : files_) {
            char hex[20];
            std::snprintf(hex, sizeof hex, "%016llx",
                          (unsigned long long)fileHash(dir_ + "/" + rel));
            manifest.push_back({{"path", rel}, {"fnv1a64", hex}});
        }
        std::ofstream mf(dir_ + "/manifest.json");
        if (!mf) throw std::runtime_error("ArtifactWriter: cannot open manifest.json");
        mf << manifest.dump(2) << "\n";
        return manifest;
    }

private:
    std::string dir_;
    std::ofstream episodes_;
    std::vector<std::string> files_;
};

inline double interiorVolume(const SceneSpec& spec) {
    return spec.dims.worldBox().volume();
}

// Run every policy on every generated scene; evaluation scene seeds derive
// from cfg.seed and must stay disjoint from any training seed range.
inline MetricsTable runBenchmark(const BenchmarkConfig& cfg,
                                 const EpisodeModels& models = {},
                                 ArtifactWriter* writer = nullptr) {
    if (cfg.nScenes < 1) throw std::invalid_argument("runBenchmark: nScenes must be >= 1");
    MetricsTable table;
    table.tMax = cfg.episode.tMax;

    Rng master(cfg.seed);
    std::vector<SceneSpec> specs = cfg.explicitScenes;
    if (specs.empty())
        for (int s = 0; s < cfg.nScenes; ++s)
            specs.push_back(generateScene(cfg.scenes, master.nextU64()));
    std::vector<double> volumes;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        volumes.push_back(interiorVolume(specs[s]));
        if (writer) writer->addScene(int(s), specs[s]);
    }
    std::vector<double> sorted = volumes;
    std::sort(sorted.begin(), sorted.end());
    table.bucketEdges = {sorted[sorted.size() / 3],
                         sorted[std::min(sorted.size() - 1, 2 * sorted.size() / 3)]};
    auto bucketOf = [&](double v) {
        return v <= table.bucketEdges[0] ? 0 : (v <= table.bucketEdges[1] ? 1 : 2);
    };

    for (Policy policy : cfg.policies) {
        for (int s = 0; s < int(specs.size()); ++s) {
            EpisodeConfig ec = cfg.episode;
            ec.policy = policy;
            ec.seed = cfg.seed ^ (std::uint64_t(s) * 977 + std::uint64_t(policy) * 131071);
            EpisodeLog log = runEpisode(specs[s], ec, models);

            EpisodeMetric m;
            m.policy = policy;
            m.sceneIndex = s;
            m.sceneSeed = specs[s].seed;
            m.status = log.status;
            m.success = log.status == EpisodeStatus::Success;
            m.viewpoints = m.success ? int(log.steps.size()) : ec.tMax;
            m.finalCoverage = log.finalCoverage;
            m.volumeBucket = bucketOf(volumes[std::size_t(s)]);
            for (const StepRecord& r : log.steps) {
                m.cspace += r.cspace;
                m.workspace += r.workspace;
                m.planningSeconds += r.planningSeconds;
                m.coverageCurve.push_back(r.coverageAfter);
            }
            // pad the curve to tMax with the final value
            while (int(m.coverageCurve.size()) < ec.tMax)
                m.coverageCurve.push_back(log.finalCoverage);
            table.rows.push_back(m);
            if (writer) writer->addEpisode(s, policy, log);
        }
    }

    for (Policy policy : cfg.policies) {
        PolicySummary ps;
        ps.policy = policy;
        ps.coverageCurve.assign(std::size_t(cfg.episode.tMax), 0.0);
        std::array<double, 3> bucketSum{};
        std::array<int, 3> bucketN{};
        std::vector<double> views;
        for (const EpisodeMetric& m : table.rows) {
            if (m.policy != policy) continue;
            ++ps.episodes;
            views.push_back(double(m.viewpoints));
            ps.successRate += m.success ? 1.0 : 0.0;
            ps.meanPlanningSeconds += m.planningSeconds;
            ps.meanCspace += m.cspace;
            ps.meanWorkspace += m.workspace;
            for (std::size_t i = 0; i < ps.coverageCurve.size(); ++i)
                ps.coverageCurve[i] += m.coverageCurve[i];
            bucketSum[std::size_t(m.volumeBucket)] += double(m.viewpoints);
            ++bucketN[std::size_t(m.volumeBucket)];
        }
        double n = double(ps.episodes);
        for (double v : views) ps.meanViews += v / n;
        for (double v : views) ps.stdViews += (v - ps.meanViews) * (v - ps.meanViews);
        ps.stdViews = ps.episodes > 1 ? std::sqrt(ps.stdViews / (n - 1.0)) : 0.0;
        ps.successRate /= n;
        ps.meanPlanningSeconds /= n;
        ps.meanCspace /= n;
        ps.meanWorkspace /= n;
        for (double& c : ps.coverageCurve) c /= n;
        for (int b = 0; b < 3; ++b)
            ps.bucketMeanViews[std::size_t(b)] =
                bucketN[std::size_t(b)] ? bucketSum[std::size_t(b)] / bucketN[std::size_t(b)]
                                        : 0.0;
        table.summaries.push_back(std::move(ps));
    }
    return table;
}

// --- standalone path audit ----------------------------------------------------
//
// Re-validates every executed path in an exported run directory against a
// collision model rebuilt from the recorded belief snapshot, scene geometry,
// and per-step object boxes.

struct PathAuditResult {
    int paths = 0;
    int valid = 0;
    std::vector<std::string> failures;
};

inline PathAuditResult auditEpisodesFile(const std::string& runDir) {
    std::ifstream f(runDir + "/episodes.jsonl");
    if (!f) throw std::runtime_error("auditEpisodesFile: cannot open episodes.jsonl in " +
                                     runDir);
    PathAuditResult res;
    std::string line;
    int epIdx = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SceneSpec spec = loadScene(runDir + "/" + j.at("scene").get<std::string>());
        SceneGeometry geom = SceneGeometry::fromScene(spec);
        for (const auto& js : j.at("steps")) {
            BeliefGrid grid = loadGrid(runDir + "/" + js.at("grid_before").get<std::string>());
            std::vector<Aabb> boxes;
            for (const auto& jb : js.at("collision_boxes")) boxes.push_back(aabbFromJson(jb));
            CollisionModel model = buildCollisionModel(grid, boxes, geom);
            Path path = pathFromJson(js.at("path"));
            ++res.paths;
            if (validatePath(path, model))
                ++res.valid;
            else
                res.failures.push_back("episode " + std::to_string(epIdx) + " step " +
                                       std::to_string(js.at("t").get<int>()));
        }
        ++epIdx;
    }
    return res;
}

}  // namespace nbvsim

#endif
