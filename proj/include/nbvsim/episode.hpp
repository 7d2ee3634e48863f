// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_EPISODE_HPP
#define NBVSIM_EPISODE_HPP

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/motion.hpp"
#include "nbvsim/mpc.hpp"
#include "nbvsim/registration.hpp"
#include "nbvsim/scene.hpp"
#include "nbvsim/score.hpp"
#include "nbvsim/vpformer.hpp"

namespace nbvsim {

enum class Policy { Random, RandomGuided, BilevelMpc, VpFormerPolicy };

inline const char* policyName(Policy p) {
    switch (p) {
        case Policy::Random: return "random";
        case Policy::RandomGuided: return "random_guided";
        case Policy::BilevelMpc: return "bilevel_mpc";
        case Policy::VpFormerPolicy: return "vpformer";
    }
    return "?";
}

inline Policy policyFromName(const std::string& s) {
    if (s == "random") return Policy::Random;
    if (s == "random_guided") return Policy::RandomGuided;
    if (s == "bilevel_mpc") return Policy::BilevelMpc;
    if (s == "vpformer") return Policy::VpFormerPolicy;
    throw std::invalid_argument("unknown policy " + s);
}

// Featurize a pose into [-1, 1]^3 x unit quaternion relative to a bounding
// box; inverse of the sequence model's output squashing.
inline std::array<double, 7> boxVpFeat(const Aabb& box, const Viewpoint& v) {
    Vec3 c = box.center(), h = box.extent() * 0.5;
    Quat q = v.orientation.normalized();
    if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
    return {(v.position.x - c.x) / h.x, (v.position.y - c.y) / h.y,
            (v.position.z - c.z) / h.z, q.w, q.x, q.y, q.z};
}

inline Viewpoint boxVpUnfeat(const Aabb& box, const std::array<double, 7>& a) {
    Vec3 c = box.center(), h = box.extent() * 0.5;
    return {{c.x + h.x * a[0], c.y + h.y * a[1], c.z + h.z * a[2]},
            Quat{a[3], a[4], a[5], a[6]}.normalized()};
}

// Pose region the sequence model predicts into: staging volume plus the grid.
inline Aabb poseBox(const SceneGeometry& geom) {
    Aabb box = geom.stagingRegion();
    box.expand(geom.worldBox.lo);
    box.expand(geom.worldBox.hi);
    return box;
}

// Camera rest pose before the first observation: staging-region center,
// looking at the cabinet interior.
inline Viewpoint restPose(const SceneGeometry& geom) {
    return Viewpoint::lookAt(geom.stagingRegion().center(), geom.worldBox.center());
}

struct EpisodeConfig {
    Policy policy = Policy::BilevelMpc;
    ScoreKind scoreModelKind = ScoreKind::RolloutLabeler;
    double cMax = 0.85;
    int tMax = 15;
    bool completionOn = true;
    bool refinementOn = true;
    ExecNoiseConfig noiseCfg;
    SensorNoiseConfig sensorNoise;
    std::uint64_t seed = 1;
    int batch = 50;  // candidate batch depth for the Alg.-2 fallback walk
    double epsPos = 0.02;       // meters
    double epsAngDeg = 5.0;     // degrees
    CameraIntrinsics intr;                            // sensing resolution
    CameraIntrinsics scoreIntr{70.25, 32, 18, 2.0};   // reduced, for scoring
    MpcParams mpc = MpcParams::fast();
    PlanParams plan;
    RegistrationConfig reg;
    int vpformerSteps = 2;  // model-driven steps before falling back to stage 1
    std::array<double, 7> refineSigma{0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05};

    void validate() const {
        if (!(cMax >= 0.0 && cMax <= 1.0))
            throw std::invalid_argument("cMax must lie in [0, 1]");
        if (tMax < 1) throw std::invalid_argument("tMax must be >= 1");
        if (batch < 1) throw std::invalid_argument("batch must be >= 1");
        mpc.validate();
    }
};

enum class EpisodeStatus { Success, StepLimit, PlanningFailure };

inline const char* statusName(EpisodeStatus s) {
    switch (s) {
        case EpisodeStatus::Success: return "SUCCESS";
        case EpisodeStatus::StepLimit: return "STEP_LIMIT";
        case EpisodeStatus::PlanningFailure: return "PLANNING_FAILURE";
    }
    return "?";
}

struct StepRecord {
    int t = 0;
    Viewpoint chosen;               // the target pose v_best
    Viewpoint reached;              // v_real after execution noise
    double predictedScore = 0.0;    // c-hat from the score model (NaN if unscored)
    double coverageAfter = 0.0;
    double planningSeconds = 0.0;   // wall clock; kept out of deterministic dumps
    double cspace = 0.0, workspace = 0.0;
    int candidatesTried = 0;        // walk depth before a plannable viewpoint
    int discardedBefore = 0;        // validation discards preceding this step
    Path path;
    std::vector<Aabb> collisionBoxes;  // object boxes of this step's model
};

struct EpisodeLog {
    std::vector<StepRecord> steps;
    EpisodeStatus status = EpisodeStatus::StepLimit;
    double finalCoverage = 0.0;
    int discardedSteps = 0;
    std::uint64_t sceneSeed = 0;
    Policy policy = Policy::BilevelMpc;
    // heavyweight side channels for artifact export and post-hoc audit
    std::vector<BeliefGrid> beliefBefore;  // belief the step's model was built from
    std::vector<BeliefGrid> beliefAfter;
    std::vector<Observation> observations;
};

// Optional trained components; required only by the policies that use them.
struct EpisodeModels {
    std::optional<SurrogateNet> surrogate;
    std::shared_ptr<const VpFormer> vpformer;
};

inline ScoreModel makeScoreModel(ScoreKind kind, const EpisodeConfig& cfg,
                                 std::shared_ptr<const RolloutContext> ctx,
                                 const EpisodeModels& models) {
    switch (kind) {
        case ScoreKind::RolloutLabeler:
            return ScoreModel::rolloutLabeler(std::move(ctx), cfg.scoreIntr,
                                              cfg.completionOn);
        case ScoreKind::Heuristic:
            return ScoreModel::heuristic(cfg.scoreIntr);
        case ScoreKind::Surrogate:
            if (!models.surrogate)
                throw std::invalid_argument("surrogate score requested without weights");
            return ScoreModel::surrogate(*models.surrogate);
    }
    throw std::invalid_argument("bad score kind");
}

// The closed sensing loop: candidate generation -> sorted fallback walk ->
// plan -> execute with noise -> validate the reached pose -> integrate ->
// update coverage, until the threshold or the step cap.
inline EpisodeLog runEpisode(const SceneSpec& spec, const EpisodeConfig& cfg,
                             const EpisodeModels& models = {}) {
    cfg.validate();
    if (cfg.policy == Policy::VpFormerPolicy && !models.vpformer)
        throw std::invalid_argument("vpformer policy requested without a model");

    auto ctx = std::make_shared<const RolloutContext>(spec);
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    ScoreModel score = makeScoreModel(cfg.scoreModelKind, cfg, ctx, models);
    Aabb vpBox = poseBox(geom);

    EpisodeLog log;
    log.sceneSeed = spec.seed;
    log.policy = cfg.policy;

    BeliefGrid grid(spec.dims);
    InstanceStore store(cfg.reg.eta);
    Viewpoint current = restPose(geom);
    double c = 0.0;
    int t = 0;
    Rng master(cfg.seed ^ spec.seed);
    TokenSequence history;  // for the sequence-model policy

    while (c <= cfg.cMax && t < cfg.tMax) {
        if (log.discardedSteps >= cfg.tMax) break;  // bounded discard loop
        auto t0 = std::chrono::steady_clock::now();

        CollisionModel model = buildCollisionModel(grid, store, geom);
        std::uint64_t stepSalt = std::uint64_t(t) * 131 + std::uint64_t(log.discardedSteps);
        Rng sampleRng = master.fork(stepSalt * 4 + 0);

        std::vector<ScoredViewpoint> candidates;
        if (cfg.policy == Policy::Random) {
            candidates = baselinePolicy(BaselineKind::Random, grid, score, model,
                                        cfg.batch, sampleRng);
        } else if (cfg.policy == Policy::RandomGuided) {
            candidates = baselinePolicy(BaselineKind::RandomGuided, grid, score, model,
                                        cfg.batch, sampleRng);
        } else if (cfg.policy == Policy::BilevelMpc) {
            candidates = bilevelMpc(grid, score, model, cfg.mpc, sampleRng);
        } else {  // VpFormerPolicy: model steps first, then stage-1 sampling
            if (t < cfg.vpformerSteps) {
                TokenSequence seq = history;
                TokenStep cur;
                cur.cov = c;
                cur.gridFeat = featurizeGrid(grid);
                cur.prevVp = boxVpFeat(vpBox, current);
                seq.steps.push_back(std::move(cur));
                while (int(seq.steps.size()) > models.vpformer->cfg.lmax)
                    seq.steps.erase(seq.steps.begin());
                Viewpoint vhat =
                    models.vpformer->forwardNextViewpoint(seq, spec.dims, vpBox);
                if (cfg.refinementOn) {
                    try {
                        candidates = refineViewpoint(vhat, cfg.refineSigma, score, grid,
                                                     model, cfg.batch - 1, sampleRng);
                    } catch (const std::runtime_error&) {
                        candidates.clear();
                    }
                } else if (isFree(vhat, model)) {
                    candidates.push_back({vhat, score.predict(grid, vhat)});
                }
            }
            if (candidates.empty()) {
                candidates = baselinePolicy(BaselineKind::RandomGuided, grid, score,
                                            model, cfg.batch, sampleRng);
            }
        }

        // walk the sorted list until a path exists
        std::optional<Path> path;
        Viewpoint vbest;
        double vbestScore = std::numeric_limits<double>::quiet_NaN();
        int tried = 0;
        PlanParams pp = cfg.plan;
        pp.seed = master.fork(stepSalt * 4 + 1).nextU64();
        for (const ScoredViewpoint& cand : candidates) {
            ++tried;
            path = planPath(current, cand.viewpoint, model, pp);
            if (path) {
                vbest = cand.viewpoint;
                vbestScore = cand.score;
                break;
            }
        }
        auto t1 = std::chrono::steady_clock::now();
        double seconds = std::chrono::duration<double>(t1 - t0).count();
        if (!path) {
            log.status = EpisodeStatus::PlanningFailure;
            log.finalCoverage = c;
            return log;
        }

        Viewpoint vreal =
            executeWithNoise(*path, cfg.noiseCfg, master.fork(stepSalt * 4 + 2).nextU64());
        double posErr = (vreal.position - vbest.position).norm();
        double angErr = quatAngle(vreal.orientation, vbest.orientation);
        if (posErr > cfg.epsPos || angErr > cfg.epsAngDeg * M_PI / 180.0) {
            ++log.discardedSteps;  // validation failed: discard, stay at t
            continue;
        }

        Observation obs = renderDepthCached(*ctx, vreal, cfg.intr);
        obs = addSensorNoise(obs, cfg.sensorNoise, master.fork(stepSalt * 4 + 3).nextU64());

        StepRecord rec;
        rec.t = t;
        rec.chosen = vbest;
        rec.reached = vreal;
        rec.predictedScore = vbestScore;
        rec.planningSeconds = seconds;
        rec.candidatesTried = tried;
        rec.discardedBefore = log.discardedSteps;
        rec.path = *path;
        auto [csd, wsd] = pathDistances(rec.path);
        rec.cspace = csd;
        rec.workspace = wsd;
        rec.collisionBoxes = model.objectBoxes;
        log.beliefBefore.push_back(grid);

        RegistrationConfig reg = cfg.reg;
        reg.completionOn = cfg.completionOn;
        reg.seed = master.fork(stepSalt * 4 + 4).nextU64();
        auto [g2, s2] = integrateObservation(grid, obs, store, reg);
        grid = std::move(g2);
        store = std::move(s2);
        double cNew = coverage(grid);
        if (cNew + 1e-12 < c)
            throw std::logic_error("runEpisode: coverage decreased");
        // token history for the sequence policy / expert collection
        TokenStep tok;
        tok.cov = c;
        tok.gridFeat = featurizeGrid(log.beliefBefore.back());
        tok.prevVp = boxVpFeat(vpBox, current);
        tok.targetVp = boxVpFeat(vpBox, vreal);
        history.steps.push_back(std::move(tok));
        while (int(history.steps.size()) >= 8) history.steps.erase(history.steps.begin());

        c = cNew;
        rec.coverageAfter = c;
        log.steps.push_back(std::move(rec));
        log.beliefAfter.push_back(grid);
        log.observations.push_back(std::move(obs));
        current = vreal;
        ++t;
    }
    log.status = c > cfg.cMax ? EpisodeStatus::Success : EpisodeStatus::StepLimit;
    log.finalCoverage = c;
    return log;
}

// --- expert data collection --------------------------------------------------

// Run seeded MPC episodes and record their token sequences for behavior
// cloning. Episodes that fail to plan are skipped.
inline ExpertDataset collectExpertData(int nScenes, std::uint64_t seed,
                                       const EpisodeConfig& base = {},
                                       const DomainRandomizationConfig& scenes = {},
                                       const EpisodeModels& models = {}) {
    if (nScenes < 1) throw std::invalid_argument("collectExpertData: nScenes must be >= 1");
    ExpertDataset data;
    Rng master(seed);
    for (int s = 0; s < nScenes; ++s) {
        SceneSpec spec = generateScene(scenes, master.nextU64());
        EpisodeConfig cfg = base;
        cfg.policy = Policy::BilevelMpc;
        cfg.seed = seed ^ (std::uint64_t(s) * 0x9e37ULL + 1);
        EpisodeLog log = runEpisode(spec, cfg, models);
        if (log.steps.empty()) continue;
        SceneGeometry geom = SceneGeometry::fromScene(spec);
        Aabb vpBox = poseBox(geom);
        Viewpoint prev = restPose(geom);
        TokenSequence seq;
        double cov = 0.0;
        for (const StepRecord& rec : log.steps) {
            if (int(seq.steps.size()) >= 8) break;
            TokenStep tok;
            tok.cov = cov;
            tok.gridFeat = featurizeGrid(log.beliefBefore[seq.steps.size()]);
            tok.prevVp = boxVpFeat(vpBox, prev);
            tok.targetVp = boxVpFeat(vpBox, rec.reached);
            seq.steps.push_back(std::move(tok));
            prev = rec.reached;
            cov = rec.coverageAfter;
        }
        if (!seq.steps.empty()) data.trajectories.push_back(std::move(seq));
    }
    return data;
}

// --- config / log JSON --------------------------------------------------------

inline nlohmann::json episodeConfigToJson(const EpisodeConfig& c) {
    return {{"policy", policyName(c.policy)},
            {"score_model", scoreKindName(c.scoreModelKind)},
            {"c_max", c.cMax},
            {"t_max", c.tMax},
            {"completion_on", c.completionOn},
            {"refinement_on", c.refinementOn},
            {"noise_pos_sigma", c.noiseCfg.posSigma},
            {"noise_ang_sigma", c.noiseCfg.angSigma},
            {"depth_sigma", c.sensorNoise.depthSigma},
            {"edge_drop_prob", c.sensorNoise.edgeDropProb},
            {"seed", c.seed},
            {"batch", c.batch},
            {"eps_pos", c.epsPos},
            {"eps_ang_deg", c.epsAngDeg},
            {"width", c.intr.width},
            {"height", c.intr.height},
            {"eta", c.reg.eta},
            {"vpformer_steps", c.vpformerSteps}};
}

// Apply only the keys present; CLI flags may then override on top.
inline void episodeConfigFromJson(const nlohmann::json& j, EpisodeConfig& c) {
    if (j.contains("policy")) c.policy = policyFromName(j.at("policy"));
    if (j.contains("score_model")) c.scoreModelKind = scoreKindFromName(j.at("score_model"));
    if (j.contains("c_max")) c.cMax = j.at("c_max");
    if (j.contains("t_max")) c.tMax = j.at("t_max");
    if (j.contains("completion_on")) c.completionOn = j.at("completion_on");
    if (j.contains("refinement_on")) c.refinementOn = j.at("refinement_on");
    if (j.contains("noise_pos_sigma")) c.noiseCfg.posSigma = j.at("noise_pos_sigma");
    if (j.contains("noise_ang_sigma")) c.noiseCfg.angSigma = j.at("noise_ang_sigma");
    if (j.contains("depth_sigma")) c.sensorNoise.depthSigma = j.at("depth_sigma");
    if (j.contains("edge_drop_prob")) c.sensorNoise.edgeDropProb = j.at("edge_drop_prob");
    if (j.contains("seed")) c.seed = j.at("seed");
    if (j.contains("batch")) c.batch = j.at("batch");
    if (j.contains("eps_pos")) c.epsPos = j.at("eps_pos");
    if (j.contains("eps_ang_deg")) c.epsAngDeg = j.at("eps_ang_deg");
    if (j.contains("width")) c.intr.width = j.at("width");
    if (j.contains("height")) c.intr.height = j.at("height");
    if (j.contains("eta")) c.reg.eta = j.at("eta");
    if (j.contains("vpformer_steps")) c.vpformerSteps = j.at("vpformer_steps");
}

inline nlohmann::json aabbToJson(const Aabb& b) {
    return {{"lo", {b.lo.x, b.lo.y, b.lo.z}}, {"hi", {b.hi.x, b.hi.y, b.hi.z}}};
}

inline Aabb aabbFromJson(const nlohmann::json& j) {
    return {{j.at("lo")[0], j.at("lo")[1], j.at("lo")[2]},
            {j.at("hi")[0], j.at("hi")[1], j.at("hi")[2]}};
}

// Deterministic episode record: no wall-clock fields. gridPrefix names the
// per-step belief snapshot files written by the artifact exporter.
inline nlohmann::json episodeToJson(const EpisodeLog& log, const std::string& scene,
                                    const std::string& gridPrefix) {
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t s = 0; s < log.steps.size(); ++s) {
        const StepRecord& r = log.steps[s];
        nlohmann::json boxes = nlohmann::json::array();
        for (const Aabb& b : r.collisionBoxes) boxes.push_back(aabbToJson(b));
        steps.push_back({{"t", r.t},
                         {"chosen", r.chosen.asArray()},
                         {"reached", r.reached.asArray()},
                         {"predicted_score", std::isnan(r.predictedScore)
                                                 ? nlohmann::json(nullptr)
                                                 : nlohmann::json(r.predictedScore)},
                         {"coverage", r.coverageAfter},
                         {"cspace", r.cspace},
                         {"workspace", r.workspace},
                         {"candidates_tried", r.candidatesTried},
                         {"discarded_before", r.discardedBefore},
                         {"path", pathToJson(r.path)},
                         {"collision_boxes", boxes},
                         {"grid_before",
                          gridPrefix + "_step" + std::to_string(s) + "_pre.grid"}});
    }
    return {{"scene", scene},
            {"scene_seed", log.sceneSeed},
            {"policy", policyName(log.policy)},
            {"status", statusName(log.status)},
            {"final_coverage", log.finalCoverage},
            {"discarded_steps", log.discardedSteps},
            {"steps", steps}};
}

}  // namespace nbvsim

#endif
