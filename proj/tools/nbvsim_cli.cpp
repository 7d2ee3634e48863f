// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: scene generation, corpus generation, training,
// episode execution, benchmarking, path audit, and rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nbvsim/nbvsim.hpp"

namespace {

using namespace nbvsim;

// Episode options shared by run / benchmark / collect-expert. CLI flags
// override values from the optional JSON config file.
struct EpisodeCliOpts {
    std::string configFile;
    std::string policy, scoreModel;
    double cMax = -1.0, epsPos = -1.0, epsAngDeg = -1.0, eta = -1.0;
    int tMax = -1, batch = -1, width = -1, height = -1, vpformerSteps = -1;
    double noisePos = -1.0, noiseAng = -1.0, depthSigma = -1.0;
    long long seed = -1;
    bool noCompletion = false, noRefinement = false, mpcFull = false;
    std::string scoreNetFile, vpformerFile;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", configFile, "JSON config file (flags override)");
        cmd->add_option("--policy", policy, "random|random_guided|bilevel_mpc|vpformer");
        cmd->add_option("--score-model", scoreModel, "rollout|heuristic|surrogate");
        cmd->add_option("--c-max", cMax, "coverage threshold");
        cmd->add_option("--t-max", tMax, "step cap");
        cmd->add_flag("--no-completion", noCompletion, "disable shape completion");
        cmd->add_flag("--no-refinement", noRefinement, "disable viewpoint refinement");
        cmd->add_option("--noise-pos", noisePos, "execution position noise sigma (m)");
        cmd->add_option("--noise-ang", noiseAng, "execution angle noise sigma (rad)");
        cmd->add_option("--depth-sigma", depthSigma, "sensor depth noise sigma (m)");
        cmd->add_option("--seed", seed, "episode seed");
        cmd->add_option("--batch", batch, "candidate batch size B");
        cmd->add_option("--eps-pos", epsPos, "pose validation threshold (m)");
        cmd->add_option("--eps-ang", epsAngDeg, "pose validation threshold (deg)");
        cmd->add_option("--width", width, "sensor width (px)");
        cmd->add_option("--height", height, "sensor height (px)");
        cmd->add_option("--eta", eta, "instance merge threshold (m)");
        cmd->add_option("--vpformer-steps", vpformerSteps, "model-driven steps");
        cmd->add_flag("--mpc-full", mpcFull, "full-size MPC batches");
        cmd->add_option("--score-net", scoreNetFile, "surrogate weights (.nbvp)");
        cmd->add_option("--vpformer", vpformerFile, "sequence model weights (.nbvp)");
    }

    EpisodeConfig build() const {
        EpisodeConfig c;
        if (!configFile.empty()) {
            std::ifstream f(configFile);
            if (!f) throw std::runtime_error("cannot open " + configFile);
            nlohmann::json j;
            f >> j;
            episodeConfigFromJson(j, c);
        }
        if (!policy.empty()) c.policy = policyFromName(policy);
        if (!scoreModel.empty()) c.scoreModelKind = scoreKindFromName(scoreModel);
        if (cMax >= 0.0) c.cMax = cMax;
        if (tMax >= 0) c.tMax = tMax;
        if (noCompletion) c.completionOn = false;
        if (noRefinement) c.refinementOn = false;
        if (noisePos >= 0.0) c.noiseCfg.posSigma = noisePos;
        if (noiseAng >= 0.0) c.noiseCfg.angSigma = noiseAng;
        if (depthSigma >= 0.0) c.sensorNoise.depthSigma = depthSigma;
        if (seed >= 0) c.seed = std::uint64_t(seed);
        if (batch >= 1) c.batch = batch;
        if (epsPos >= 0.0) c.epsPos = epsPos;
        if (epsAngDeg >= 0.0) c.epsAngDeg = epsAngDeg;
        if (width >= 1) c.intr.width = width;
        if (height >= 1) c.intr.height = height;
        if (eta >= 0.0) c.reg.eta = eta;
        if (vpformerSteps >= 0) c.vpformerSteps = vpformerSteps;
        if (mpcFull) c.mpc = MpcParams{};
        c.validate();
        return c;
    }

    EpisodeModels loadModels() const {
        EpisodeModels m;
        if (!scoreNetFile.empty())
            m.surrogate = SurrogateNet::fromTensors(loadTensors(scoreNetFile));
        if (!vpformerFile.empty())
            m.vpformer =
                std::make_shared<const VpFormer>(VpFormer::fromTensors(loadTensors(vpformerFile)));
        return m;
    }
};

int cmdSceneGen(const std::string& out, int count, std::uint64_t seed) {
    DomainRandomizationConfig drc;
    Rng master(seed);
    if (count == 1) {
        saveScene(generateScene(drc, master.nextU64()), out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    std::filesystem::create_directories(out);
    for (int s = 0; s < count; ++s) {
        std::string path = out + "/scene" + std::to_string(s) + ".json";
        saveScene(generateScene(drc, master.nextU64()), path);
    }
    std::cout << "wrote " << count << " scenes to " << out << "\n";
    return 0;
}

int cmdGenData(int scenes, int seqPerScene, std::uint64_t seed, const std::string& out) {
    std::filesystem::create_directories(out);
    TrainingCorpus corpus = generateTrainingData(scenes, seqPerScene, seed);
    savePairsJsonl(corpus.train, out + "/train.jsonl");
    savePairsJsonl(corpus.eval, out + "/eval.jsonl");
    std::cout << "train pairs: " << corpus.train.size()
              << "  eval pairs: " << corpus.eval.size() << "\n";
    return 0;
}

int cmdTrainScore(const std::string& trainFile, const std::string& evalFile,
                  const SurrogateHyper& hyper, const std::string& out) {
    std::vector<TrainingPair> train = loadPairsJsonl(trainFile);
    std::vector<TrainingPair> eval = loadPairsJsonl(evalFile);
    TrainResult res = trainSurrogate(train, eval, hyper);
    saveTensors(res.net.toTensors(), out);
    std::cout << "initial eval loss: " << res.initialEvalLoss << "\n"
              << "best eval loss:    " << res.bestEvalLoss << "\n"
              << "wrote " << out << "\n";
    return 0;
}

int cmdCollectExpert(int scenes, std::uint64_t seed, const EpisodeCliOpts& opts,
                     const std::string& out) {
    EpisodeConfig cfg = opts.build();
    ExpertDataset data = collectExpertData(scenes, seed, cfg, {}, opts.loadModels());
    saveExpertJsonl(data, out);
    std::cout << "trajectories: " << data.trajectories.size() << "  wrote " << out << "\n";
    return 0;
}

int cmdTrainVpformer(const std::string& dataFile, const BcHyper& hyper,
                     const std::string& out) {
    ExpertDataset data = loadExpertJsonl(dataFile);
    BcResult res = trainBc(data, hyper);
    saveTensors(res.model.toTensors(), out);
    std::cout << "initial held-out loss: " << res.initialHeldoutLoss << "\n"
              << "best held-out loss:    " << res.bestHeldoutLoss << "\n"
              << "wrote " << out << "\n";
    return 0;
}

int cmdRun(const std::string& sceneFile, std::uint64_t sceneSeed,
           const EpisodeCliOpts& opts, const std::string& out) {
    BenchmarkConfig bc;
    bc.episode = opts.build();
    bc.policies = {bc.episode.policy};
    bc.seed = bc.episode.seed;
    if (!sceneFile.empty())
        bc.explicitScenes.push_back(loadScene(sceneFile));
    else
        bc.explicitScenes.push_back(generateScene({}, sceneSeed));
    ArtifactWriter writer(out);
    MetricsTable table = runBenchmark(bc, opts.loadModels(), &writer);
    writer.finish(table);
    const EpisodeMetric& m = table.rows.front();
    std::cout << "status: " << statusName(m.status) << "  viewpoints: " << m.viewpoints
              << "  coverage: " << m.finalCoverage << "\n";
    return m.status == EpisodeStatus::PlanningFailure ? 2 : 0;
}

int cmdBenchmark(int scenes, std::uint64_t seed, const std::string& policiesCsv,
                 const EpisodeCliOpts& opts, const std::string& out) {
    BenchmarkConfig bc;
    bc.nScenes = scenes;
    bc.seed = seed;
    bc.episode = opts.build();
    if (!policiesCsv.empty()) {
        bc.policies.clear();
        std::string tok;
        for (std::istringstream ss(policiesCsv); std::getline(ss, tok, ',');)
            bc.policies.push_back(policyFromName(tok));
    }
    ArtifactWriter writer(out);
    MetricsTable table = runBenchmark(bc, opts.loadModels(), &writer);
    writer.finish(table);
    for (const PolicySummary& s : table.summaries)
        std::printf("%-14s views %5.2f +/- %4.2f  success %5.1f%%  cspace %5.2f\n",
                    policyName(s.policy), s.meanViews, s.stdViews, 100.0 * s.successRate,
                    s.meanCspace);
    return 0;
}

int cmdValidatePaths(const std::string& dir) {
    PathAuditResult res = auditEpisodesFile(dir);
    std::cout << "paths: " << res.paths << "  valid: " << res.valid << "\n";
    for (const std::string& f : res.failures) std::cout << "FAIL " << f << "\n";
    return res.valid == res.paths ? 0 : 2;
}

int cmdRender(const std::string& gridFile, const std::string& sceneFile,
              const std::string& outPrefix) {
    BeliefGrid grid = !gridFile.empty() ? loadGrid(gridFile)
                                        : groundTruthGrid(loadScene(sceneFile));
    for (int axis = 0; axis < 3; ++axis)
        ArtifactWriter::saveOrthoPpm(grid, axis,
                                     outPrefix + "_ortho" + std::to_string(axis) + ".ppm");
    std::cout << "wrote " << outPrefix << "_ortho{0,1,2}.ppm\n";
    return 0;
}

bool looksLikeIoError(const std::string& msg) {
    return msg.find("cannot open") != std::string::npos ||
           msg.find("write failed") != std::string::npos ||
           msg.find("truncated") != std::string::npos ||
           msg.find("bad magic") != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale active next-best-view planning simulator"};
    app.require_subcommand(1);

    // scene-gen
    auto* sg = app.add_subcommand("scene-gen", "generate randomized scene specs");
    std::string sgOut = "scene.json";
    int sgCount = 1;
    long long sgSeed = 1;
    sg->add_option("--out", sgOut, "output file (or directory when --count > 1)");
    sg->add_option("--count", sgCount, "number of scenes");
    sg->add_option("--seed", sgSeed, "generator seed");

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "generate score-model training corpus");
    int gdScenes = 10, gdSeq = 4;
    long long gdSeed = 2;
    std::string gdOut = "corpus";
    gd->add_option("--scenes", gdScenes, "scene count");
    gd->add_option("--seq-per-scene", gdSeq, "rollout sequences per scene");
    gd->add_option("--seed", gdSeed, "corpus seed");
    gd->add_option("--out", gdOut, "output directory");

    // train-score
    auto* ts = app.add_subcommand("train-score", "train the score surrogate");
    std::string tsTrain = "corpus/train.jsonl", tsEval = "corpus/eval.jsonl",
                tsOut = "score.nbvp";
    SurrogateHyper tsHyper;
    long long tsSeed = 7;
    ts->add_option("--train", tsTrain, "training pairs JSONL");
    ts->add_option("--eval", tsEval, "evaluation pairs JSONL");
    ts->add_option("--epochs", tsHyper.epochs, "epochs");
    ts->add_option("--lr", tsHyper.lr, "learning rate");
    ts->add_option("--batch", tsHyper.batch, "minibatch size");
    ts->add_option("--seed", tsSeed, "training seed");
    ts->add_option("--out", tsOut, "weights output path");

    // collect-expert
    auto* ce = app.add_subcommand("collect-expert", "record MPC expert trajectories");
    int ceScenes = 20;
    long long ceSeed = 3;
    std::string ceOut = "expert.jsonl";
    EpisodeCliOpts ceOpts;
    ce->add_option("--scenes", ceScenes, "scene count");
    ce->add_option("--expert-seed", ceSeed, "collection seed");
    ce->add_option("--out", ceOut, "output JSONL");
    ceOpts.attach(ce);

    // train-vpformer
    auto* tv = app.add_subcommand("train-vpformer", "behavior-clone the sequence planner");
    std::string tvData = "expert.jsonl", tvOut = "vpformer.nbvp";
    BcHyper tvHyper;
    long long tvSeed = 11;
    tv->add_option("--data", tvData, "expert trajectories JSONL");
    tv->add_option("--epochs", tvHyper.epochs, "epochs");
    tv->add_option("--lr", tvHyper.lr, "learning rate");
    tv->add_option("--batch", tvHyper.batch, "sequences per step");
    tv->add_option("--seed", tvSeed, "training seed");
    tv->add_option("--out", tvOut, "weights output path");

    // run
    auto* rn = app.add_subcommand("run", "run one episode and export artifacts");
    std::string rnScene, rnOut = "run_out";
    long long rnSceneSeed = 42;
    EpisodeCliOpts rnOpts;
    rn->add_option("--scene", rnScene, "scene spec JSON (else generated from seed)");
    rn->add_option("--scene-seed", rnSceneSeed, "scene generation seed");
    rn->add_option("--out", rnOut, "output directory");
    rnOpts.attach(rn);

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "run the multi-policy benchmark");
    int bmScenes = 30;
    long long bmSeed = 1000;
    std::string bmPolicies, bmOut = "bench_out";
    EpisodeCliOpts bmOpts;
    bm->add_option("--scenes", bmScenes, "scene count");
    bm->add_option("--bench-seed", bmSeed, "benchmark seed (scene generation)");
    bm->add_option("--policies", bmPolicies, "comma-separated policy list");
    bm->add_option("--out", bmOut, "output directory");
    bmOpts.attach(bm);

    // validate-paths
    auto* vp = app.add_subcommand("validate-paths", "audit exported episode paths");
    std::string vpDir = "run_out";
    vp->add_option("--dir", vpDir, "exported run directory");

    // render
    auto* rd = app.add_subcommand("render", "orthographic belief / scene renders");
    std::string rdGrid, rdScene, rdOut = "render";
    rd->add_option("--grid", rdGrid, "belief grid file");
    rd->add_option("--scene", rdScene, "scene spec JSON (ground truth)");
    rd->add_option("--out", rdOut, "output path prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sg->parsed()) return cmdSceneGen(sgOut, sgCount, std::uint64_t(sgSeed));
        if (gd->parsed())
            return cmdGenData(gdScenes, gdSeq, std::uint64_t(gdSeed), gdOut);
        if (ts->parsed()) {
            tsHyper.seed = std::uint64_t(tsSeed);
            return cmdTrainScore(tsTrain, tsEval, tsHyper, tsOut);
        }
        if (ce->parsed())
            return cmdCollectExpert(ceScenes, std::uint64_t(ceSeed), ceOpts, ceOut);
        if (tv->parsed()) {
            tvHyper.seed = std::uint64_t(tvSeed);
            return cmdTrainVpformer(tvData, tvHyper, tvOut);
        }
        if (rn->parsed())
            return cmdRun(rnScene, std::uint64_t(rnSceneSeed), rnOpts, rnOut);
        if (bm->parsed())
            return cmdBenchmark(bmScenes, std::uint64_t(bmSeed), bmPolicies, bmOpts, bmOut);
        if (vp->parsed()) return cmdValidatePaths(vpDir);
        if (rd->parsed()) {
            if (rdGrid.empty() && rdScene.empty())
                throw std::invalid_argument("render needs --grid or --scene");
            return cmdRender(rdGrid, rdScene, rdOut);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return looksLikeIoError(e.what()) ? 3 : 2;
    }
    return 1;
}
