// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "test_util.hpp"

using namespace nbvsim;

namespace {

// Reduced model for fast unit tests; same structure as the default config.
VpFormerConfig tinyConfig() {
    VpFormerConfig c;
    c.dz = 32;
    c.heads = 4;
    c.layers = 2;
    c.dFfn = 64;
    c.lmax = 8;
    c.dc = 8;
    c.ds = 16;
    c.dv = 8;
    return c;
}

TokenStep randomStep(Rng& rng) {
    TokenStep s;
    s.cov = rng.uniform();
    s.gridFeat.resize(std::size_t(kGridFeatDim));
    for (double& x : s.gridFeat) x = rng.uniform();
    for (int i = 0; i < kVpFeatDim; ++i) {
        s.prevVp[i] = rng.uniform(-1, 1);
        s.targetVp[i] = rng.uniform(-1, 1);
    }
    // keep the quaternion part of the target a unit quaternion
    double n = 0.0;
    for (int i = 3; i < 7; ++i) n += s.targetVp[i] * s.targetVp[i];
    n = std::sqrt(std::max(n, 1e-9));
    for (int i = 3; i < 7; ++i) s.targetVp[i] /= n;
    return s;
}

TokenSequence randomSequence(Rng& rng, int T) {
    TokenSequence seq;
    for (int t = 0; t < T; ++t) seq.steps.push_back(randomStep(rng));
    return seq;
}

}  // namespace

TEST_CASE("masked attention basics") {
    SECTION("length one returns the value row unchanged") {
        std::vector<std::vector<double>> Q = {{1.0, -2.0}}, K = {{0.3, 0.4}},
                                         V = {{5.0, 6.0}};
        std::vector<std::vector<double>> out = maskedAttention(Q, K, V, causalMask(1));
        REQUIRE(out[0][0] == Catch::Approx(5.0));
        REQUIRE(out[0][1] == Catch::Approx(6.0));
    }
    SECTION("rows are convex combinations computed via explicit softmax") {
        Rng rng(13);
        std::size_t T = 5, dk = 4;
        std::vector<std::vector<double>> Q(T, std::vector<double>(dk)), K = Q, V = Q;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < dk; ++d) {
                Q[t][d] = rng.uniform(-1, 1);
                K[t][d] = rng.uniform(-1, 1);
                V[t][d] = rng.uniform(-1, 1);
            }
        std::vector<std::vector<double>> M = causalMask(T);
        std::vector<std::vector<double>> out = maskedAttention(Q, K, V, M);
        double scale = 1.0 / std::sqrt(double(dk));
        for (std::size_t i = 0; i < T; ++i) {
            // independent recompute with plain exp
            std::vector<double> w(T, 0.0);
            double denom = 0.0, wsum = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                double dot = 0.0;
                for (std::size_t d = 0; d < dk; ++d) dot += Q[i][d] * K[j][d];
                w[j] = std::exp(dot * scale);
                denom += w[j];
            }
            std::vector<double> expect(dk, 0.0);
            for (std::size_t j = 0; j <= i; ++j) {
                wsum += w[j] / denom;
                for (std::size_t d = 0; d < dk; ++d)
                    expect[d] += (w[j] / denom) * V[j][d];
            }
            REQUIRE(wsum == Catch::Approx(1.0).margin(1e-9));  // row sums to one
            for (std::size_t d = 0; d < dk; ++d)
                REQUIRE(out[i][d] == Catch::Approx(expect[d]).margin(1e-12));
        }
    }
    SECTION("masked-out entries never contribute") {
        std::vector<std::vector<double>> Q = {{1.0}, {1.0}}, K = Q;
        std::vector<std::vector<double>> V = {{2.0}, {1e9}};  // huge masked value
        std::vector<std::vector<double>> out = maskedAttention(Q, K, V, causalMask(2));
        REQUIRE(out[0][0] == Catch::Approx(2.0));  // row 0 cannot see token 1
    }
    SECTION("shape mismatch throws") {
        std::vector<std::vector<double>> Q = {{1.0}}, K = {{1.0}, {2.0}}, V = K;
        REQUIRE_THROWS(maskedAttention(Q, K, V, causalMask(2)));
    }
}

TEST_CASE("full model causality is bitwise") {
    VpFormer m = VpFormer::initialized(3, tinyConfig());
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        TokenSequence seq = randomSequence(rng, 6);
        std::vector<std::array<double, 7>> base = m.forwardAll(seq);

        std::size_t j = 1 + std::size_t(rng.uniformInt(0, 4));
        TokenSequence perturbed = seq;
        perturbed.steps[j].cov += 0.123;
        perturbed.steps[j].gridFeat[5] = 0.987;
        perturbed.steps[j].prevVp[2] += 0.5;
        std::vector<std::array<double, 7>> after = m.forwardAll(perturbed);
        for (std::size_t t = 0; t < j; ++t)
            for (int d = 0; d < 7; ++d) REQUIRE(after[t][d] == base[t][d]);
        // the perturbed position itself must change
        bool changed = false;
        for (int d = 0; d < 7; ++d) changed |= after[j][d] != base[j][d];
        REQUIRE(changed);

        // appending a token leaves all earlier predictions bitwise intact
        TokenSequence longer = seq;
        longer.steps.push_back(randomStep(rng));
        std::vector<std::array<double, 7>> ext = m.forwardAll(longer);
        for (std::size_t t = 0; t < seq.steps.size(); ++t)
            for (int d = 0; d < 7; ++d) REQUIRE(ext[t][d] == base[t][d]);
    }
}

TEST_CASE("model output structure") {
    VpFormer m = VpFormer::initialized(5, tinyConfig());
    Rng rng(8);
    TokenSequence seq = randomSequence(rng, 4);
    std::vector<std::array<double, 7>> out = m.forwardAll(seq);
    REQUIRE(out.size() == seq.steps.size());
    for (const std::array<double, 7>& o : out) {
        for (int d = 0; d < 3; ++d) {
            REQUIRE(o[d] > -1.0);
            REQUIRE(o[d] < 1.0);  // tanh squash
        }
        double n = 0.0;
        for (int d = 3; d < 7; ++d) n += o[d] * o[d];
        REQUIRE(std::sqrt(n) == Catch::Approx(1.0).margin(1e-12));  // unit quaternion
    }
    // determinism
    std::vector<std::array<double, 7>> again = m.forwardAll(seq);
    for (std::size_t t = 0; t < out.size(); ++t)
        for (int d = 0; d < 7; ++d) REQUIRE(again[t][d] == out[t][d]);

    // world-space prediction lands inside the requested box
    Aabb box{{-1.0, -0.5, 0.0}, {0.5, 0.5, 1.0}};
    GridDims dims{8, 8, 8, 0.05, {}};
    Viewpoint v = m.forwardNextViewpoint(seq, dims, box);
    REQUIRE(box.contains(v.position));
    REQUIRE(v.orientation.norm() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("analytic gradient matches finite differences per parameter block") {
    VpFormer m = VpFormer::initialized(7, tinyConfig());
    Rng rng(19);
    TokenSequence seq = randomSequence(rng, 3);
    std::vector<double> grad(m.paramCount(), 0.0);
    m.sequenceLossGrad(seq, &grad);
    auto lossAt = [&]() { return m.sequenceLossGrad(seq, nullptr); };

    for (const auto& [name, range] : m.paramRanges()) {
        auto [off, count, fanIn] = range;
        (void)fanIn;
        int probes = std::min<std::size_t>(10, count);
        int checked = 0;
        for (int p = 0; p < probes; ++p) {
            std::size_t idx = off + (count * std::size_t(p)) / std::size_t(probes);
            double fd = nbvtest::centralDiff(m.theta, idx, 1e-6, lossAt);
            if (std::abs(fd) < 1e-10 && std::abs(grad[idx]) < 1e-10) continue;
            INFO(name << "[" << idx - off << "]");
            REQUIRE(nbvtest::relErr(fd, grad[idx]) < 1e-3);
            ++checked;
        }
        if (name.find("time_emb") == std::string::npos) CHECK(checked > 0);
    }
}

TEST_CASE("behavior cloning fits a constant expert") {
    Rng rng(23);
    ExpertDataset data;
    std::array<double, 7> target = {0.3, -0.2, 0.1, 1.0, 0.0, 0.0, 0.0};
    for (int s = 0; s < 10; ++s) {
        TokenSequence seq = randomSequence(rng, 4);
        for (TokenStep& st : seq.steps) st.targetVp = target;
        data.trajectories.push_back(std::move(seq));
    }
    BcHyper hyper;
    hyper.epochs = 120;
    hyper.lr = 3e-3;
    hyper.batch = 4;
    BcResult res = trainBc(data, hyper, tinyConfig());
    REQUIRE(res.bestHeldoutLoss < 0.05);
    REQUIRE(res.bestHeldoutLoss < 0.7 * res.initialHeldoutLoss);
    REQUIRE(res.trainLoss.back() < res.trainLoss.front());
    // the returned model reproduces the best held-out loss
    std::vector<TokenSequence> heldout(data.trajectories.begin() + 8,
                                       data.trajectories.end());
    REQUIRE(bcEvalLoss(res.model, heldout) == Catch::Approx(res.bestHeldoutLoss));
}

TEST_CASE("refinement around a predicted viewpoint") {
    SceneSpec spec = nbvtest::makeTinyScene(8, 0.05, {});
    BeliefGrid grid(spec.dims);
    SceneGeometry geom = SceneGeometry::fromScene(spec);
    CollisionModel model = buildCollisionModel(grid, std::vector<Aabb>{}, geom);
    CameraIntrinsics intr = CameraIntrinsics{}.downsampled(16, 9);
    ScoreModel score = ScoreModel::heuristic(intr);
    Viewpoint vhat;
    vhat.position = model.stagingRegion.center();
    vhat.orientation = Quat::fromYaw(0.2);

    SECTION("tiny sigma keeps every candidate at the prediction") {
        std::array<double, 7> sigma;
        sigma.fill(1e-9);
        Rng rng(4);
        std::vector<ScoredViewpoint> out =
            refineViewpoint(vhat, sigma, score, grid, model, 10, rng);
        REQUIRE(out.size() >= 2);
        for (const ScoredViewpoint& sv : out)
            REQUIRE((sv.viewpoint.position - vhat.position).norm() < 1e-6);
    }
    SECTION("candidates come back sorted and never below the raw prediction") {
        std::array<double, 7> sigma;
        sigma.fill(0.05);
        Rng rng(5);
        std::vector<ScoredViewpoint> out =
            refineViewpoint(vhat, sigma, score, grid, model, 30, rng);
        for (std::size_t i = 1; i < out.size(); ++i)
            REQUIRE(out[i - 1].score >= out[i].score);
        REQUIRE(out.front().score >= score.predict(grid, vhat));
    }
}

TEST_CASE("vpformer serialization round trips") {
    VpFormer m = VpFormer::initialized(9, tinyConfig());
    SECTION("tensor round trip is bitwise") {
        VpFormer back = VpFormer::fromTensors(m.toTensors(), tinyConfig());
        REQUIRE(back.theta == m.theta);
    }
    SECTION("tensor file round trip through the binary format") {
        std::string path = "test_vpf.bin";
        saveTensors(m.toTensors(), path);
        VpFormer back = VpFormer::fromTensors(loadTensors(path), tinyConfig());
        REQUIRE(back.theta == m.theta);
        std::remove(path.c_str());
    }
    SECTION("expert dataset JSONL round trip") {
        Rng rng(31);
        ExpertDataset data;
        data.trajectories.push_back(randomSequence(rng, 3));
        data.trajectories.push_back(randomSequence(rng, 5));
        std::string path = "test_expert.jsonl";
        saveExpertJsonl(data, path);
        ExpertDataset back = loadExpertJsonl(path);
        REQUIRE(back.trajectories.size() == 2);
        for (std::size_t s = 0; s < 2; ++s) {
            REQUIRE(back.trajectories[s].steps.size() == data.trajectories[s].steps.size());
            for (std::size_t t = 0; t < back.trajectories[s].steps.size(); ++t) {
                const TokenStep& a = back.trajectories[s].steps[t];
                const TokenStep& b = data.trajectories[s].steps[t];
                REQUIRE(a.cov == b.cov);
                REQUIRE(a.gridFeat == b.gridFeat);
                REQUIRE(a.prevVp == b.prevVp);
                REQUIRE(a.targetVp == b.targetVp);
            }
        }
        std::remove(path.c_str());
    }
}
