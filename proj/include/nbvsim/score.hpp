// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_SCORE_HPP
#define NBVSIM_SCORE_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/motion.hpp"
#include "nbvsim/nn.hpp"
#include "nbvsim/registration.hpp"
#include "nbvsim/scene.hpp"
#include "nbvsim/serialize.hpp"

namespace nbvsim {

// --- coarse grid featurizer -------------------------------------------------
//
// Fixed 4x6x3 cell layout independent of grid dims; per cell the fraction of
// UNKNOWN / FREE / OCCUPIED voxels. Shared by the score surrogate and the
// sequence planner so both see comparable scene features.

constexpr int kFeatCx = 4, kFeatCy = 6, kFeatCz = 3;
constexpr int kGridFeatDim = kFeatCx * kFeatCy * kFeatCz * 3;
constexpr int kVpFeatDim = 7;

inline std::vector<double> featurizeGrid(const BeliefGrid& g) {
    const GridDims& d = g.dims();
    std::vector<double> counts(std::size_t(kGridFeatDim), 0.0);
    std::vector<double> totals(std::size_t(kFeatCx) * kFeatCy * kFeatCz, 0.0);
    for (int k = 0; k < d.nz; ++k) {
        int ck = std::min(kFeatCz - 1, k * kFeatCz / d.nz);
        for (int j = 0; j < d.ny; ++j) {
            int cj = std::min(kFeatCy - 1, j * kFeatCy / d.ny);
            for (int i = 0; i < d.nx; ++i) {
                int ci = std::min(kFeatCx - 1, i * kFeatCx / d.nx);
                std::size_t cell = (std::size_t(ck) * kFeatCy + cj) * kFeatCx + ci;
                int ch = int(g.state(i, j, k));
                counts[cell * 3 + ch] += 1.0;
                totals[cell] += 1.0;
            }
        }
    }
    for (std::size_t c = 0; c < totals.size(); ++c)
        if (totals[c] > 0)
            for (int ch = 0; ch < 3; ++ch) counts[c * 3 + ch] /= totals[c];
    return counts;
}

inline std::array<double, kVpFeatDim> featurizeViewpoint(const GridDims& d,
                                                         const Viewpoint& v) {
    Aabb box = d.worldBox();
    Vec3 c = box.center(), e = box.extent();
    return {(v.position.x - c.x) / e.x, (v.position.y - c.y) / e.y,
            (v.position.z - c.z) / e.z, v.orientation.w, v.orientation.x,
            v.orientation.y, v.orientation.z};
}

// --- rollout labeler --------------------------------------------------------

// Context for ground-truth scoring: the hidden scene plus its precomputed
// occupancy, built once per episode.
struct RolloutContext {
    SceneSpec spec;
    BeliefGrid gt;

    explicit RolloutContext(const SceneSpec& s) : spec(s), gt(groundTruthGrid(s)) {}
};

inline Observation renderDepthCached(const RolloutContext& ctx, const Viewpoint& vp,
                                     const CameraIntrinsics& intr) {
    return renderDepthWithGt(ctx.spec, ctx.gt, vp, intr);
}

// Ground-truth coverage label for taking viewpoint v from the current belief:
// render, carve, complete (object grouping comes from the oracle), measure.
inline double labelRollout(const RolloutContext& ctx, const BeliefGrid& grid,
                           const Viewpoint& v, const CameraIntrinsics& intr,
                           bool completionOn) {
    Observation obs = renderDepthCached(ctx, v, intr);
    BeliefGrid carved = carveVisibility(grid, obs, intr);
    if (!completionOn) return coverage(carved);

    const GridDims& d = carved.dims();
    std::size_t nObj = ctx.spec.objects.size();
    std::vector<std::array<int, 6>> bounds(nObj, {INT_MAX, INT_MAX, INT_MAX,
                                                  INT_MIN, INT_MIN, INT_MIN});
    for (int k = 0; k < d.nz; ++k)
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) {
                if (carved.state(i, j, k) != VoxelState::Occupied) continue;
                if (carved.occOrigin(i, j, k) != OccOrigin::Seen) continue;
                std::int32_t gtId = ctx.gt.state(i, j, k) == VoxelState::Occupied
                                        ? ctx.gt.instanceId(i, j, k)
                                        : kNoInstance;
                if (gtId < 0 || std::size_t(gtId) >= nObj) continue;
                auto& b = bounds[gtId];
                b[0] = std::min(b[0], i); b[1] = std::min(b[1], j); b[2] = std::min(b[2], k);
                b[3] = std::max(b[3], i); b[4] = std::max(b[4], j); b[5] = std::max(b[5], k);
            }
    for (const auto& b : bounds) {
        if (b[0] == INT_MAX) continue;
        for (int k = b[2]; k <= b[5]; ++k)
            for (int j = b[1]; j <= b[4]; ++j)
                for (int i = b[0]; i <= b[3]; ++i)
                    if (carved.state(i, j, k) == VoxelState::Unknown)
                        carved.setOccupied(i, j, k, OccOrigin::Predicted, kNoInstance);
    }
    return coverage(carved);
}

// --- learning-free heuristic ------------------------------------------------

// Frontier-style gain: cast the viewpoint's pixel rays through the belief,
// UNKNOWN transparent, OCCUPIED opaque; score = current coverage plus the
// fraction of distinct unknown voxels the rays would sweep.
inline double heuristicGain(const BeliefGrid& grid, const Viewpoint& v,
                            const CameraIntrinsics& intr) {
    const GridDims& d = grid.dims();
    Aabb box = d.worldBox();
    std::vector<std::uint8_t> visited(d.count(), 0);
    std::size_t unknownSwept = 0;
    const double res = d.resolution;
    double inf = std::numeric_limits<double>::infinity();

    for (int pv = 0; pv < intr.height; ++pv)
        for (int pu = 0; pu < intr.width; ++pu) {
            Vec3 dir = pixelRay(v, intr, pu, pv);
            double tEnter, tExit;
            int ea, xa;
            if (!detail::rayBox(v.position, dir, box, tEnter, tExit, ea, xa)) continue;
            double t = std::max(tEnter, 0.0);
            if (t > intr.maxRange) continue;
            Vec3 start = v.position + dir * (t + 1e-9);
            int i, j, k;
            if (!d.locate(start, i, j, k)) continue;
            int stepI = dir.x > 0 ? 1 : -1, stepJ = dir.y > 0 ? 1 : -1,
                stepK = dir.z > 0 ? 1 : -1;
            auto boundary = [&](int idx, int step, double originAx) {
                return originAx + (idx + (step > 0 ? 1 : 0)) * res;
            };
            double tMaxI = std::abs(dir.x) < 1e-15 ? inf
                : (boundary(i, stepI, d.origin.x) - v.position.x) / dir.x;
            double tMaxJ = std::abs(dir.y) < 1e-15 ? inf
                : (boundary(j, stepJ, d.origin.y) - v.position.y) / dir.y;
            double tMaxK = std::abs(dir.z) < 1e-15 ? inf
                : (boundary(k, stepK, d.origin.z) - v.position.z) / dir.z;
            double tdI = std::abs(dir.x) < 1e-15 ? inf : res / std::abs(dir.x);
            double tdJ = std::abs(dir.y) < 1e-15 ? inf : res / std::abs(dir.y);
            double tdK = std::abs(dir.z) < 1e-15 ? inf : res / std::abs(dir.z);
            double t0 = t;
            while (d.inBounds(i, j, k) && t0 <= intr.maxRange) {
                std::size_t idx = d.index(i, j, k);
                VoxelState s = grid.stateAt(idx);
                if (s == VoxelState::Occupied) break;
                if (s == VoxelState::Unknown && !visited[idx]) {
                    visited[idx] = 1;
                    ++unknownSwept;
                }
                if (tMaxI <= tMaxJ && tMaxI <= tMaxK) { t0 = tMaxI; tMaxI += tdI; i += stepI; }
                else if (tMaxJ <= tMaxK) { t0 = tMaxJ; tMaxJ += tdJ; j += stepJ; }
                else { t0 = tMaxK; tMaxK += tdK; k += stepK; }
            }
        }
    double score = coverage(grid) + double(unknownSwept) / double(d.count());
    return std::min(1.0, std::max(0.0, score));
}

// --- surrogate network ------------------------------------------------------
//
// Coarse grid features -> two hidden layers; viewpoint -> one hidden layer;
// concatenated -> scalar with sigmoid squashing. Flat parameter vector keeps
// the optimizer and finite-difference checks simple.

struct SurrogateNet {
    static constexpr std::size_t kGIn = kGridFeatDim, kH1 = 64, kH2 = 32;
    static constexpr std::size_t kVIn = kVpFeatDim, kVH = 32;
    static constexpr std::size_t kCat = kH2 + kVH;

    std::vector<double> theta;

    // offsets into theta
    static constexpr std::size_t oW1 = 0;
    static constexpr std::size_t oB1 = oW1 + kH1 * kGIn;
    static constexpr std::size_t oW2 = oB1 + kH1;
    static constexpr std::size_t oB2 = oW2 + kH2 * kH1;
    static constexpr std::size_t oWv = oB2 + kH2;
    static constexpr std::size_t oBv = oWv + kVH * kVIn;
    static constexpr std::size_t oW3 = oBv + kVH;
    static constexpr std::size_t oB3 = oW3 + kCat;
    static constexpr std::size_t kParamCount = oB3 + 1;

    static SurrogateNet initialized(std::uint64_t seed) {
        SurrogateNet n;
        n.theta.assign(kParamCount, 0.0);
        Rng rng(seed);
        initUniform(n.theta, oW1, kH1 * kGIn, kGIn, rng);
        initUniform(n.theta, oB1, kH1, kGIn, rng);
        initUniform(n.theta, oW2, kH2 * kH1, kH1, rng);
        initUniform(n.theta, oB2, kH2, kH1, rng);
        initUniform(n.theta, oWv, kVH * kVIn, kVIn, rng);
        initUniform(n.theta, oBv, kVH, kVIn, rng);
        initUniform(n.theta, oW3, kCat, kCat, rng);
        initUniform(n.theta, oB3, 1, kCat, rng);
        return n;
    }

    struct Cache {
        std::vector<double> gf, vf, a1, a2, av, cat;
        double z = 0.0, y = 0.0;
    };

    double forward(const std::vector<double>& gf, const std::array<double, kVpFeatDim>& vf,
                   Cache* cache = nullptr) const {
        const double* th = theta.data();
        std::vector<double> a1(kH1), a2(kH2), av(kVH);
        denseForward(th + oW1, th + oB1, gf.data(), a1.data(), kH1, kGIn);
        reluInplace(a1.data(), kH1);
        denseForward(th + oW2, th + oB2, a1.data(), a2.data(), kH2, kH1);
        reluInplace(a2.data(), kH2);
        denseForward(th + oWv, th + oBv, vf.data(), av.data(), kVH, kVIn);
        reluInplace(av.data(), kVH);
        std::vector<double> cat(kCat);
        std::copy(a2.begin(), a2.end(), cat.begin());
        std::copy(av.begin(), av.end(), cat.begin() + kH2);
        double z;
        denseForward(th + oW3, th + oB3, cat.data(), &z, 1, kCat);
        double y = sigmoid(z);
        if (cache) {
            cache->gf = gf;
            cache->vf.assign(vf.begin(), vf.end());
            cache->a1 = std::move(a1);
            cache->a2 = std::move(a2);
            cache->av = std::move(av);
            cache->cat = std::move(cat);
            cache->z = z;
            cache->y = y;
        }
        return y;
    }

    // Accumulates dL/dtheta into grad given dL/dy for one sample.
    void backward(const Cache& c, double dy, std::vector<double>& grad) const {
        const double* th = theta.data();
        double* g = grad.data();
        double dz = dy * c.y * (1.0 - c.y);
        std::vector<double> dcat(kCat);
        denseBackward(th + oW3, c.cat.data(), &dz, g + oW3, g + oB3, dcat.data(), 1, kCat);
        std::vector<double> da2(dcat.begin(), dcat.begin() + kH2);
        std::vector<double> dav(dcat.begin() + kH2, dcat.end());
        reluBackward(c.a2.data(), da2.data(), kH2);
        reluBackward(c.av.data(), dav.data(), kVH);
        std::vector<double> da1(kH1);
        denseBackward(th + oW2, c.a1.data(), da2.data(), g + oW2, g + oB2, da1.data(), kH2,
                      kH1);
        reluBackward(c.a1.data(), da1.data(), kH1);
        denseBackward(th + oW1, c.gf.data(), da1.data(), g + oW1, g + oB1, nullptr, kH1,
                      kGIn);
        denseBackward(th + oWv, c.vf.data(), dav.data(), g + oWv, g + oBv, nullptr, kVH,
                      kVIn);
    }

    std::vector<NamedTensor> toTensors() const {
        auto slice = [&](const char* name, std::size_t off, std::vector<std::uint32_t> shape) {
            NamedTensor t;
            t.name = name;
            t.shape = std::move(shape);
            t.data.assign(theta.begin() + off, theta.begin() + off + t.count());
            return t;
        };
        return {slice("W1", oW1, {kH1, kGIn}), slice("b1", oB1, {kH1}),
                slice("W2", oW2, {kH2, kH1}), slice("b2", oB2, {kH2}),
                slice("Wv", oWv, {kVH, kVIn}), slice("bv", oBv, {kVH}),
                slice("W3", oW3, {1, kCat}), slice("b3", oB3, {1})};
    }

    static SurrogateNet fromTensors(const std::vector<NamedTensor>& ts) {
        SurrogateNet n;
        n.theta.assign(kParamCount, 0.0);
        auto place = [&](const char* name, std::size_t off, std::size_t count) {
            for (const NamedTensor& t : ts)
                if (t.name == name) {
                    if (t.data.size() != count)
                        throw std::runtime_error("surrogate tensor size mismatch: " +
                                                 t.name);
                    std::copy(t.data.begin(), t.data.end(), n.theta.begin() + off);
                    return;
                }
            throw std::runtime_error(std::string("surrogate tensor missing: ") + name);
        };
        place("W1", oW1, kH1 * kGIn); place("b1", oB1, kH1);
        place("W2", oW2, kH2 * kH1); place("b2", oB2, kH2);
        place("Wv", oWv, kVH * kVIn); place("bv", oBv, kVH);
        place("W3", oW3, kCat); place("b3", oB3, 1);
        return n;
    }
};

struct TrainingPair {
    std::vector<double> gridFeat;
    std::array<double, kVpFeatDim> vpFeat{};
    double label = 0.0;
};

// Mean squared error and its gradient over a batch given by indices.
inline double surrogateLossGrad(const SurrogateNet& net, const std::vector<TrainingPair>& ps,
                                const std::vector<std::size_t>& idx,
                                std::vector<double>* grad) {
    if (grad) grad->assign(SurrogateNet::kParamCount, 0.0);
    double loss = 0.0;
    double invN = 1.0 / double(idx.size());
    for (std::size_t s : idx) {
        SurrogateNet::Cache cache;
        double y = net.forward(ps[s].gridFeat, ps[s].vpFeat, grad ? &cache : nullptr);
        double e = y - ps[s].label;
        loss += e * e * invN;
        if (grad) net.backward(cache, 2.0 * e * invN, *grad);
    }
    return loss;
}

inline double surrogateEvalLoss(const SurrogateNet& net,
                                const std::vector<TrainingPair>& ps) {
    if (ps.empty()) return 0.0;
    double loss = 0.0;
    for (const TrainingPair& p : ps) {
        double e = net.forward(p.gridFeat, p.vpFeat) - p.label;
        loss += e * e;
    }
    return loss / double(ps.size());
}

struct SurrogateHyper {
    double lr = 5e-4;
    int epochs = 100;
    int batch = 64;
    std::uint64_t seed = 7;
};

struct TrainResult {
    SurrogateNet net;
    std::vector<double> trainLoss;  // per epoch
    std::vector<double> evalLoss;   // per epoch
    double initialEvalLoss = 0.0;
    double bestEvalLoss = 0.0;
};

inline TrainResult trainSurrogate(const std::vector<TrainingPair>& train,
                                  const std::vector<TrainingPair>& eval,
                                  const SurrogateHyper& hyper = {}) {
    if (train.size() < 2) throw std::invalid_argument("trainSurrogate: need >= 2 pairs");
    TrainResult res;
    res.net = SurrogateNet::initialized(hyper.seed);
    res.initialEvalLoss = surrogateEvalLoss(res.net, eval);
    res.bestEvalLoss = res.initialEvalLoss;
    SurrogateNet best = res.net;

    Adam opt(SurrogateNet::kParamCount, hyper.lr);
    Rng rng(hyper.seed ^ 0xabcdULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;

    for (int e = 0; e < hyper.epochs; ++e) {
        // Fisher-Yates with the deterministic stream
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(rng.uniformInt(0, std::int64_t(i) - 1))]);
        double epochLoss = 0.0;
        std::size_t nBatches = 0;
        for (std::size_t b = 0; b < order.size(); b += std::size_t(hyper.batch)) {
            std::vector<std::size_t> idx(
                order.begin() + b,
                order.begin() + std::min(order.size(), b + std::size_t(hyper.batch)));
            double loss = surrogateLossGrad(res.net, train, idx, &grad);
            if (!std::isfinite(loss))
                throw std::runtime_error("trainSurrogate: non-finite loss at epoch " +
                                         std::to_string(e));
            opt.step(res.net.theta, grad);
            epochLoss += loss;
            ++nBatches;
        }
        res.trainLoss.push_back(epochLoss / double(nBatches));
        double el = surrogateEvalLoss(res.net, eval);
        res.evalLoss.push_back(el);
        if (el <= res.bestEvalLoss) {
            res.bestEvalLoss = el;
            best = res.net;
        }
    }
    res.net = std::move(best);
    return res;
}

// --- score model dispatch ---------------------------------------------------

enum class ScoreKind { RolloutLabeler, Heuristic, Surrogate };

inline const char* scoreKindName(ScoreKind k) {
    switch (k) {
        case ScoreKind::RolloutLabeler: return "rollout";
        case ScoreKind::Heuristic: return "heuristic";
        case ScoreKind::Surrogate: return "surrogate";
    }
    return "?";
}

inline ScoreKind scoreKindFromName(const std::string& s) {
    if (s == "rollout") return ScoreKind::RolloutLabeler;
    if (s == "heuristic") return ScoreKind::Heuristic;
    if (s == "surrogate") return ScoreKind::Surrogate;
    throw std::invalid_argument("unknown score model kind " + s);
}

class ScoreModel {
public:
    static ScoreModel rolloutLabeler(std::shared_ptr<const RolloutContext> ctx,
                                     CameraIntrinsics scoreIntr, bool completionOn) {
        ScoreModel m;
        m.kind_ = ScoreKind::RolloutLabeler;
        m.ctx_ = std::move(ctx);
        m.scoreIntr_ = scoreIntr;
        m.completionOn_ = completionOn;
        return m;
    }
    static ScoreModel heuristic(CameraIntrinsics scoreIntr) {
        ScoreModel m;
        m.kind_ = ScoreKind::Heuristic;
        m.scoreIntr_ = scoreIntr;
        return m;
    }
    static ScoreModel surrogate(SurrogateNet net) {
        ScoreModel m;
        m.kind_ = ScoreKind::Surrogate;
        m.net_ = std::move(net);
        return m;
    }

    ScoreKind kind() const { return kind_; }

    double predict(const BeliefGrid& grid, const Viewpoint& v) const {
        switch (kind_) {
            case ScoreKind::RolloutLabeler:
                if (!ctx_)
                    throw std::logic_error("rollout labeler requires an attached oracle");
                return labelRollout(*ctx_, grid, v, scoreIntr_, completionOn_);
            case ScoreKind::Heuristic:
                return heuristicGain(grid, v, scoreIntr_);
            case ScoreKind::Surrogate:
                return net_->forward(featurizeGrid(grid),
                                     featurizeViewpoint(grid.dims(), v));
        }
        return 0.0;
    }

    std::vector<double> predictBatch(const BeliefGrid& grid,
                                     const std::vector<Viewpoint>& vs) const {
        std::vector<double> out;
        out.reserve(vs.size());
        if (kind_ == ScoreKind::Surrogate) {
            std::vector<double> gf = featurizeGrid(grid);  // shared across the batch
            for (const Viewpoint& v : vs)
                out.push_back(net_->forward(gf, featurizeViewpoint(grid.dims(), v)));
            return out;
        }
        for (const Viewpoint& v : vs) out.push_back(predict(grid, v));
        return out;
    }

private:
    ScoreKind kind_ = ScoreKind::Heuristic;
    std::shared_ptr<const RolloutContext> ctx_;
    std::optional<SurrogateNet> net_;
    CameraIntrinsics scoreIntr_;
    bool completionOn_ = true;
};

// --- training data ----------------------------------------------------------

// Uniform random pose in the feasible set (staging + observed free space),
// random orientation; nullopt when the attempt budget runs out.
inline std::optional<Viewpoint> sampleFeasibleUniform(const CollisionModel& model,
                                                      Rng& rng, int attempts = 200) {
    Aabb box = model.stagingRegion;
    Aabb world = model.dims.worldBox();
    box.expand(world.lo);
    box.expand(world.hi);
    for (int a = 0; a < attempts; ++a) {
        Viewpoint v;
        v.position = {rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                      rng.uniform(box.lo.z, box.hi.z)};
        Quat q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
        v.orientation = q.normalized();
        if (isFree(v, model)) return v;
    }
    return std::nullopt;
}

struct DataGenConfig {
    DomainRandomizationConfig scenes;
    CameraIntrinsics intr;
    CameraIntrinsics rolloutIntr{70.25, 32, 18, 2.0};
    RegistrationConfig reg;
    int sequenceLength = 4;
};

struct TrainingCorpus {
    std::vector<TrainingPair> train;
    std::vector<TrainingPair> eval;
};

// Random-rollout corpus of (scene features, viewpoint, achieved coverage)
// triples, flattened, shuffled, and split 80/20.
inline TrainingCorpus generateTrainingData(int nScenes, int seqPerScene,
                                           std::uint64_t seed,
                                           const DataGenConfig& cfg = {}) {
    if (nScenes < 1 || seqPerScene < 1)
        throw std::invalid_argument("generateTrainingData: counts must be >= 1");
    std::vector<TrainingPair> pairs;
    Rng master(seed);

    for (int s = 0; s < nScenes; ++s) {
        SceneSpec spec = generateScene(cfg.scenes, master.nextU64());
        RolloutContext ctx(spec);
        SceneGeometry geom = SceneGeometry::fromScene(spec);
        for (int q = 0; q < seqPerScene; ++q) {
            Rng rng = master.fork(std::uint64_t(s) * 1000 + q);
            BeliefGrid grid(spec.dims);
            InstanceStore store(cfg.reg.eta);
            for (int step = 0; step < cfg.sequenceLength; ++step) {
                CollisionModel model = buildCollisionModel(grid, store, geom);
                std::optional<Viewpoint> v = sampleFeasibleUniform(model, rng);
                if (!v) break;
                TrainingPair p;
                p.gridFeat = featurizeGrid(grid);
                p.vpFeat = featurizeViewpoint(spec.dims, *v);
                p.label = labelRollout(ctx, grid, *v, cfg.rolloutIntr,
                                       cfg.reg.completionOn);
                pairs.push_back(std::move(p));
                Observation obs = renderDepthCached(ctx, *v, cfg.intr);
                RegistrationConfig reg = cfg.reg;
                reg.seed = rng.nextU64();
                auto [g2, s2] = integrateObservation(grid, obs, store, reg);
                grid = std::move(g2);
                store = std::move(s2);
            }
        }
    }

    Rng shuf(seed ^ 0x5417ULL);
    for (std::size_t i = pairs.size(); i > 1; --i)
        std::swap(pairs[i - 1], pairs[std::size_t(shuf.uniformInt(0, std::int64_t(i) - 1))]);

    TrainingCorpus corpus;
    std::size_t nTrain = pairs.size() * 8 / 10;
    corpus.train.assign(pairs.begin(), pairs.begin() + nTrain);
    corpus.eval.assign(pairs.begin() + nTrain, pairs.end());
    return corpus;
}

// --- corpus JSONL -----------------------------------------------------------

inline void savePairsJsonl(const std::vector<TrainingPair>& pairs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("savePairsJsonl: cannot open " + path);
    for (const TrainingPair& p : pairs) {
        nlohmann::json j;
        j["grid"] = p.gridFeat;
        j["vp"] = p.vpFeat;
        j["label"] = p.label;
        f << j.dump() << "\n";
    }
}

inline std::vector<TrainingPair> loadPairsJsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("loadPairsJsonl: cannot open " + path);
    std::vector<TrainingPair> pairs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        TrainingPair p;
        p.gridFeat = j.at("grid").get<std::vector<double>>();
        auto vp = j.at("vp");
        for (int i = 0; i < kVpFeatDim; ++i) p.vpFeat[i] = vp[i];
        p.label = j.at("label");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace nbvsim

#endif
