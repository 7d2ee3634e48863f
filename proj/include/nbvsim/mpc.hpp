// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_MPC_HPP
#define NBVSIM_MPC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/motion.hpp"
#include "nbvsim/score.hpp"

namespace nbvsim {

struct MpcParams {
    int nIter = 5;
    int nMpc = 1000;
    std::vector<int> eliteSchedule{800, 500, 200, 100, 50};
    std::array<double, 7> sigma0{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    int stage1Samples = 1000;
    int sampleAttemptFactor = 30;

    void validate() const {
        if (int(eliteSchedule.size()) != nIter)
            throw std::invalid_argument("eliteSchedule length must equal nIter");
        for (int e : eliteSchedule)
            if (e < 1 || e > nMpc)
                throw std::invalid_argument("elite counts must lie in [1, nMpc]");
        for (double s : sigma0)
            if (s <= 0.0) throw std::invalid_argument("sigma0 must be positive");
    }

    // Reduced profile for time-bounded benchmark runs; same 5-iteration
    // shape, smaller batches.
    static MpcParams fast() {
        MpcParams p;
        p.nMpc = 150;
        p.eliteSchedule = {120, 75, 30, 15, 8};
        p.stage1Samples = 150;
        return p;
    }
};

struct ScoredViewpoint {
    Viewpoint viewpoint;
    double score = std::numeric_limits<double>::quiet_NaN();  // NaN = not scored
};

// Sampling distribution over 7D poses: either uniform over the feasible
// region or Gaussian around a mean pose (quaternion part renormalized after
// perturbation).
struct PoseDist {
    bool gaussian = false;
    std::array<double, 7> mu{};
    std::array<double, 7> sigma{};

    static PoseDist uniformFeasible() { return {}; }
    static PoseDist normal(const std::array<double, 7>& mu,
                           const std::array<double, 7>& sigma) {
        return {true, mu, sigma};
    }
    static PoseDist normalAround(const Viewpoint& v, const std::array<double, 7>& sigma) {
        return {true, v.asArray(), sigma};
    }
};

struct SampleResult {
    std::vector<Viewpoint> viewpoints;
    bool exhausted = false;  // attempt budget hit before n accepted
};

// Draw up to n feasible viewpoints from the distribution, rejecting poses
// that collide or leave the staging/free/reach volume.
inline SampleResult sampleFeasible(const CollisionModel& model, const PoseDist& dist,
                                   int n, Rng& rng, int attemptFactor = 30) {
    if (n < 1) throw std::invalid_argument("sampleFeasible: n must be >= 1");
    SampleResult res;
    Aabb box = model.stagingRegion;
    Aabb world = model.dims.worldBox();
    box.expand(world.lo);
    box.expand(world.hi);
    long budget = long(n) * attemptFactor;
    for (long a = 0; a < budget && int(res.viewpoints.size()) < n; ++a) {
        Viewpoint v;
        if (dist.gaussian) {
            v.position = {rng.gaussian(dist.mu[0], dist.sigma[0]),
                          rng.gaussian(dist.mu[1], dist.sigma[1]),
                          rng.gaussian(dist.mu[2], dist.sigma[2])};
            Quat q{rng.gaussian(dist.mu[3], dist.sigma[3]),
                   rng.gaussian(dist.mu[4], dist.sigma[4]),
                   rng.gaussian(dist.mu[5], dist.sigma[5]),
                   rng.gaussian(dist.mu[6], dist.sigma[6])};
            v.orientation = q.normalized();
        } else {
            v.position = {rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                          rng.uniform(box.lo.z, box.hi.z)};
            Quat q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
            v.orientation = q.normalized();
        }
        if (isFree(v, model)) res.viewpoints.push_back(v);
    }
    res.exhausted = int(res.viewpoints.size()) < n;
    if (res.viewpoints.empty())
        throw std::runtime_error("sampleFeasible: no feasible samples within budget");
    return res;
}

// Stage one: uniform feasible batch, score all, return the argmax (first
// occurrence wins ties).
inline Viewpoint stage1Seed(const BeliefGrid& grid, const ScoreModel& score,
                            const CollisionModel& model, int n, Rng& rng,
                            int attemptFactor = 30) {
    SampleResult s = sampleFeasible(model, PoseDist::uniformFeasible(), n, rng,
                                    attemptFactor);
    std::vector<double> scores = score.predictBatch(grid, s.viewpoints);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return s.viewpoints[best];
}

// Per-dimension mean and standard deviation of the elite set; quaternions are
// hemisphere-aligned to the first elite before averaging, the mean quaternion
// is renormalized, and sigma is floored to avoid distribution collapse.
inline std::pair<std::array<double, 7>, std::array<double, 7>> fitDistribution(
    const std::vector<Viewpoint>& elites, double sigmaFloor = 1e-3) {
    if (elites.size() < 2) throw std::invalid_argument("fitDistribution: need >= 2 elites");
    std::vector<std::array<double, 7>> rows;
    rows.reserve(elites.size());
    Quat ref = elites.front().orientation;
    for (const Viewpoint& v : elites) {
        Quat q = v.orientation;
        if (q.dot(ref) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
        rows.push_back({v.position.x, v.position.y, v.position.z, q.w, q.x, q.y, q.z});
    }
    std::array<double, 7> mu{}, sigma{};
    double n = double(rows.size());
    for (int d = 0; d < 7; ++d) {
        double m = 0.0;
        for (const auto& r : rows) m += r[d];
        mu[d] = m / n;
    }
    for (int d = 0; d < 7; ++d) {
        double s2 = 0.0;
        for (const auto& r : rows) s2 += (r[d] - mu[d]) * (r[d] - mu[d]);
        sigma[d] = std::max(sigmaFloor, std::sqrt(s2 / (n - 1.0)));
    }
    Quat mq = Quat{mu[3], mu[4], mu[5], mu[6]}.normalized();
    mu[3] = mq.w; mu[4] = mq.x; mu[5] = mq.y; mu[6] = mq.z;
    return {mu, sigma};
}

// Per-iteration trace for diagnostics.
struct MpcTraceStep {
    int iteration = 0;
    std::array<double, 7> mu{}, sigma{};
    std::vector<double> eliteScores;
};

// Two-stage viewpoint generation: uniform argmax seeding, then iterative
// sample / score / sort / refit around the running Gaussian. Returns the
// final elite list sorted by score descending (ties keep generation order).
inline std::vector<ScoredViewpoint> bilevelMpc(const BeliefGrid& grid,
                                               const ScoreModel& score,
                                               const CollisionModel& model,
                                               const MpcParams& params, Rng& rng,
                                               std::vector<MpcTraceStep>* trace = nullptr) {
    params.validate();
    Viewpoint seed = stage1Seed(grid, score, model, params.stage1Samples, rng,
                                params.sampleAttemptFactor);
    std::array<double, 7> mu = seed.asArray();
    std::array<double, 7> sigma = params.sigma0;

    std::vector<ScoredViewpoint> elites;
    std::optional<Viewpoint> bestSoFar = seed;  // elitism: carry the incumbent
    for (int it = 0; it < params.nIter; ++it) {
        std::vector<Viewpoint> batch;
        try {
            SampleResult s = sampleFeasible(model, PoseDist::normal(mu, sigma),
                                            params.nMpc, rng, params.sampleAttemptFactor);
            batch = std::move(s.viewpoints);
        } catch (const std::runtime_error&) {
            // zero feasible samples this round: keep the prior distribution
            continue;
        }
        if (bestSoFar) batch.insert(batch.begin(), *bestSoFar);
        std::vector<double> scores = score.predictBatch(grid, batch);
        std::vector<std::size_t> order(batch.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        int kElite = std::min(params.eliteSchedule[it], int(order.size()));
        elites.clear();
        std::vector<Viewpoint> eliteViews;
        for (int e = 0; e < kElite; ++e) {
            elites.push_back({batch[order[e]], scores[order[e]]});
            eliteViews.push_back(batch[order[e]]);
        }
        bestSoFar = elites.front().viewpoint;
        if (eliteViews.size() >= 2) {
            auto [m, s] = fitDistribution(eliteViews);
            mu = m;
            sigma = s;
        }
        if (trace) {
            MpcTraceStep ts;
            ts.iteration = it;
            ts.mu = mu;
            ts.sigma = sigma;
            for (const ScoredViewpoint& sv : elites) ts.eliteScores.push_back(sv.score);
            trace->push_back(std::move(ts));
        }
    }
    if (elites.empty()) elites.push_back({seed, score.predict(grid, seed)});
    return elites;
}

enum class BaselineKind { Random, RandomGuided };

// Random and random-guided candidate policies. Random never scores; guided
// sorts the same uniform batch by predicted coverage (stable).
inline std::vector<ScoredViewpoint> baselinePolicy(BaselineKind kind,
                                                   const BeliefGrid& grid,
                                                   const ScoreModel& score,
                                                   const CollisionModel& model, int n,
                                                   Rng& rng, int attemptFactor = 30) {
    SampleResult s = sampleFeasible(model, PoseDist::uniformFeasible(), n, rng,
                                    attemptFactor);
    std::vector<ScoredViewpoint> out;
    if (kind == BaselineKind::Random) {
        for (const Viewpoint& v : s.viewpoints) out.push_back(ScoredViewpoint{v});
        return out;
    }
    std::vector<double> scores = score.predictBatch(grid, s.viewpoints);
    std::vector<std::size_t> order(s.viewpoints.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i : order) out.push_back({s.viewpoints[i], scores[i]});
    return out;
}

inline nlohmann::json mpcTraceToJson(const std::vector<MpcTraceStep>& trace) {
    nlohmann::json j = nlohmann::json::array();
    for (const MpcTraceStep& t : trace)
        j.push_back({{"iteration", t.iteration},
                     {"mu", t.mu},
                     {"sigma", t.sigma},
                     {"elite_scores", t.eliteScores}});
    return j;
}

}  // namespace nbvsim

#endif
