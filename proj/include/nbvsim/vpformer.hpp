// SPDX-License-Identifier: Apache-2.0

#ifndef NBVSIM_VPFORMER_HPP
#define NBVSIM_VPFORMER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbvsim/camera.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/mpc.hpp"
#include "nbvsim/nn.hpp"
#include "nbvsim/score.hpp"
#include "nbvsim/serialize.hpp"

namespace nbvsim {

// --- standalone masked attention (single head) ------------------------------

// softmax((Q K^T + M) / sqrt(dk)) V with row-wise softmax. M entries are 0
// where attention is allowed and -inf where it is blocked; blocked entries
// contribute exactly nothing, so causality is bitwise.
inline std::vector<std::vector<double>> maskedAttention(
    const std::vector<std::vector<double>>& Q, const std::vector<std::vector<double>>& K,
    const std::vector<std::vector<double>>& V,
    const std::vector<std::vector<double>>& M) {
    std::size_t T = Q.size();
    if (K.size() != T || V.size() != T || M.size() != T)
        throw std::invalid_argument("maskedAttention: row count mismatch");
    std::size_t dk = T ? Q[0].size() : 0;
    double scale = 1.0 / std::sqrt(double(dk));
    std::vector<std::vector<double>> out(T);
    for (std::size_t i = 0; i < T; ++i) {
        if (Q[i].size() != dk || K[i].size() != dk || M[i].size() != T)
            throw std::invalid_argument("maskedAttention: shape mismatch");
        // logits, skipping blocked entries entirely
        std::vector<double> logit(T, -std::numeric_limits<double>::infinity());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
            if (std::isinf(M[i][j]) && M[i][j] < 0) continue;
            double dot = 0.0;
            for (std::size_t d = 0; d < dk; ++d) dot += Q[i][d] * K[j][d];
            logit[j] = (dot + M[i][j]) * scale;
            mx = std::max(mx, logit[j]);
        }
        double denom = 0.0;
        std::vector<double> w(T, 0.0);
        for (std::size_t j = 0; j < T; ++j) {
            if (std::isinf(logit[j])) continue;
            w[j] = std::exp(logit[j] - mx);
            denom += w[j];
        }
        out[i].assign(V[0].size(), 0.0);
        for (std::size_t j = 0; j < T; ++j) {
            if (w[j] == 0.0) continue;
            double a = w[j] / denom;
            for (std::size_t d = 0; d < V[j].size(); ++d) out[i][d] += a * V[j][d];
        }
    }
    return out;
}

// Causal mask: 0 for j <= i, -inf for j > i.
inline std::vector<std::vector<double>> causalMask(std::size_t T) {
    std::vector<std::vector<double>> M(T, std::vector<double>(T, 0.0));
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = i + 1; j < T; ++j)
            M[i][j] = -std::numeric_limits<double>::infinity();
    return M;
}

// --- sequence data ----------------------------------------------------------

// One token: coverage so far, coarse scene features, and the previously
// executed viewpoint (a rest pose before the first step). The training target
// is the viewpoint executed at this step.
struct TokenStep {
    double cov = 0.0;
    std::vector<double> gridFeat;                 // kGridFeatDim
    std::array<double, kVpFeatDim> prevVp{};      // featurized
    std::array<double, kVpFeatDim> targetVp{};    // featurized; training label
};

struct TokenSequence {
    std::vector<TokenStep> steps;
};

struct ExpertDataset {
    std::vector<TokenSequence> trajectories;
};

// --- model ------------------------------------------------------------------

struct VpFormerConfig {
    int dz = 256;
    int heads = 8;
    int layers = 2;
    int dFfn = 512;
    int lmax = 8;
    int dc = 64, ds = 128, dv = 64;  // embedding widths for c, S, v (sum = dz)

    int dk() const { return dz / heads; }
    void validate() const {
        if (dc + ds + dv != dz) throw std::invalid_argument("embedding widths must sum to dz");
        if (dz % heads != 0) throw std::invalid_argument("dz must be divisible by heads");
    }
};

class VpFormer {
public:
    VpFormerConfig cfg;
    std::vector<double> theta;

    explicit VpFormer(const VpFormerConfig& c = {}) : cfg(c) {
        cfg.validate();
        buildOffsets();
        theta.assign(paramCount_, 0.0);
    }

    static VpFormer initialized(std::uint64_t seed, const VpFormerConfig& c = {}) {
        VpFormer m(c);
        Rng rng(seed);
        for (const auto& [name, range] : m.ranges_) {
            auto [off, count, fanIn] = range;
            if (name.find("_gamma") != std::string::npos) {
                for (std::size_t i = 0; i < count; ++i) m.theta[off + i] = 1.0;
            } else if (name.find("_beta") != std::string::npos) {
                // zeros
            } else {
                initUniform(m.theta, off, count, fanIn, rng);
            }
        }
        return m;
    }

    std::size_t paramCount() const { return paramCount_; }
    const std::map<std::string, std::tuple<std::size_t, std::size_t, std::size_t>>&
    paramRanges() const { return ranges_; }

    // ----- forward ----------------------------------------------------------

    struct LayerCache {
        std::vector<std::vector<double>> zin;       // T x dz, block input
        std::vector<std::vector<double>> q, k, v;   // T x dz (all heads)
        std::vector<std::vector<double>> attnW;     // heads*T x T softmax rows
        std::vector<std::vector<double>> headOut;   // T x dz concat of heads
        std::vector<std::vector<double>> proj;      // T x dz after Wo
        std::vector<std::vector<double>> res1;      // T x dz residual sum
        std::vector<std::vector<double>> ln1hat;    // normalized activations
        std::vector<double> ln1istd;                // 1/std per row
        std::vector<std::vector<double>> ln1out;
        std::vector<std::vector<double>> ffnHidden;  // T x dFfn post-relu
        std::vector<std::vector<double>> ffnOut;     // T x dz
        std::vector<std::vector<double>> res2;
        std::vector<std::vector<double>> ln2hat;
        std::vector<double> ln2istd;
        std::vector<std::vector<double>> ln2out;
    };

    struct Cache {
        std::vector<std::vector<double>> embed;  // T x dz (with time embedding)
        std::vector<LayerCache> layers;
        std::vector<std::vector<double>> rawHead;  // T x 7 head outputs pre-squash
        std::vector<std::array<double, 7>> outputs;
        Aabb outBox;
    };

    // Raw featurized 7-vector prediction at every position (causal). Position
    // components are tanh-squashed into [-1, 1] (the featurized box), the
    // quaternion part is normalized.
    std::vector<std::array<double, 7>> forwardAll(const TokenSequence& seq,
                                                  Cache* cache = nullptr) const {
        std::size_t T = seq.steps.size();
        if (T == 0) throw std::invalid_argument("VpFormer: empty sequence");
        if (int(T) > cfg.lmax) throw std::invalid_argument("VpFormer: sequence over lmax");
        const int dz = cfg.dz;

        std::vector<std::vector<double>> Z(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t) {
            const TokenStep& st = seq.steps[t];
            if (int(st.gridFeat.size()) != kGridFeatDim)
                throw std::invalid_argument("VpFormer: bad grid feature size");
            double* z = Z[t].data();
            const double* th = theta.data();
            denseForward(th + at("embed_c_w"), th + at("embed_c_b"), &st.cov, z,
                         std::size_t(cfg.dc), 1);
            denseForward(th + at("embed_s_w"), th + at("embed_s_b"), st.gridFeat.data(),
                         z + cfg.dc, std::size_t(cfg.ds), std::size_t(kGridFeatDim));
            denseForward(th + at("embed_v_w"), th + at("embed_v_b"), st.prevVp.data(),
                         z + cfg.dc + cfg.ds, std::size_t(cfg.dv),
                         std::size_t(kVpFeatDim));
            const double* te = theta.data() + at("time_emb") + t * dz;
            for (int d = 0; d < dz; ++d) z[d] += te[d];
        }
        if (cache) cache->embed = Z;
        if (cache) cache->layers.resize(cfg.layers);

        for (int l = 0; l < cfg.layers; ++l) {
            LayerCache* lc = cache ? &cache->layers[l] : nullptr;
            Z = encoderBlock(Z, l, lc);
        }

        std::vector<std::array<double, 7>> outputs(T);
        std::vector<std::vector<double>> raw(T, std::vector<double>(7));
        const double* th = theta.data();
        for (std::size_t t = 0; t < T; ++t) {
            denseForward(th + at("head_w"), th + at("head_b"), Z[t].data(), raw[t].data(),
                         7, std::size_t(dz));
            for (int d = 0; d < 3; ++d) outputs[t][d] = std::tanh(raw[t][d]);
            double n2 = 0.0;
            for (int d = 3; d < 7; ++d) n2 += raw[t][d] * raw[t][d];
            double n = std::sqrt(std::max(n2, 1e-12));
            for (int d = 3; d < 7; ++d) outputs[t][d] = raw[t][d] / n;
        }
        if (cache) {
            cache->rawHead = raw;
            cache->outputs = outputs;
        }
        return outputs;
    }

    // Next-viewpoint prediction in world coordinates, squashed into outBox.
    Viewpoint forwardNextViewpoint(const TokenSequence& seq, const GridDims& dims,
                                   const Aabb& outBox) const {
        std::array<double, 7> o = forwardAll(seq).back();
        Vec3 c = outBox.center(), h = outBox.extent() * 0.5;
        Viewpoint v;
        v.position = {c.x + h.x * o[0], c.y + h.y * o[1], c.z + h.z * o[2]};
        v.orientation = Quat{o[3], o[4], o[5], o[6]}.normalized();
        (void)dims;
        return v;
    }

    // ----- loss and gradient ------------------------------------------------

    // Mean over positions of the squared 7-vector error between prediction
    // and target (teacher forcing). Gradient accumulated into `grad` scaled
    // by `weight` when provided.
    double sequenceLossGrad(const TokenSequence& seq, std::vector<double>* grad,
                            double weight = 1.0) const {
        Cache cache;
        std::vector<std::array<double, 7>> preds = forwardAll(seq, &cache);
        std::size_t T = preds.size();
        double loss = 0.0;
        std::vector<std::vector<double>> dRaw(T, std::vector<double>(7, 0.0));
        double invT = 1.0 / double(T);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& target = seq.steps[t].targetVp;
            std::array<double, 7> dOut{};
            for (int d = 0; d < 7; ++d) {
                double e = preds[t][d] - target[d];
                loss += e * e * invT;
                dOut[d] = 2.0 * e * invT * weight;
            }
            if (!grad) continue;
            // through tanh for position dims
            for (int d = 0; d < 3; ++d)
                dRaw[t][d] = dOut[d] * (1.0 - preds[t][d] * preds[t][d]);
            // through quaternion normalization: d(u/|u|) = (I - qq^T)/|u| du
            double n2 = 0.0;
            for (int d = 3; d < 7; ++d) n2 += cache.rawHead[t][d] * cache.rawHead[t][d];
            double n = std::sqrt(std::max(n2, 1e-12));
            double dotQ = 0.0;
            for (int d = 3; d < 7; ++d) dotQ += dOut[d] * preds[t][d];
            for (int d = 3; d < 7; ++d)
                dRaw[t][d] = (dOut[d] - preds[t][d] * dotQ) / n;
        }
        if (grad) backwardAll(seq, cache, dRaw, *grad);
        return loss;
    }

    std::vector<NamedTensor> toTensors() const {
        std::vector<NamedTensor> ts;
        for (const auto& [name, range] : ranges_) {
            auto [off, count, fanIn] = range;
            (void)fanIn;
            NamedTensor t;
            t.name = name;
            t.shape = {std::uint32_t(count)};
            t.data.assign(theta.begin() + off, theta.begin() + off + count);
            ts.push_back(std::move(t));
        }
        return ts;
    }

    static VpFormer fromTensors(const std::vector<NamedTensor>& ts,
                                const VpFormerConfig& c = {}) {
        VpFormer m(c);
        for (const auto& [name, range] : m.ranges_) {
            auto [off, count, fanIn] = range;
            (void)fanIn;
            bool found = false;
            for (const NamedTensor& t : ts)
                if (t.name == name) {
                    if (t.data.size() != count)
                        throw std::runtime_error("vpformer tensor size mismatch: " + name);
                    std::copy(t.data.begin(), t.data.end(), m.theta.begin() + off);
                    found = true;
                    break;
                }
            if (!found) throw std::runtime_error("vpformer tensor missing: " + name);
        }
        return m;
    }

private:
    std::size_t paramCount_ = 0;
    std::map<std::string, std::tuple<std::size_t, std::size_t, std::size_t>> ranges_;

    std::size_t at(const std::string& name) const {
        return std::get<0>(ranges_.at(name));
    }

    void reg(const std::string& name, std::size_t count, std::size_t fanIn) {
        ranges_[name] = {paramCount_, count, fanIn};
        paramCount_ += count;
    }

    void buildOffsets() {
        std::size_t dz = std::size_t(cfg.dz);
        reg("embed_c_w", std::size_t(cfg.dc) * 1, 1);
        reg("embed_c_b", std::size_t(cfg.dc), 1);
        reg("embed_s_w", std::size_t(cfg.ds) * kGridFeatDim, kGridFeatDim);
        reg("embed_s_b", std::size_t(cfg.ds), kGridFeatDim);
        reg("embed_v_w", std::size_t(cfg.dv) * kVpFeatDim, kVpFeatDim);
        reg("embed_v_b", std::size_t(cfg.dv), kVpFeatDim);
        reg("time_emb", std::size_t(cfg.lmax) * dz, dz);
        for (int l = 0; l < cfg.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + "_";
            reg(p + "wq", dz * dz, dz);
            reg(p + "wk", dz * dz, dz);
            reg(p + "wv", dz * dz, dz);
            reg(p + "wo", dz * dz, dz);
            reg(p + "bo", dz, dz);
            reg(p + "ln1_gamma", dz, dz);
            reg(p + "ln1_beta", dz, dz);
            reg(p + "ffn_w1", std::size_t(cfg.dFfn) * dz, dz);
            reg(p + "ffn_b1", std::size_t(cfg.dFfn), dz);
            reg(p + "ffn_w2", dz * std::size_t(cfg.dFfn), std::size_t(cfg.dFfn));
            reg(p + "ffn_b2", dz, std::size_t(cfg.dFfn));
            reg(p + "ln2_gamma", dz, dz);
            reg(p + "ln2_beta", dz, dz);
        }
        reg("head_w", 7 * dz, dz);
        reg("head_b", 7, dz);
    }

    // post-norm encoder block: z = LN1(z + MHA(z)); z = LN2(z + FFN(z))
    std::vector<std::vector<double>> encoderBlock(const std::vector<std::vector<double>>& zin,
                                                  int l, LayerCache* lc) const {
        std::size_t T = zin.size();
        std::size_t dz = std::size_t(cfg.dz);
        int H = cfg.heads, dk = cfg.dk();
        double scale = 1.0 / std::sqrt(double(dk));
        std::string p = "layer" + std::to_string(l) + "_";
        const double* th = theta.data();
        const double* wq = th + at(p + "wq");
        const double* wk = th + at(p + "wk");
        const double* wv = th + at(p + "wv");
        std::vector<double> zeroBias(dz, 0.0);

        std::vector<std::vector<double>> q(T, std::vector<double>(dz)),
            k(T, std::vector<double>(dz)), v(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t) {
            denseForward(wq, zeroBias.data(), zin[t].data(), q[t].data(), dz, dz);
            denseForward(wk, zeroBias.data(), zin[t].data(), k[t].data(), dz, dz);
            denseForward(wv, zeroBias.data(), zin[t].data(), v[t].data(), dz, dz);
        }

        std::vector<std::vector<double>> attnW(std::size_t(H) * T);
        std::vector<std::vector<double>> headOut(T, std::vector<double>(dz, 0.0));
        for (int h = 0; h < H; ++h) {
            std::size_t o = std::size_t(h) * dk;
            for (std::size_t i = 0; i < T; ++i) {
                std::vector<double> logit(i + 1);
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j <= i; ++j) {
                    double dot = 0.0;
                    for (int d = 0; d < dk; ++d) dot += q[i][o + d] * k[j][o + d];
                    logit[j] = dot * scale;
                    mx = std::max(mx, logit[j]);
                }
                double denom = 0.0;
                std::vector<double> w(i + 1);
                for (std::size_t j = 0; j <= i; ++j) {
                    w[j] = std::exp(logit[j] - mx);
                    denom += w[j];
                }
                for (std::size_t j = 0; j <= i; ++j) w[j] /= denom;
                for (std::size_t j = 0; j <= i; ++j)
                    for (int d = 0; d < dk; ++d)
                        headOut[i][o + d] += w[j] * v[j][o + d];
                attnW[std::size_t(h) * T + i] = std::move(w);
            }
        }

        std::vector<std::vector<double>> proj(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t)
            denseForward(th + at(p + "wo"), th + at(p + "bo"), headOut[t].data(),
                         proj[t].data(), dz, dz);

        std::vector<std::vector<double>> res1(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < dz; ++d) res1[t][d] = zin[t][d] + proj[t][d];

        std::vector<std::vector<double>> ln1hat, ln1out;
        std::vector<double> ln1istd;
        layerNormForward(res1, th + at(p + "ln1_gamma"), th + at(p + "ln1_beta"), ln1hat,
                         ln1istd, ln1out);

        std::vector<std::vector<double>> hidden(T, std::vector<double>(std::size_t(cfg.dFfn)));
        std::vector<std::vector<double>> ffnOut(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t) {
            denseForward(th + at(p + "ffn_w1"), th + at(p + "ffn_b1"), ln1out[t].data(),
                         hidden[t].data(), std::size_t(cfg.dFfn), dz);
            reluInplace(hidden[t].data(), std::size_t(cfg.dFfn));
            denseForward(th + at(p + "ffn_w2"), th + at(p + "ffn_b2"), hidden[t].data(),
                         ffnOut[t].data(), dz, std::size_t(cfg.dFfn));
        }

        std::vector<std::vector<double>> res2(T, std::vector<double>(dz));
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < dz; ++d) res2[t][d] = ln1out[t][d] + ffnOut[t][d];

        std::vector<std::vector<double>> ln2hat, ln2out;
        std::vector<double> ln2istd;
        layerNormForward(res2, th + at(p + "ln2_gamma"), th + at(p + "ln2_beta"), ln2hat,
                         ln2istd, ln2out);

        if (lc) {
            lc->zin = zin;
            lc->q = std::move(q); lc->k = std::move(k); lc->v = std::move(v);
            lc->attnW = std::move(attnW);
            lc->headOut = std::move(headOut);
            lc->proj = std::move(proj);
            lc->res1 = std::move(res1);
            lc->ln1hat = std::move(ln1hat); lc->ln1istd = std::move(ln1istd);
            lc->ln1out = ln1out;
            lc->ffnHidden = std::move(hidden);
            lc->ffnOut = std::move(ffnOut);
            lc->res2 = std::move(res2);
            lc->ln2hat = std::move(ln2hat); lc->ln2istd = std::move(ln2istd);
            lc->ln2out = ln2out;
        }
        return ln2out;
    }

    static void layerNormForward(const std::vector<std::vector<double>>& x,
                                 const double* gamma, const double* beta,
                                 std::vector<std::vector<double>>& xhat,
                                 std::vector<double>& istd,
                                 std::vector<std::vector<double>>& out) {
        std::size_t T = x.size(), D = x[0].size();
        xhat.assign(T, std::vector<double>(D));
        out.assign(T, std::vector<double>(D));
        istd.assign(T, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            double mu = 0.0;
            for (double v : x[t]) mu += v;
            mu /= double(D);
            double var = 0.0;
            for (double v : x[t]) var += (v - mu) * (v - mu);
            var /= double(D);
            double is = 1.0 / std::sqrt(var + 1e-8);
            istd[t] = is;
            for (std::size_t d = 0; d < D; ++d) {
                xhat[t][d] = (x[t][d] - mu) * is;
                out[t][d] = gamma[d] * xhat[t][d] + beta[d];
            }
        }
    }

    static void layerNormBackward(const std::vector<std::vector<double>>& xhat,
                                  const std::vector<double>& istd, const double* gamma,
                                  const std::vector<std::vector<double>>& dOut,
                                  double* dGamma, double* dBeta,
                                  std::vector<std::vector<double>>& dx) {
        std::size_t T = xhat.size(), D = xhat[0].size();
        dx.assign(T, std::vector<double>(D));
        for (std::size_t t = 0; t < T; ++t) {
            double meanG = 0.0, meanGX = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                double g = dOut[t][d] * gamma[d];
                meanG += g;
                meanGX += g * xhat[t][d];
                dGamma[d] += dOut[t][d] * xhat[t][d];
                dBeta[d] += dOut[t][d];
            }
            meanG /= double(D);
            meanGX /= double(D);
            for (std::size_t d = 0; d < D; ++d) {
                double g = dOut[t][d] * gamma[d];
                dx[t][d] = (g - meanG - xhat[t][d] * meanGX) * istd[t];
            }
        }
    }

    void backwardAll(const TokenSequence& seq, const Cache& cache,
                     const std::vector<std::vector<double>>& dRaw,
                     std::vector<double>& grad) const {
        std::size_t T = seq.steps.size();
        std::size_t dz = std::size_t(cfg.dz);
        const double* th = theta.data();
        double* g = grad.data();

        // head
        std::vector<std::vector<double>> dZ(T, std::vector<double>(dz, 0.0));
        for (std::size_t t = 0; t < T; ++t) {
            const std::vector<double>& zTop = cache.layers.back().ln2out[t];
            std::vector<double> dzv(dz, 0.0);
            denseBackward(th + at("head_w"), zTop.data(), dRaw[t].data(),
                          g + at("head_w"), g + at("head_b"), dzv.data(), 7, dz);
            for (std::size_t d = 0; d < dz; ++d) dZ[t][d] += dzv[d];
        }

        for (int l = cfg.layers - 1; l >= 0; --l)
            dZ = encoderBlockBackward(cache.layers[std::size_t(l)], l, dZ, grad);

        // embeddings + time embedding
        for (std::size_t t = 0; t < T; ++t) {
            const TokenStep& st = seq.steps[t];
            double* dte = g + at("time_emb") + t * dz;
            for (std::size_t d = 0; d < dz; ++d) dte[d] += dZ[t][d];
            denseBackward(th + at("embed_c_w"), &st.cov, dZ[t].data(), g + at("embed_c_w"),
                          g + at("embed_c_b"), nullptr, std::size_t(cfg.dc), 1);
            denseBackward(th + at("embed_s_w"), st.gridFeat.data(),
                          dZ[t].data() + cfg.dc, g + at("embed_s_w"), g + at("embed_s_b"),
                          nullptr, std::size_t(cfg.ds), std::size_t(kGridFeatDim));
            denseBackward(th + at("embed_v_w"), st.prevVp.data(),
                          dZ[t].data() + cfg.dc + cfg.ds, g + at("embed_v_w"),
                          g + at("embed_v_b"), nullptr, std::size_t(cfg.dv),
                          std::size_t(kVpFeatDim));
        }
    }

    std::vector<std::vector<double>> encoderBlockBackward(
        const LayerCache& lc, int l, const std::vector<std::vector<double>>& dOut,
        std::vector<double>& grad) const {
        std::size_t T = lc.zin.size();
        std::size_t dz = std::size_t(cfg.dz);
        std::size_t dFfn = std::size_t(cfg.dFfn);
        int H = cfg.heads, dk = cfg.dk();
        double scale = 1.0 / std::sqrt(double(dk));
        std::string p = "layer" + std::to_string(l) + "_";
        const double* th = theta.data();
        double* g = grad.data();

        // LN2
        std::vector<std::vector<double>> dRes2;
        layerNormBackward(lc.ln2hat, lc.ln2istd, th + at(p + "ln2_gamma"), dOut,
                          g + at(p + "ln2_gamma"), g + at(p + "ln2_beta"), dRes2);

        // res2 = ln1out + ffn(ln1out)
        std::vector<std::vector<double>> dLn1out(T, std::vector<double>(dz, 0.0));
        for (std::size_t t = 0; t < T; ++t) {
            // FFN branch
            std::vector<double> dHidden(dFfn, 0.0);
            denseBackward(th + at(p + "ffn_w2"), lc.ffnHidden[t].data(), dRes2[t].data(),
                          g + at(p + "ffn_w2"), g + at(p + "ffn_b2"), dHidden.data(), dz,
                          dFfn);
            reluBackward(lc.ffnHidden[t].data(), dHidden.data(), dFfn);
            std::vector<double> dIn(dz, 0.0);
            denseBackward(th + at(p + "ffn_w1"), lc.ln1out[t].data(), dHidden.data(),
                          g + at(p + "ffn_w1"), g + at(p + "ffn_b1"), dIn.data(), dFfn, dz);
            for (std::size_t d = 0; d < dz; ++d)
                dLn1out[t][d] += dRes2[t][d] + dIn[d];  // residual + FFN path
        }

        // LN1
        std::vector<std::vector<double>> dRes1;
        layerNormBackward(lc.ln1hat, lc.ln1istd, th + at(p + "ln1_gamma"), dLn1out,
                          g + at(p + "ln1_gamma"), g + at(p + "ln1_beta"), dRes1);

        // res1 = zin + Wo(headOut) + bo
        std::vector<std::vector<double>> dZin(T, std::vector<double>(dz, 0.0));
        std::vector<std::vector<double>> dHeadOut(T, std::vector<double>(dz, 0.0));
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> dh(dz, 0.0);
            denseBackward(th + at(p + "wo"), lc.headOut[t].data(), dRes1[t].data(),
                          g + at(p + "wo"), g + at(p + "bo"), dh.data(), dz, dz);
            for (std::size_t d = 0; d < dz; ++d) {
                dZin[t][d] += dRes1[t][d];  // residual path
                dHeadOut[t][d] = dh[d];
            }
        }

        // attention backward per head
        std::vector<std::vector<double>> dq(T, std::vector<double>(dz, 0.0)),
            dkk(T, std::vector<double>(dz, 0.0)), dv(T, std::vector<double>(dz, 0.0));
        for (int h = 0; h < H; ++h) {
            std::size_t o = std::size_t(h) * dk;
            for (std::size_t i = 0; i < T; ++i) {
                const std::vector<double>& w = lc.attnW[std::size_t(h) * T + i];
                // dA and softmax jacobian
                std::vector<double> dA(i + 1, 0.0);
                double inner = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    for (int d = 0; d < dk; ++d)
                        acc += dHeadOut[i][o + d] * lc.v[j][o + d];
                    dA[j] = acc;
                    inner += w[j] * acc;
                    for (int d = 0; d < dk; ++d)
                        dv[j][o + d] += w[j] * dHeadOut[i][o + d];
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    double dS = w[j] * (dA[j] - inner) * scale;
                    for (int d = 0; d < dk; ++d) {
                        dq[i][o + d] += dS * lc.k[j][o + d];
                        dkk[j][o + d] += dS * lc.q[i][o + d];
                    }
                }
            }
        }

        // projections back to zin
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> dIn(dz, 0.0);
            std::vector<double> dummyB(dz, 0.0);
            denseBackward(th + at(p + "wq"), lc.zin[t].data(), dq[t].data(),
                          g + at(p + "wq"), dummyB.data(), dIn.data(), dz, dz);
            for (std::size_t d = 0; d < dz; ++d) dZin[t][d] += dIn[d];
            denseBackward(th + at(p + "wk"), lc.zin[t].data(), dkk[t].data(),
                          g + at(p + "wk"), dummyB.data(), dIn.data(), dz, dz);
            for (std::size_t d = 0; d < dz; ++d) dZin[t][d] += dIn[d];
            denseBackward(th + at(p + "wv"), lc.zin[t].data(), dv[t].data(),
                          g + at(p + "wv"), dummyB.data(), dIn.data(), dz, dz);
            for (std::size_t d = 0; d < dz; ++d) dZin[t][d] += dIn[d];
        }
        return dZin;
    }
};

// --- training ---------------------------------------------------------------

struct BcHyper {
    double lr = 5e-4;
    int epochs = 150;
    int batch = 64;  // sequences per optimizer step
    std::uint64_t seed = 11;
};

struct BcResult {
    VpFormer model{VpFormerConfig{}};
    std::vector<double> trainLoss;
    std::vector<double> heldoutLoss;
    double initialHeldoutLoss = 0.0;
    double bestHeldoutLoss = 0.0;
};

inline double bcEvalLoss(const VpFormer& m, const std::vector<TokenSequence>& seqs) {
    if (seqs.empty()) return 0.0;
    double loss = 0.0;
    for (const TokenSequence& s : seqs) loss += m.sequenceLossGrad(s, nullptr);
    return loss / double(seqs.size());
}

// Behavior cloning on expert trajectories with teacher forcing.
inline BcResult trainBc(const ExpertDataset& data, const BcHyper& hyper = {},
                        const VpFormerConfig& cfg = {}) {
    if (data.trajectories.size() < 2)
        throw std::invalid_argument("trainBc: need >= 2 trajectories");
    std::size_t nTrain = std::max<std::size_t>(1, data.trajectories.size() * 8 / 10);
    std::vector<TokenSequence> train(data.trajectories.begin(),
                                     data.trajectories.begin() + nTrain);
    std::vector<TokenSequence> heldout(data.trajectories.begin() + nTrain,
                                       data.trajectories.end());

    BcResult res;
    res.model = VpFormer::initialized(hyper.seed, cfg);
    res.initialHeldoutLoss = bcEvalLoss(res.model, heldout);
    res.bestHeldoutLoss = res.initialHeldoutLoss;
    VpFormer best = res.model;

    Adam opt(res.model.paramCount(), hyper.lr);
    Rng rng(hyper.seed ^ 0xbcbcULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;

    for (int e = 0; e < hyper.epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(rng.uniformInt(0, std::int64_t(i) - 1))]);
        double epochLoss = 0.0;
        std::size_t nBatches = 0;
        for (std::size_t b = 0; b < order.size(); b += std::size_t(hyper.batch)) {
            std::size_t end = std::min(order.size(), b + std::size_t(hyper.batch));
            grad.assign(res.model.paramCount(), 0.0);
            double loss = 0.0;
            double w = 1.0 / double(end - b);
            for (std::size_t s = b; s < end; ++s)
                loss += res.model.sequenceLossGrad(train[order[s]], &grad, w) * w;
            if (!std::isfinite(loss))
                throw std::runtime_error("trainBc: non-finite loss at epoch " +
                                         std::to_string(e));
            opt.step(res.model.theta, grad);
            epochLoss += loss;
            ++nBatches;
        }
        res.trainLoss.push_back(epochLoss / double(nBatches));
        double hl = bcEvalLoss(res.model, heldout);
        res.heldoutLoss.push_back(hl);
        if (hl <= res.bestHeldoutLoss) {
            res.bestHeldoutLoss = hl;
            best = res.model;
        }
    }
    res.model = std::move(best);
    return res;
}

// --- execution-time refinement ----------------------------------------------

// Sample around the model prediction with fixed variance, score, and return
// the candidates sorted by predicted coverage; the prediction itself is
// candidate 0 when feasible.
inline std::vector<ScoredViewpoint> refineViewpoint(const Viewpoint& vhat,
                                                    const std::array<double, 7>& sigma,
                                                    const ScoreModel& score,
                                                    const BeliefGrid& grid,
                                                    const CollisionModel& model, int n,
                                                    Rng& rng) {
    if (n < 1) throw std::invalid_argument("refineViewpoint: n must be >= 1");
    std::vector<Viewpoint> cands;
    if (isFree(vhat, model)) cands.push_back(vhat);
    try {
        SampleResult s = sampleFeasible(model, PoseDist::normalAround(vhat, sigma), n, rng);
        for (const Viewpoint& v : s.viewpoints) cands.push_back(v);
    } catch (const std::runtime_error&) {
        if (cands.empty()) throw;
    }
    std::vector<double> scores = score.predictBatch(grid, cands);
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<ScoredViewpoint> out;
    for (std::size_t i : order) out.push_back({cands[i], scores[i]});
    return out;
}

// --- dataset JSONL ----------------------------------------------------------

inline void saveExpertJsonl(const ExpertDataset& data, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("saveExpertJsonl: cannot open " + path);
    for (const TokenSequence& seq : data.trajectories) {
        nlohmann::json j = nlohmann::json::array();
        for (const TokenStep& s : seq.steps)
            j.push_back({{"c", s.cov},
                         {"grid", s.gridFeat},
                         {"prev_vp", s.prevVp},
                         {"target_vp", s.targetVp}});
        f << j.dump() << "\n";
    }
}

inline ExpertDataset loadExpertJsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("loadExpertJsonl: cannot open " + path);
    ExpertDataset data;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        TokenSequence seq;
        for (const auto& js : j) {
            TokenStep s;
            s.cov = js.at("c");
            s.gridFeat = js.at("grid").get<std::vector<double>>();
            for (int i = 0; i < kVpFeatDim; ++i) {
                s.prevVp[i] = js.at("prev_vp")[i];
                s.targetVp[i] = js.at("target_vp")[i];
            }
            seq.steps.push_back(std::move(s));
        }
        data.trajectories.push_back(std::move(seq));
    }
    return data;
}

}  // namespace nbvsim

#endif
