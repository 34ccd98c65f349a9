// Copyright 2026 The NeuroMamba Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "nm/common.hpp"
#include "nm/ssmcore.hpp"

namespace nm {

struct MambaBlockConfig {
    int model_dim = 0;   // B channels in and out
    int state_size = 16; // L
    int expand = 2;
    int conv_width = 4;
    int delta_rank = 0;  // 0 -> max(1, model_dim/16)

    int expanded() const { return expand * model_dim; }
    int rank() const { return delta_rank > 0 ? delta_rank : std::max(1, model_dim / 16); }

    void validate() const {
        if (model_dim < 1 || state_size < 1 || expand < 1 || conv_width < 1 ||
            delta_rank < 0)
            throw data_error("shape", "mamba block config: all dimensions must be positive");
    }
};

enum class ModelMode { regression, bce };

struct ModelConfig {
    int model_dim = 0;  // held at B through the whole stack
    int n_layers = 2;
    MambaBlockConfig block;
    ModelMode mode = ModelMode::regression;

    void validate() const {
        if (model_dim < 1) throw data_error("shape", "model config: model_dim must be positive");
        if (n_layers < 1) throw data_error("shape", "model config: n_layers must be positive");
        MambaBlockConfig b = block;
        b.model_dim = model_dim;
        b.validate();
    }
};

namespace act {

template <class S> S sigmoid(S x) { return S(1) / (S(1) + std::exp(-x)); }

template <class S> S silu(S x) { return x * sigmoid(x); }

template <class S> S silu_grad(S x) {
    const S s = sigmoid(x);
    return s * (S(1) + x * (S(1) - s));
}

template <class S> S softplus(S x) {
    return std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace act

/* Gated selective-SSM block. Five stages:
 *   U = x W_h + b_h                    (input projection, T x E)
 *   H = SiLU(causal depthwise conv U)  (sequence branch)
 *   Z = SiLU(x W_z + b_z)              (gate branch)
 *   Y = S6(H)  with  delta = softplus(H W_dlo W_dhi + dt_bias),
 *              B_t = H W_b,  C_t = H W_c,  diagonal A per channel
 *   out = (Y (.) Z) W_out + b_out */
template <class S>
struct MambaBlockParams {
    MatX<S> w_in_h, w_in_z;  // B x E
    VecX<S> b_in_h, b_in_z;  // E
    MatX<S> conv_w;          // W x E, column e = channel e's taps (oldest first)
    VecX<S> conv_b;          // E
    MatX<S> w_dt_lo;         // E x R
    MatX<S> w_dt_hi;         // R x E
    VecX<S> dt_bias;         // E
    MatX<S> w_b, w_c;        // E x L
    MatX<S> a;               // E x L, negative
    MatX<S> w_out;           // E x B
    VecX<S> b_out;           // B

    void allocate(const MambaBlockConfig& cfg) {
        const int b = cfg.model_dim, e = cfg.expanded(), l = cfg.state_size;
        const int w = cfg.conv_width, r = cfg.rank();
        w_in_h.setZero(b, e);
        w_in_z.setZero(b, e);
        b_in_h.setZero(e);
        b_in_z.setZero(e);
        conv_w.setZero(w, e);
        conv_b.setZero(e);
        w_dt_lo.setZero(e, r);
        w_dt_hi.setZero(r, e);
        dt_bias.setZero(e);
        w_b.setZero(e, l);
        w_c.setZero(e, l);
        a.setZero(e, l);
        w_out.setZero(e, b);
        b_out.setZero(b);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".w_in_h", w_in_h.data(), w_in_h.rows(), w_in_h.cols());
        f(prefix + ".b_in_h", b_in_h.data(), b_in_h.rows(), Eigen::Index{1});
        f(prefix + ".w_in_z", w_in_z.data(), w_in_z.rows(), w_in_z.cols());
        f(prefix + ".b_in_z", b_in_z.data(), b_in_z.rows(), Eigen::Index{1});
        f(prefix + ".conv_w", conv_w.data(), conv_w.rows(), conv_w.cols());
        f(prefix + ".conv_b", conv_b.data(), conv_b.rows(), Eigen::Index{1});
        f(prefix + ".w_dt_lo", w_dt_lo.data(), w_dt_lo.rows(), w_dt_lo.cols());
        f(prefix + ".w_dt_hi", w_dt_hi.data(), w_dt_hi.rows(), w_dt_hi.cols());
        f(prefix + ".dt_bias", dt_bias.data(), dt_bias.rows(), Eigen::Index{1});
        f(prefix + ".w_b", w_b.data(), w_b.rows(), w_b.cols());
        f(prefix + ".w_c", w_c.data(), w_c.rows(), w_c.cols());
        f(prefix + ".a", a.data(), a.rows(), a.cols());
        f(prefix + ".w_out", w_out.data(), w_out.rows(), w_out.cols());
        f(prefix + ".b_out", b_out.data(), b_out.rows(), Eigen::Index{1});
    }
};

/* Bidirectional differential layer:
 *   F_F = Block_fwd(F);  F_B = flip(Block_bwd(flip(F)))
 *   F_O = lambda2 (.) RMSNorm(lambda1 (.) F_F - F_B) + F
 * RMSNorm acts over channels per timestep: x gain / sqrt(mean(x^2)+1e-6). */
template <class S>
struct MambaPlusParams {
    MambaBlockParams<S> fwd, bwd;
    VecX<S> lambda1, lambda2, gain;  // B each

    void allocate(const MambaBlockConfig& cfg) {
        fwd.allocate(cfg);
        bwd.allocate(cfg);
        lambda1.setZero(cfg.model_dim);
        lambda2.setZero(cfg.model_dim);
        gain.setZero(cfg.model_dim);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        fwd.visit(prefix + ".fwd", f);
        bwd.visit(prefix + ".bwd", f);
        f(prefix + ".lambda1", lambda1.data(), lambda1.rows(), Eigen::Index{1});
        f(prefix + ".lambda2", lambda2.data(), lambda2.rows(), Eigen::Index{1});
        f(prefix + ".gain", gain.data(), gain.rows(), Eigen::Index{1});
    }
};

inline constexpr double kRmsEps = 1e-6;

template <class S>
struct NeuroMambaModel {
    ModelConfig config;
    std::vector<MambaPlusParams<S>> layers;
    MatX<S> head_w;  // 3 x B
    VecX<S> head_b;  // 3
    VecX<S> bce_w;   // B+1 (bce mode), weights over concat[h; moca]
    VecX<S> bce_b;   // 1 (bce mode)
    bool trained = false;

    static NeuroMambaModel allocate(const ModelConfig& config_in) {
        ModelConfig cfg = config_in;
        cfg.block.model_dim = cfg.model_dim;
        cfg.validate();
        NeuroMambaModel m;
        m.config = cfg;
        m.layers.resize(static_cast<std::size_t>(cfg.n_layers));
        for (auto& layer : m.layers) layer.allocate(cfg.block);
        m.head_w.setZero(3, cfg.model_dim);
        m.head_b.setZero(3);
        if (cfg.mode == ModelMode::bce) {
            m.bce_w.setZero(cfg.model_dim + 1);
            m.bce_b.setZero(1);
        }
        return m;
    }

    /* Seeded initialization. Fan-in uniform for projections, with the
     * channel-mixing maps offset toward a channel-preserving tile so the
     * pooled vector starts out reading one region per element. A rows
     * fixed to -(1..L), dt_bias set so softplus lands log-uniformly in
     * [0.001, 0.1], lambda/gain all-ones, biases zero. */
    static NeuroMambaModel init(const ModelConfig& config_in, std::uint64_t seed);

    NeuroMambaModel zeros_like() const {
        NeuroMambaModel g = allocate(config);
        return g;
    }

    template <class F>
    void visit(F&& f) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].visit("layers." + std::to_string(i), f);
        f(std::string("head.w"), head_w.data(), head_w.rows(), head_w.cols());
        f(std::string("head.b"), head_b.data(), head_b.rows(), Eigen::Index{1});
        if (config.mode == ModelMode::bce) {
            f(std::string("bce.w"), bce_w.data(), bce_w.rows(), Eigen::Index{1});
            f(std::string("bce.b"), bce_b.data(), bce_b.rows(), Eigen::Index{1});
        }
    }

    Eigen::Index parameter_count() {
        Eigen::Index n = 0;
        visit([&](const std::string&, S*, Eigen::Index r, Eigen::Index c) { n += r * c; });
        return n;
    }
};

template <class S>
NeuroMambaModel<S> NeuroMambaModel<S>::init(const ModelConfig& config_in, std::uint64_t seed) {
    NeuroMambaModel m = allocate(config_in);
    Rng rng(seed);

    auto fill_uniform = [&](MatX<S>& w, double fan_in) {
        const double k = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                w(r, c) = static_cast<S>(rng.uniform(-k, k));
    };
    auto fill_uniform_vec = [&](VecX<S>& v, double fan_in) {
        const double k = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index r = 0; r < v.size(); ++r) v(r) = static_cast<S>(rng.uniform(-k, k));
    };

    /* Channel-mixing projections start near a channel-preserving map:
     * inner lane e reads region e mod B and the output projection folds
     * the expand lanes of region r back onto channel r. The pooled
     * vector h then keeps its per-region reading unless training finds a
     * reason to mix, which a linear head on pooled features does not
     * supply. */
    auto add_identity_in = [&](MatX<S>& w, Eigen::Index b) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, r % b) += S(1);
    };
    auto add_identity_out = [&](MatX<S>& w, Eigen::Index b, double gain) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(c % b, c) += static_cast<S>(gain);
    };

    const auto& bc = m.config.block;
    for (auto& layer : m.layers) {
        for (MambaBlockParams<S>* blk : {&layer.fwd, &layer.bwd}) {
            fill_uniform(blk->w_in_h, bc.model_dim);
            blk->w_in_h *= S(0.1);
            add_identity_in(blk->w_in_h, bc.model_dim);
            fill_uniform(blk->w_in_z, bc.model_dim);
            blk->w_in_z *= S(0.1);
            add_identity_in(blk->w_in_z, bc.model_dim);
            fill_uniform(blk->conv_w, bc.conv_width);
            fill_uniform(blk->w_dt_lo, bc.expanded());
            fill_uniform(blk->w_dt_hi, bc.rank());
            for (Eigen::Index e = 0; e < blk->dt_bias.size(); ++e) {
                // log-uniform dt in [1e-3, 1e-1]; bias = softplus^(-1)(dt)
                const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
                blk->dt_bias(e) = static_cast<S>(std::log(std::expm1(dt)));
            }
            fill_uniform(blk->w_b, bc.expanded());
            fill_uniform(blk->w_c, bc.expanded());
            for (Eigen::Index e = 0; e < blk->a.rows(); ++e)
                for (Eigen::Index l = 0; l < blk->a.cols(); ++l)
                    blk->a(e, l) = -static_cast<S>(l + 1);
            fill_uniform(blk->w_out, bc.expanded());
            blk->w_out *= S(0.1);
            add_identity_out(blk->w_out, bc.model_dim, 1.0 / bc.expand);
        }
        layer.lambda1.setOnes();
        layer.lambda2.setOnes();
        layer.gain.setOnes();
    }
    fill_uniform(m.head_w, m.config.model_dim);
    if (m.config.mode == ModelMode::bce) fill_uniform_vec(m.bce_w, m.config.model_dim + 1);
    return m;
}

/* Forward intermediates kept for the backward pass. */
template <class S>
struct BlockCache {
    MatX<S> u;         // T x E, pre-conv projection
    MatX<S> conv;      // T x E, pre-SiLU
    MatX<S> hgate;     // T x E, SiLU(conv) = scan input
    MatX<S> az;        // T x E, pre-SiLU gate
    MatX<S> zgate;     // T x E
    MatX<S> dt_mid;    // T x R
    MatX<S> dt_pre;    // T x E
    MatX<S> delta;     // T x E
    MatX<S> bmat;      // T x L
    MatX<S> cmat;      // T x L
    std::vector<ScanOutput<S>> scans;  // per expanded channel
    MatX<S> yscan;     // T x E
};

template <class S>
struct LayerCache {
    BlockCache<S> fwd, bwd;   // bwd ran on the time-flipped input
    MatX<S> input;            // T x B
    MatX<S> f_fwd, f_bwd;     // T x B, f_bwd already flipped back
    MatX<S> gdiff;            // T x B, lambda1 (.) f_fwd - f_bwd
    VecX<S> rms_scale;        // T, sqrt(mean + eps)
    MatX<S> rnorm;            // T x B, normalized (pre-lambda2)
};

template <class S>
struct ModelCache {
    std::vector<LayerCache<S>> layers;
    MatX<S> final_out;  // T x B
    VecX<S> pooled;     // B
};

template <class S>
MatX<S> mamba_block_forward(const MambaBlockParams<S>& p, const MambaBlockConfig& cfg,
                            const MatX<S>& x, BlockCache<S>* cache) {
    const Eigen::Index t_len = x.rows();
    const Eigen::Index e_len = cfg.expanded();
    const Eigen::Index w_len = cfg.conv_width;
    if (x.cols() != cfg.model_dim)
        throw data_error("shape", "mamba block: input has " + std::to_string(x.cols()) +
                                      " channels, config expects " +
                                      std::to_string(cfg.model_dim));

    BlockCache<S> local;
    BlockCache<S>& c = cache ? *cache : local;

    c.u = (x * p.w_in_h).rowwise() + p.b_in_h.transpose();

    // causal depthwise conv: out[t,e] = sum_w K[w,e] u[t-W+1+w, e], zero padded
    c.conv.resize(t_len, e_len);
    for (Eigen::Index e = 0; e < e_len; ++e) {
        for (Eigen::Index t = 0; t < t_len; ++t) {
            S acc = p.conv_b(e);
            const Eigen::Index w0 = std::max<Eigen::Index>(0, w_len - 1 - t);
            for (Eigen::Index w = w0; w < w_len; ++w)
                acc += p.conv_w(w, e) * c.u(t - (w_len - 1) + w, e);
            c.conv(t, e) = acc;
        }
    }
    c.hgate = c.conv.unaryExpr([](S v) { return act::silu(v); });

    c.az = (x * p.w_in_z).rowwise() + p.b_in_z.transpose();
    c.zgate = c.az.unaryExpr([](S v) { return act::silu(v); });

    c.dt_mid = c.hgate * p.w_dt_lo;
    c.dt_pre = (c.dt_mid * p.w_dt_hi).rowwise() + p.dt_bias.transpose();
    c.delta = c.dt_pre.unaryExpr([](S v) { return act::softplus(v); });

    c.bmat = c.hgate * p.w_b;
    c.cmat = c.hgate * p.w_c;

    c.yscan.resize(t_len, e_len);
    c.scans.resize(static_cast<std::size_t>(e_len));
    const bool keep = cache != nullptr;
    for (Eigen::Index e = 0; e < e_len; ++e) {
        VecX<S> a_row = p.a.row(e);
        auto scan = selective_scan<S>(a_row, c.delta.col(e), c.bmat, c.cmat, c.hgate.col(e),
                                      ScanMode::sequential, keep);
        c.yscan.col(e) = scan.y;
        if (keep) c.scans[static_cast<std::size_t>(e)] = std::move(scan);
    }

    MatX<S> gated = c.yscan.cwiseProduct(c.zgate);
    return (gated * p.w_out).rowwise() + p.b_out.transpose();
}

/* Accumulates parameter gradients into g and the input gradient into dx
 * (+=). dout is dL/d(block output). x is the block's original input. */
template <class S>
void mamba_block_backward(const MambaBlockParams<S>& p, const MambaBlockConfig& cfg,
                          const MatX<S>& x, const BlockCache<S>& c, const MatX<S>& dout,
                          MambaBlockParams<S>& g, MatX<S>& dx) {
    const Eigen::Index t_len = x.rows();
    const Eigen::Index e_len = cfg.expanded();
    const Eigen::Index w_len = cfg.conv_width;

    const MatX<S> gated = c.yscan.cwiseProduct(c.zgate);
    g.w_out.noalias() += gated.transpose() * dout;
    g.b_out.noalias() += dout.colwise().sum().transpose();
    const MatX<S> dgated = dout * p.w_out.transpose();

    const MatX<S> dyscan = dgated.cwiseProduct(c.zgate);
    const MatX<S> dzgate = dgated.cwiseProduct(c.yscan);

    const MatX<S> daz =
        dzgate.cwiseProduct(c.az.unaryExpr([](S v) { return act::silu_grad(v); }));
    g.w_in_z.noalias() += x.transpose() * daz;
    g.b_in_z.noalias() += daz.colwise().sum().transpose();
    dx.noalias() += daz * p.w_in_z.transpose();

    MatX<S> dhgate = MatX<S>::Zero(t_len, e_len);
    MatX<S> ddelta(t_len, e_len);
    MatX<S> dbmat = MatX<S>::Zero(t_len, cfg.state_size);
    MatX<S> dcmat = MatX<S>::Zero(t_len, cfg.state_size);
    for (Eigen::Index e = 0; e < e_len; ++e) {
        VecX<S> a_row = p.a.row(e);
        const auto grads = scan_backward<S>(a_row, c.delta.col(e), c.bmat, c.cmat,
                                            c.hgate.col(e), c.scans[static_cast<std::size_t>(e)],
                                            dyscan.col(e));
        dhgate.col(e) += grads.dx;
        ddelta.col(e) = grads.ddelta;
        g.a.row(e) += grads.da.transpose();
        dbmat += grads.db;
        dcmat += grads.dc;
    }
    g.w_b.noalias() += c.hgate.transpose() * dbmat;
    g.w_c.noalias() += c.hgate.transpose() * dcmat;
    dhgate.noalias() += dbmat * p.w_b.transpose();
    dhgate.noalias() += dcmat * p.w_c.transpose();

    const MatX<S> ddt_pre =
        ddelta.cwiseProduct(c.dt_pre.unaryExpr([](S v) { return act::sigmoid(v); }));
    g.dt_bias.noalias() += ddt_pre.colwise().sum().transpose();
    g.w_dt_hi.noalias() += c.dt_mid.transpose() * ddt_pre;
    const MatX<S> ddt_mid = ddt_pre * p.w_dt_hi.transpose();
    g.w_dt_lo.noalias() += c.hgate.transpose() * ddt_mid;
    dhgate.noalias() += ddt_mid * p.w_dt_lo.transpose();

    const MatX<S> dconv =
        dhgate.cwiseProduct(c.conv.unaryExpr([](S v) { return act::silu_grad(v); }));
    g.conv_b.noalias() += dconv.colwise().sum().transpose();
    MatX<S> du = MatX<S>::Zero(t_len, e_len);
    for (Eigen::Index e = 0; e < e_len; ++e) {
        for (Eigen::Index t = 0; t < t_len; ++t) {
            const S d = dconv(t, e);
            if (d == S(0)) continue;
            const Eigen::Index w0 = std::max<Eigen::Index>(0, w_len - 1 - t);
            for (Eigen::Index w = w0; w < w_len; ++w) {
                g.conv_w(w, e) += d * c.u(t - (w_len - 1) + w, e);
                du(t - (w_len - 1) + w, e) += d * p.conv_w(w, e);
            }
        }
    }

    g.w_in_h.noalias() += x.transpose() * du;
    g.b_in_h.noalias() += du.colwise().sum().transpose();
    dx.noalias() += du * p.w_in_h.transpose();
}

template <class S>
MatX<S> mambapp_forward(const MambaPlusParams<S>& layer, const MambaBlockConfig& cfg,
                        const MatX<S>& f, LayerCache<S>* cache) {
    LayerCache<S> local;
    LayerCache<S>& c = cache ? *cache : local;
    c.input = f;

    c.f_fwd = mamba_block_forward(layer.fwd, cfg, f, cache ? &c.fwd : nullptr);
    const MatX<S> flipped = f.colwise().reverse();
    MatX<S> bwd_out = mamba_block_forward(layer.bwd, cfg, flipped, cache ? &c.bwd : nullptr);
    c.f_bwd = bwd_out.colwise().reverse();

    c.gdiff = (c.f_fwd.array().rowwise() * layer.lambda1.transpose().array()).matrix() - c.f_bwd;

    const Eigen::Index t_len = f.rows();
    const Eigen::Index b_len = f.cols();
    c.rms_scale.resize(t_len);
    c.rnorm.resize(t_len, b_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const S ms = c.gdiff.row(t).squaredNorm() / static_cast<S>(b_len);
        c.rms_scale(t) = std::sqrt(ms + static_cast<S>(kRmsEps));
        c.rnorm.row(t) =
            (c.gdiff.row(t).array() * layer.gain.transpose().array()) / c.rms_scale(t);
    }

    return (c.rnorm.array().rowwise() * layer.lambda2.transpose().array()).matrix() + f;
}

template <class S>
void mambapp_backward(const MambaPlusParams<S>& layer, const MambaBlockConfig& cfg,
                      const LayerCache<S>& c, const MatX<S>& dout, MambaPlusParams<S>& g,
                      MatX<S>& dinput) {
    const Eigen::Index t_len = c.input.rows();
    const Eigen::Index b_len = c.input.cols();

    g.lambda2.noalias() += dout.cwiseProduct(c.rnorm).colwise().sum().transpose();
    const MatX<S> drnorm = (dout.array().rowwise() * layer.lambda2.transpose().array()).matrix();
    dinput += dout;  // residual branch

    // RMSNorm backward per timestep: r = g_vec (.) gain / s
    MatX<S> dgdiff(t_len, b_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const S s = c.rms_scale(t);
        const auto u = drnorm.row(t).array();
        const auto gv = c.gdiff.row(t).array();
        g.gain.noalias() += ((u * gv) / s).matrix().transpose();
        const S mix = (u * layer.gain.transpose().array() * gv).sum() /
                      (static_cast<S>(b_len) * s * s * s);
        dgdiff.row(t) = ((u * layer.gain.transpose().array()) / s - gv * mix).matrix();
    }

    g.lambda1.noalias() += dgdiff.cwiseProduct(c.f_fwd).colwise().sum().transpose();
    const MatX<S> df_fwd =
        (dgdiff.array().rowwise() * layer.lambda1.transpose().array()).matrix();
    const MatX<S> df_bwd = -dgdiff;

    mamba_block_backward(layer.fwd, cfg, c.input, c.fwd, df_fwd, g.fwd, dinput);

    const MatX<S> flipped_in = c.input.colwise().reverse();
    MatX<S> dflipped = MatX<S>::Zero(t_len, b_len);
    mamba_block_backward(layer.bwd, cfg, flipped_in, c.bwd,
                         MatX<S>(df_bwd.colwise().reverse()), g.bwd, dflipped);
    dinput += dflipped.colwise().reverse();
}

/* Pooled feature vector h = time-mean of the final layer output. */
template <class S>
VecX<S> model_pooled(const NeuroMambaModel<S>& m, const MatX<S>& x, ModelCache<S>* cache) {
    if (x.cols() != m.config.model_dim)
        throw data_error("shape", "model: input has " + std::to_string(x.cols()) +
                                      " regions, model expects " +
                                      std::to_string(m.config.model_dim));
    if (!x.allFinite()) throw data_error("data", "model: non-finite input");

    MambaBlockConfig bc = m.config.block;
    bc.model_dim = m.config.model_dim;

    if (cache) cache->layers.resize(m.layers.size());
    MatX<S> f = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        f = mambapp_forward(m.layers[i], bc, f, cache ? &cache->layers[i] : nullptr);

    VecX<S> pooled = f.colwise().mean().transpose();
    if (cache) {
        cache->final_out = std::move(f);
        cache->pooled = pooled;
    }
    return pooled;
}

/* dh is dL/d(pooled); accumulates parameter grads into g. */
template <class S>
void model_backward(const NeuroMambaModel<S>& m, const ModelCache<S>& cache, const VecX<S>& dh,
                    NeuroMambaModel<S>& g) {
    MambaBlockConfig bc = m.config.block;
    bc.model_dim = m.config.model_dim;

    const Eigen::Index t_len = cache.final_out.rows();
    MatX<S> dF = (VecX<S>::Ones(t_len) / static_cast<S>(t_len)) * dh.transpose();
    for (std::size_t i = m.layers.size(); i-- > 0;) {
        MatX<S> dprev = MatX<S>::Zero(dF.rows(), dF.cols());
        mambapp_backward(m.layers[i], bc, cache.layers[i], dF, g.layers[i], dprev);
        dF = std::move(dprev);
    }
}

template <class S>
VecX<S> head_apply(const NeuroMambaModel<S>& m, const VecX<S>& h) {
    return m.head_w * h + m.head_b;
}

template <class S>
S bce_logit(const NeuroMambaModel<S>& m, const VecX<S>& h, S s_moca) {
    if (m.config.mode != ModelMode::bce)
        throw data_error("state", "bce_logit: model is not in bce mode");
    const Eigen::Index b = m.config.model_dim;
    return m.bce_w.head(b).dot(h) + m.bce_w(b) * s_moca + m.bce_b(0);
}

struct ModelForwardResult {
    Vector h;       // pooled features, as double for reporting
    Vector output;  // 3 predictions (regression) or {logit} (bce)
};

template <class S>
ModelForwardResult model_forward(const NeuroMambaModel<S>& m, const MatX<S>& x,
                                 const S* s_moca = nullptr) {
    ModelForwardResult r;
    const VecX<S> h = model_pooled(m, x, static_cast<ModelCache<S>*>(nullptr));
    r.h = h.template cast<double>();
    if (m.config.mode == ModelMode::regression) {
        r.output = head_apply(m, h).template cast<double>();
    } else {
        if (!s_moca) throw data_error("data", "model: bce mode requires the MoCA score input");
        r.output = Vector::Constant(1, static_cast<double>(bce_logit(m, h, *s_moca)));
    }
    return r;
}

/* loss = 1/2 ||s - g(h)||^2 + lambda ||h||_1, subgradient of |.| at 0 is 0.
 * Parameter gradients accumulate into g. */
template <class S>
S regression_loss_grad(const NeuroMambaModel<S>& m, const MatX<S>& x, const VecX<S>& s,
                       S lambda_sparse, NeuroMambaModel<S>& g) {
    if (s.size() != 3) throw data_error("shape", "regression loss: target must have 3 scores");
    ModelCache<S> cache;
    const VecX<S> h = model_pooled(m, x, &cache);
    const VecX<S> pred = head_apply(m, h);
    const VecX<S> resid = pred - s;

    S loss = S(0.5) * resid.squaredNorm() + lambda_sparse * h.template lpNorm<1>();

    g.head_w.noalias() += resid * h.transpose();
    g.head_b += resid;
    VecX<S> dh = m.head_w.transpose() * resid;
    dh += lambda_sparse * h.unaryExpr([](S v) { return S(v > S(0) ? 1 : (v < S(0) ? -1 : 0)); });
    model_backward(m, cache, dh, g);
    return loss;
}

/* Stable binary cross entropy on the logit: softplus(z) - y z. */
template <class S>
S bce_loss_grad(const NeuroMambaModel<S>& m, const MatX<S>& x, S s_moca, int label,
                S lambda_sparse, NeuroMambaModel<S>& g) {
    if (label != 0 && label != 1) throw data_error("class", "bce loss: label must be 0 or 1");
    ModelCache<S> cache;
    const VecX<S> h = model_pooled(m, x, &cache);
    const S z = bce_logit(m, h, s_moca);
    const S y = static_cast<S>(label);

    S loss = act::softplus(z) - y * z + lambda_sparse * h.template lpNorm<1>();

    const S dz = act::sigmoid(z) - y;
    const Eigen::Index b = m.config.model_dim;
    g.bce_w.head(b) += dz * h;
    g.bce_w(b) += dz * s_moca;
    g.bce_b(0) += dz;
    VecX<S> dh = dz * m.bce_w.head(b);
    dh += lambda_sparse * h.unaryExpr([](S v) { return S(v > S(0) ? 1 : (v < S(0) ? -1 : 0)); });
    model_backward(m, cache, dh, g);
    return loss;
}

/* Flat view over the model's tensors in visit order; the backing model
 * must outlive the views. */
template <class S>
struct ParamView {
    std::string name;
    S* data = nullptr;
    Eigen::Index count = 0;
};

template <class S>
std::vector<ParamView<S>> parameter_views(NeuroMambaModel<S>& m) {
    std::vector<ParamView<S>> out;
    m.visit([&](const std::string& name, S* data, Eigen::Index r, Eigen::Index c) {
        out.push_back({name, data, r * c});
    });
    return out;
}

template <class S>
S regression_loss_value(const NeuroMambaModel<S>& m, const MatX<S>& x, const VecX<S>& s,
                        S lambda_sparse) {
    const VecX<S> h = model_pooled(m, x, static_cast<ModelCache<S>*>(nullptr));
    const VecX<S> resid = head_apply(m, h) - s;
    return S(0.5) * resid.squaredNorm() + lambda_sparse * h.template lpNorm<1>();
}

template <class S>
S bce_loss_value(const NeuroMambaModel<S>& m, const MatX<S>& x, S s_moca, int label,
                 S lambda_sparse) {
    const VecX<S> h = model_pooled(m, x, static_cast<ModelCache<S>*>(nullptr));
    const S z = bce_logit(m, h, s_moca);
    return act::softplus(z) - static_cast<S>(label) * z + lambda_sparse * h.template lpNorm<1>();
}

/* Checkpoint file: "NMCK" magic, u32 little-endian manifest length, JSON
 * manifest {version, config, trained, tensors: [{name, shape, offset}]},
 * then the concatenated little-endian f32 blob. */
void save_checkpoint_f32(const std::string& path, NeuroMambaModel<float>& model);
void save_checkpoint_f64(const std::string& path, NeuroMambaModel<double>& model);

NeuroMambaModel<float> load_checkpoint_f32(const std::string& path);
NeuroMambaModel<double> load_checkpoint_f64(const std::string& path);

template <class S>
void save_checkpoint(const std::string& path, NeuroMambaModel<S>& model) {
    if constexpr (std::is_same_v<S, float>) save_checkpoint_f32(path, model);
    else save_checkpoint_f64(path, model);
}

template <class S>
NeuroMambaModel<S> load_checkpoint(const std::string& path) {
    if constexpr (std::is_same_v<S, float>) return load_checkpoint_f32(path);
    else return load_checkpoint_f64(path);
}

ModelConfig model_config_from_json_text(const std::string& text, const std::string& origin);
ModelConfig model_config_from_json_file(const std::string& path);
std::string model_config_to_json_text(const ModelConfig& config);

}  // namespace nm
