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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "nm/gradcheck.hpp"
#include "nm/model.hpp"

using nm::MambaBlockConfig;
using nm::MatX;
using nm::ModelConfig;
using nm::ModelMode;
using nm::NeuroMambaModel;
using nm::VecX;
using testutil::TempDir;

namespace {

ModelConfig tiny_config(int model_dim, int n_layers, int state_size, ModelMode mode) {
    ModelConfig cfg;
    cfg.model_dim = model_dim;
    cfg.n_layers = n_layers;
    cfg.mode = mode;
    cfg.block.model_dim = model_dim;
    cfg.block.state_size = state_size;
    cfg.block.expand = 2;
    cfg.block.conv_width = 2;
    cfg.block.delta_rank = 1;
    return cfg;
}

template <class S>
MatX<S> random_input(Eigen::Index t_len, Eigen::Index b_len, std::uint64_t seed) {
    nm::Rng rng(seed);
    MatX<S> x(t_len, b_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index b = 0; b < b_len; ++b) x(t, b) = static_cast<S>(rng.normal());
    return x;
}

// deterministic non-repeating parameter pattern for trace oracles
template <class S>
void fill_pattern(NeuroMambaModel<S>& m) {
    long idx = 0;
    m.visit([&](const std::string&, S* data, Eigen::Index r, Eigen::Index c) {
        for (Eigen::Index i = 0; i < r * c; ++i)
            data[i] = static_cast<S>(0.3 * std::sin(0.7 * static_cast<double>(++idx)));
    });
}

// straight-line scalar recomputation of one block, mirroring the
// documented stages rather than the library's vectorized path
MatX<double> reference_block(const nm::MambaBlockParams<double>& p, const MambaBlockConfig& cfg,
                             const MatX<double>& f) {
    const Eigen::Index t_len = f.rows(), b_len = f.cols();
    const Eigen::Index e_len = cfg.expanded(), w_len = cfg.conv_width;
    const Eigen::Index l_len = cfg.state_size, r_len = cfg.rank();

    MatX<double> u(t_len, e_len), hg(t_len, e_len), z(t_len, e_len), delta(t_len, e_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index e = 0; e < e_len; ++e) {
            double acc = p.b_in_h(e), accz = p.b_in_z(e);
            for (Eigen::Index b = 0; b < b_len; ++b) {
                acc += f(t, b) * p.w_in_h(b, e);
                accz += f(t, b) * p.w_in_z(b, e);
            }
            u(t, e) = acc;
            z(t, e) = nm::act::silu(accz);
        }
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index e = 0; e < e_len; ++e) {
            double acc = p.conv_b(e);
            for (Eigen::Index w = 0; w < w_len; ++w) {
                const Eigen::Index src = t - (w_len - 1) + w;
                if (src >= 0) acc += p.conv_w(w, e) * u(src, e);
            }
            hg(t, e) = nm::act::silu(acc);
        }
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index e = 0; e < e_len; ++e) {
            double acc = p.dt_bias(e);
            for (Eigen::Index r = 0; r < r_len; ++r) {
                double mid = 0.0;
                for (Eigen::Index e2 = 0; e2 < e_len; ++e2) mid += hg(t, e2) * p.w_dt_lo(e2, r);
                acc += mid * p.w_dt_hi(r, e);
            }
            delta(t, e) = nm::act::softplus(acc);
        }
    MatX<double> bm = MatX<double>::Zero(t_len, l_len), cm = MatX<double>::Zero(t_len, l_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index l = 0; l < l_len; ++l)
            for (Eigen::Index e = 0; e < e_len; ++e) {
                bm(t, l) += hg(t, e) * p.w_b(e, l);
                cm(t, l) += hg(t, e) * p.w_c(e, l);
            }

    MatX<double> y(t_len, e_len);
    for (Eigen::Index e = 0; e < e_len; ++e) {
        std::vector<double> h(static_cast<std::size_t>(l_len), 0.0);
        for (Eigen::Index t = 0; t < t_len; ++t) {
            double out = 0.0;
            for (Eigen::Index l = 0; l < l_len; ++l) {
                const double zarg = delta(t, e) * p.a(e, l);
                const double abar = std::exp(zarg);
                const double bbar = nm::zoh_phi(zarg) * delta(t, e) * bm(t, l);
                h[static_cast<std::size_t>(l)] =
                    abar * h[static_cast<std::size_t>(l)] + bbar * hg(t, e);
                out += cm(t, l) * h[static_cast<std::size_t>(l)];
            }
            y(t, e) = out;
        }
    }

    MatX<double> result(t_len, b_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (Eigen::Index b = 0; b < b_len; ++b) {
            double acc = p.b_out(b);
            for (Eigen::Index e = 0; e < e_len; ++e) acc += y(t, e) * z(t, e) * p.w_out(e, b);
            result(t, b) = acc;
        }
    return result;
}

MatX<double> reference_layer(const nm::MambaPlusParams<double>& layer,
                             const MambaBlockConfig& cfg, const MatX<double>& f) {
    const Eigen::Index t_len = f.rows(), b_len = f.cols();
    const MatX<double> ffwd = reference_block(layer.fwd, cfg, f);
    const MatX<double> fbwd =
        reference_block(layer.bwd, cfg, f.colwise().reverse()).colwise().reverse();

    MatX<double> out(t_len, b_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        double ms = 0.0;
        std::vector<double> gd(static_cast<std::size_t>(b_len));
        for (Eigen::Index b = 0; b < b_len; ++b) {
            gd[static_cast<std::size_t>(b)] = layer.lambda1(b) * ffwd(t, b) - fbwd(t, b);
            ms += gd[static_cast<std::size_t>(b)] * gd[static_cast<std::size_t>(b)];
        }
        ms /= static_cast<double>(b_len);
        const double scale = std::sqrt(ms + nm::kRmsEps);
        for (Eigen::Index b = 0; b < b_len; ++b)
            out(t, b) = layer.lambda2(b) * gd[static_cast<std::size_t>(b)] * layer.gain(b) / scale +
                        f(t, b);
    }
    return out;
}

}  // namespace

TEST_CASE("mamba block output is causal to the bit") {
    const auto cfg = tiny_config(3, 1, 4, ModelMode::regression);
    const auto m = NeuroMambaModel<double>::init(cfg, 5);
    MambaBlockConfig bc = cfg.block;

    auto x = random_input<double>(12, 3, 6);
    const MatX<double> base = nm::mamba_block_forward<double>(m.layers[0].fwd, bc, x, nullptr);
    const Eigen::Index t0 = 7;
    x(t0, 1) += 2.5;
    const MatX<double> bumped = nm::mamba_block_forward<double>(m.layers[0].fwd, bc, x, nullptr);
    for (Eigen::Index t = 0; t < t0; ++t)
        for (Eigen::Index b = 0; b < 3; ++b) CHECK(bumped(t, b) == base(t, b));
    CHECK((bumped.row(t0) - base.row(t0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero input with zero biases maps to zero block output") {
    const auto cfg = tiny_config(3, 1, 4, ModelMode::regression);
    const auto m = NeuroMambaModel<double>::init(cfg, 7);  // init zeroes all biases but dt
    MambaBlockConfig bc = cfg.block;
    const MatX<double> x = MatX<double>::Zero(6, 3);
    const MatX<double> out = nm::mamba_block_forward<double>(m.layers[0].fwd, bc, x, nullptr);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero lambda2 reduces a layer to the residual passthrough") {
    const auto cfg = tiny_config(4, 1, 4, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 9);
    m.layers[0].lambda2.setZero();
    MambaBlockConfig bc = cfg.block;
    const auto x = random_input<double>(10, 4, 10);
    const MatX<double> out = nm::mambapp_forward<double>(m.layers[0], bc, x, nullptr);
    CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rmsnorm output has unit root-mean-square under unit gain") {
    const auto cfg = tiny_config(8, 1, 4, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 11);
    // fresh-init block outputs sit near the eps floor of the normalizer;
    // scale them up so the mean-square term dominates eps
    m.layers[0].fwd.w_out *= 1e5;
    m.layers[0].bwd.w_out *= 1e5;
    MambaBlockConfig bc = cfg.block;
    const auto x = random_input<double>(16, 8, 12);
    nm::LayerCache<double> cache;
    nm::mambapp_forward<double>(m.layers[0], bc, x, &cache);
    for (Eigen::Index t = 0; t < 16; ++t) {
        const double rms =
            std::sqrt(cache.rnorm.row(t).squaredNorm() / static_cast<double>(8));
        CHECK(rms == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("bidirectional halves are mirror images on palindromic input") {
    const auto cfg = tiny_config(3, 1, 4, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 13);
    m.layers[0].bwd = m.layers[0].fwd;  // shared weights
    MambaBlockConfig bc = cfg.block;

    MatX<double> x = random_input<double>(5, 3, 14);
    x.row(4) = x.row(0);
    x.row(3) = x.row(1);

    nm::LayerCache<double> cache;
    nm::mambapp_forward<double>(m.layers[0], bc, x, &cache);
    CHECK((cache.f_bwd - MatX<double>(cache.f_fwd.colwise().reverse()))
              .cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model output is not invariant to time reversal") {
    const auto cfg = tiny_config(3, 1, 4, ModelMode::regression);
    const auto m = NeuroMambaModel<double>::init(cfg, 15);
    const auto x = random_input<double>(9, 3, 16);
    const VecX<double> fwd = nm::model_pooled<double>(m, x, nullptr);
    const VecX<double> rev =
        nm::model_pooled<double>(m, MatX<double>(x.colwise().reverse()), nullptr);
    CHECK((fwd - rev).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("single layer with zero lambda2 and zero head bias is a linear readout") {
    const auto cfg = tiny_config(4, 1, 8, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 17);
    m.layers[0].lambda2.setZero();
    m.head_b.setZero();
    const auto x = random_input<double>(12, 4, 18);
    const auto r = nm::model_forward<double>(m, x);
    const VecX<double> expected = m.head_w * x.colwise().mean().transpose();
    CHECK((r.output - expected).cwiseAbs().maxCoeff() < 1e-12);

    SUBCASE("constant-in-time input pools to the channel vector") {
        MatX<double> c(6, 4);
        for (Eigen::Index t = 0; t < 6; ++t) c.row(t) << 1.0, -2.0, 0.5, 3.0;
        const auto rc = nm::model_forward<double>(m, c);
        CHECK(rc.h(0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(rc.h(1) == doctest::Approx(-2.0).epsilon(1e-14));
        CHECK(rc.h(3) == doctest::Approx(3.0).epsilon(1e-14));
    }
}

TEST_CASE("full forward matches a straight-line scalar recomputation") {
    const auto cfg = tiny_config(2, 1, 2, ModelMode::regression);
    auto m = NeuroMambaModel<double>::allocate(cfg);
    fill_pattern(m);
    const auto x = random_input<double>(3, 2, 19);

    MambaBlockConfig bc = cfg.block;
    const MatX<double> lib_block = nm::mamba_block_forward<double>(m.layers[0].fwd, bc, x, nullptr);
    const MatX<double> ref_block = reference_block(m.layers[0].fwd, bc, x);
    CHECK((lib_block - ref_block).cwiseAbs().maxCoeff() < 1e-10);

    const MatX<double> lib_layer = nm::mambapp_forward<double>(m.layers[0], bc, x, nullptr);
    const MatX<double> ref_layer = reference_layer(m.layers[0], bc, x);
    CHECK((lib_layer - ref_layer).cwiseAbs().maxCoeff() < 1e-10);

    const VecX<double> pooled = nm::model_pooled<double>(m, x, nullptr);
    const VecX<double> ref_pooled = ref_layer.colwise().mean().transpose();
    CHECK((pooled - ref_pooled).cwiseAbs().maxCoeff() < 1e-10);

    const auto fwd = nm::model_forward<double>(m, x);
    const VecX<double> ref_pred = m.head_w * ref_pooled + m.head_b;
    CHECK((fwd.output - ref_pred).cwiseAbs().maxCoeff() < 1e-10);

    SUBCASE("a deeper model chains the same layer math") {
        const auto cfg2 = tiny_config(2, 2, 2, ModelMode::regression);
        auto m2 = NeuroMambaModel<double>::allocate(cfg2);
        fill_pattern(m2);
        const MatX<double> mid = reference_layer(m2.layers[0], bc, x);
        const MatX<double> ref2 = reference_layer(m2.layers[1], bc, mid);
        const VecX<double> pooled2 = nm::model_pooled<double>(m2, x, nullptr);
        CHECK((pooled2 - VecX<double>(ref2.colwise().mean().transpose()))
                  .cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("initialization follows the documented scheme") {
    const auto cfg = tiny_config(8, 2, 6, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 21);

    for (const auto& layer : m.layers) {
        CHECK((layer.lambda1.array() == 1.0).all());
        CHECK((layer.lambda2.array() == 1.0).all());
        CHECK((layer.gain.array() == 1.0).all());
        for (const auto* block : {&layer.fwd, &layer.bwd}) {
            CHECK(block->b_in_h.cwiseAbs().maxCoeff() == 0.0);
            CHECK(block->b_in_z.cwiseAbs().maxCoeff() == 0.0);
            CHECK(block->conv_b.cwiseAbs().maxCoeff() == 0.0);
            CHECK(block->b_out.cwiseAbs().maxCoeff() == 0.0);
            for (Eigen::Index e = 0; e < block->a.rows(); ++e)
                for (Eigen::Index l = 0; l < block->a.cols(); ++l)
                    CHECK(block->a(e, l) == -static_cast<double>(l + 1));
            for (Eigen::Index e = 0; e < block->dt_bias.size(); ++e) {
                const double dt = nm::act::softplus(block->dt_bias(e));
                CHECK(dt >= 1e-3 * (1.0 - 1e-9));
                CHECK(dt <= 0.1 * (1.0 + 1e-9));
            }
        }
    }
    CHECK(m.head_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(m.trained);

    SUBCASE("same seed reproduces, different seed varies") {
        auto m2 = NeuroMambaModel<double>::init(cfg, 21);
        auto m3 = NeuroMambaModel<double>::init(cfg, 22);
        CHECK((m.head_w - m2.head_w).cwiseAbs().maxCoeff() == 0.0);
        CHECK((m.layers[0].fwd.w_in_h - m2.layers[0].fwd.w_in_h).cwiseAbs().maxCoeff() == 0.0);
        CHECK((m.layers[0].fwd.w_in_h - m3.layers[0].fwd.w_in_h).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("every live parameter receives a gradient") {
    SUBCASE("regression mode") {
        const auto cfg = tiny_config(4, 2, 4, ModelMode::regression);
        auto m = NeuroMambaModel<double>::init(cfg, 23);
        auto g = m.zeros_like();
        const auto x = random_input<double>(8, 4, 24);
        VecX<double> s(3);
        s << 0.5, -1.0, 2.0;
        nm::regression_loss_grad<double>(m, x, s, 1e-3, g);
        for (const auto& view : nm::parameter_views(g)) {
            double peak = 0.0;
            for (Eigen::Index i = 0; i < view.count; ++i)
                peak = std::max(peak, std::abs(view.data[i]));
            INFO(view.name);
            CHECK(peak > 0.0);
        }
    }

    SUBCASE("bce mode leaves only the unused regression head silent") {
        const auto cfg = tiny_config(4, 1, 4, ModelMode::bce);
        auto m = NeuroMambaModel<double>::init(cfg, 25);
        auto g = m.zeros_like();
        const auto x = random_input<double>(8, 4, 26);
        nm::bce_loss_grad<double>(m, x, 0.7, 1, 1e-3, g);
        for (const auto& view : nm::parameter_views(g)) {
            double peak = 0.0;
            for (Eigen::Index i = 0; i < view.count; ++i)
                peak = std::max(peak, std::abs(view.data[i]));
            INFO(view.name);
            if (view.name == "head.w" || view.name == "head.b") CHECK(peak == 0.0);
            else CHECK(peak > 0.0);
        }
    }
}

TEST_CASE("loss values at pinned points") {
    const auto cfg = tiny_config(2, 1, 2, ModelMode::regression);
    auto m = NeuroMambaModel<double>::init(cfg, 27);

    SUBCASE("perfect prediction with zero sparsity is zero loss") {
        const auto x = random_input<double>(6, 2, 28);
        const auto r = nm::model_forward<double>(m, x);
        VecX<double> s = r.output;
        CHECK(nm::regression_loss_value<double>(m, x, s, 0.0) == 0.0);
    }

    SUBCASE("sparsity term is lambda times the pooled L1 norm") {
        // lambda2 = 0 pins the pooled vector to the input time-mean [1, -2]
        m.layers[0].lambda2.setZero();
        MatX<double> x(4, 2);
        for (Eigen::Index t = 0; t < 4; ++t) x.row(t) << 1.0, -2.0;
        const auto r = nm::model_forward<double>(m, x);
        const VecX<double> s = r.output;
        const double lambda = 0.37;
        const double loss = nm::regression_loss_value<double>(m, x, s, lambda);
        CHECK(loss == doctest::Approx(3.0 * lambda).epsilon(1e-12));
    }
}

TEST_CASE("bce loss values at pinned points") {
    const auto cfg = tiny_config(2, 1, 2, ModelMode::bce);
    auto m = NeuroMambaModel<double>::init(cfg, 29);
    const auto x = random_input<double>(6, 2, 30);

    SUBCASE("zero logit costs ln 2") {
        m.bce_w.setZero();
        m.bce_b.setZero();
        const double loss = nm::bce_loss_value<double>(m, x, 0.4, 1, 0.0);
        CHECK(loss == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    }

    SUBCASE("saturated correct logit costs almost nothing") {
        m.bce_w.setZero();
        m.bce_b.setConstant(20.0);
        const double loss = nm::bce_loss_value<double>(m, x, 0.4, 1, 0.0);
        CHECK(loss < 1e-8);
        CHECK(loss > 0.0);
    }

    SUBCASE("regression-mode model rejects the bce path") {
        const auto cfg_r = tiny_config(2, 1, 2, ModelMode::regression);
        auto mr = NeuroMambaModel<double>::init(cfg_r, 31);
        VecX<double> h = VecX<double>::Zero(2);
        CHECK_THROWS_AS(nm::bce_logit<double>(mr, h, 0.0), nm::Error);
    }
}

TEST_CASE("analytic gradients pass the finite-difference check") {
    ModelConfig cfg;
    cfg.model_dim = 4;
    cfg.n_layers = 2;
    cfg.block.state_size = 4;
    cfg.block.expand = 2;
    cfg.block.conv_width = 3;
    cfg.mode = ModelMode::regression;
    const auto result = nm::gradcheck_model(cfg, 8, 33);
    INFO("max rel err ", result.max_rel_err);
    CHECK(result.pass(1e-4));

    SUBCASE("bce mode") {
        cfg.mode = ModelMode::bce;
        cfg.n_layers = 1;
        const auto r2 = nm::gradcheck_model(cfg, 6, 35);
        CHECK(r2.pass(1e-4));
    }
}

TEST_CASE("checkpoints round-trip bitwise in 32-bit") {
    TempDir dir;
    const auto cfg = tiny_config(3, 2, 4, ModelMode::regression);
    auto m = NeuroMambaModel<float>::init(cfg, 37);
    m.trained = true;
    const std::string path = dir.path() + "/model.nmck";
    nm::save_checkpoint(path, m);

    auto back = nm::load_checkpoint<float>(path);
    CHECK(back.trained);
    CHECK(back.config.model_dim == 3);
    CHECK(back.config.n_layers == 2);
    CHECK(back.config.mode == ModelMode::regression);
    CHECK(back.config.block.state_size == 4);

    const auto va = nm::parameter_views(m);
    auto vb = nm::parameter_views(back);
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < va.size(); ++i) {
        CHECK(va[i].name == vb[i].name);
        REQUIRE(va[i].count == vb[i].count);
        for (Eigen::Index j = 0; j < va[i].count; ++j)
            CHECK(va[i].data[j] == vb[i].data[j]);
    }

    SUBCASE("64-bit load of the same file agrees to float precision") {
        auto wide = nm::load_checkpoint<double>(path);
        auto vw = nm::parameter_views(wide);
        for (std::size_t i = 0; i < va.size(); ++i)
            for (Eigen::Index j = 0; j < va[i].count; ++j)
                CHECK(static_cast<float>(vw[i].data[j]) == va[i].data[j]);
    }
}

TEST_CASE("checkpoint corruption is diagnosed") {
    TempDir dir;
    const auto cfg = tiny_config(3, 1, 4, ModelMode::regression);
    auto m = NeuroMambaModel<float>::init(cfg, 39);
    const std::string path = dir.path() + "/model.nmck";
    nm::save_checkpoint(path, m);
    const std::string bytes = testutil::read_file(path);

    SUBCASE("blob truncated by four bytes") {
        testutil::write_file(path, bytes.substr(0, bytes.size() - 4));
        try {
            nm::load_checkpoint<float>(path);
            FAIL("expected truncation error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "truncation");
        }
    }

    SUBCASE("wrong magic") {
        std::string bad = bytes;
        bad[0] = 'X';
        testutil::write_file(path, bad);
        try {
            nm::load_checkpoint<float>(path);
            FAIL("expected format error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "format");
        }
    }

    SUBCASE("unsupported version") {
        std::string bad = bytes;
        const auto pos = bad.find("\"version\":1");
        REQUIRE(pos != std::string::npos);
        bad[pos + 10] = '9';
        testutil::write_file(path, bad);
        try {
            nm::load_checkpoint<float>(path);
            FAIL("expected version error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "version");
        }
    }

    SUBCASE("config/tensor shape mismatch names the parameter") {
        std::string bad = bytes;
        const auto pos = bad.find("\"model_dim\":3");
        REQUIRE(pos != std::string::npos);
        bad[pos + 12] = '4';
        testutil::write_file(path, bad);
        try {
            nm::load_checkpoint<float>(path);
            FAIL("expected shape error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "shape");
            CHECK(std::string(e.what()).find("w_in_h") != std::string::npos);
        }
    }
}

TEST_CASE("model config json round-trip") {
    const auto cfg = tiny_config(5, 3, 8, ModelMode::bce);
    const std::string text = nm::model_config_to_json_text(cfg);
    const ModelConfig back = nm::model_config_from_json_text(text, "test");
    CHECK(back.model_dim == 5);
    CHECK(back.n_layers == 3);
    CHECK(back.mode == ModelMode::bce);
    CHECK(back.block.state_size == 8);
    CHECK(back.block.expand == 2);
    CHECK(back.block.conv_width == 2);
    CHECK(back.block.delta_rank == 1);

    SUBCASE("invalid mode is rejected") {
        CHECK_THROWS_AS(nm::model_config_from_json_text(
                            R"({"model_dim": 4, "mode": "softmax"})", "test"),
                        nm::Error);
    }
}

TEST_CASE("parameter views cover the whole model") {
    const auto cfg = tiny_config(4, 2, 4, ModelMode::bce);
    auto m = NeuroMambaModel<double>::init(cfg, 41);
    const auto views = nm::parameter_views(m);
    Eigen::Index total = 0;
    for (const auto& v : views) total += v.count;
    CHECK(total == m.parameter_count());
    CHECK(views.front().name == "layers.0.fwd.w_in_h");
    CHECK(views.back().name == "bce.b");
}
