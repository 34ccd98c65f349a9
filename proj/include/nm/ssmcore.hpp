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

#include <cmath>

#include "nm/common.hpp"

namespace nm {

/* Zero-order-hold discretization of a diagonal continuous pair (a, b):
 *   a_bar = exp(delta a)
 *   b_bar = (delta a)^(-1) (exp(delta a) - 1) delta b
 * The (e^z - 1)/z factor switches to its Taylor series
 * 1 + z/2 + z^2/6 + z^3/24 below |z| = 2e-3 to avoid cancellation;
 * the derivative cancels twice, so it switches at the same cut. */

inline constexpr double kZohTaylorCut = 2e-3;

template <class S>
S zoh_phi(S z) {
    if (std::abs(z) < static_cast<S>(kZohTaylorCut))
        return S(1) + z / S(2) + z * z / S(6) + z * z * z / S(24);
    return (std::exp(z) - S(1)) / z;
}

// d/dz of zoh_phi
template <class S>
S zoh_phi_prime(S z) {
    if (std::abs(z) < static_cast<S>(kZohTaylorCut))
        return S(0.5) + z / S(3) + z * z / S(8) + z * z * z / S(30);
    return (std::exp(z) * (z - S(1)) + S(1)) / (z * z);
}

template <class S>
struct ZohResult {
    S a_bar;
    S b_bar;
};

template <class S>
ZohResult<S> zoh_discretize(S a, S b, S delta) {
    if (!(delta > S(0))) throw data_error("domain", "zoh_discretize: delta must be positive");
    const S z = delta * a;
    return {std::exp(z), zoh_phi(z) * delta * b};
}

/* One scan channel: diagonal state matrix a_diag (L), per-timestep step
 * sizes delta (T), input/output mixing vectors b_in and c_out (T x L). */
template <class S>
struct SSMParameters {
    VecX<S> a_diag;
    VecX<S> delta;
    MatX<S> b_in;
    MatX<S> c_out;

    Eigen::Index state_size() const { return a_diag.size(); }
};

enum class ScanMode { sequential, parallel };

/* Saved intermediates are stored state-major (L x T, column t = step t)
 * so the time loop touches contiguous memory. */
template <class S>
struct ScanOutput {
    VecX<S> y;            // T
    VecX<S> final_state;  // L
    MatX<S> h;            // L x T
    MatX<S> a_bar;        // L x T
    MatX<S> b_bar;        // L x T
    bool saved = false;
};

template <class S>
struct ScanGradients {
    VecX<S> dx;      // T
    VecX<S> da;      // L
    VecX<S> ddelta;  // T
    MatX<S> db;      // T x L
    MatX<S> dc;      // T x L
};

// fixed combine granularity; results must not depend on the worker count
inline constexpr Eigen::Index kScanChunk = 64;

namespace detail {

template <class S>
void zoh_arrays(const Eigen::Ref<const VecX<S>>& a_diag, const Eigen::Ref<const VecX<S>>& delta,
                const Eigen::Ref<const MatX<S>>& b_in, MatX<S>& a_bar, MatX<S>& b_bar) {
    // z(l, t) = delta_t * a_l
    ArrXX<S> z = (a_diag * delta.transpose()).array();
    a_bar = z.exp().matrix();
    ArrXX<S> phi = (z.abs() < S(kZohTaylorCut))
                       .select(S(1) + z / S(2) + z.square() / S(6) + z.cube() / S(24),
                               (a_bar.array() - S(1)) / z);
    // b scaled by delta, transposed to L x T
    ArrXX<S> db_t = b_in.transpose().array().rowwise() * delta.transpose().array();
    b_bar = (phi * db_t).matrix();
}

}  // namespace detail

/* h_t = a_bar_t (.) h_{t-1} + b_bar_t x_t;  y_t = <c_t, h_t>;  h_0 = 0.
 * Parallel mode runs the same recurrence as a prefix over affine maps
 * (a1,b1) o (a2,b2) = (a2 (.) a1, a2 (.) b1 + b2) in fixed chunks of
 * kScanChunk steps: per-chunk composition, cross-chunk combine, re-scan. */
template <class S>
ScanOutput<S> selective_scan(const Eigen::Ref<const VecX<S>>& a_diag,
                             const Eigen::Ref<const VecX<S>>& delta,
                             const Eigen::Ref<const MatX<S>>& b_in,
                             const Eigen::Ref<const MatX<S>>& c_out,
                             const Eigen::Ref<const VecX<S>>& x, ScanMode mode,
                             bool save_intermediates = false) {
    const Eigen::Index t_len = x.size();
    const Eigen::Index l_len = a_diag.size();
    if (delta.size() != t_len || b_in.rows() != t_len || c_out.rows() != t_len ||
        b_in.cols() != l_len || c_out.cols() != l_len)
        throw data_error("shape", "selective_scan: inconsistent parameter shapes");
    for (Eigen::Index t = 0; t < t_len; ++t)
        if (!(delta(t) > S(0)))
            throw data_error("domain", "selective_scan: delta must be positive at t=" +
                                           std::to_string(t));

    ScanOutput<S> out;
    out.y.resize(t_len);
    out.h.resize(l_len, t_len);
    detail::zoh_arrays<S>(a_diag, delta, b_in, out.a_bar, out.b_bar);

    const MatX<S> c_t = c_out.transpose();  // L x T

    if (mode == ScanMode::sequential || t_len <= kScanChunk) {
        VecX<S> h = VecX<S>::Zero(l_len);
        for (Eigen::Index t = 0; t < t_len; ++t) {
            h = (out.a_bar.col(t).array() * h.array() + out.b_bar.col(t).array() * x(t)).matrix();
            out.h.col(t) = h;
            out.y(t) = c_t.col(t).dot(h);
        }
    } else {
        const Eigen::Index n_chunks = (t_len + kScanChunk - 1) / kScanChunk;
        MatX<S> prod(l_len, n_chunks);  // chunk-composed multiplier
        MatX<S> accum(l_len, n_chunks); // chunk-composed offset
        parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t ci) {
            const Eigen::Index c = static_cast<Eigen::Index>(ci);
            const Eigen::Index lo = c * kScanChunk;
            const Eigen::Index hi = std::min(t_len, lo + kScanChunk);
            ArrX<S> p = ArrX<S>::Ones(l_len);
            ArrX<S> q = ArrX<S>::Zero(l_len);
            for (Eigen::Index t = lo; t < hi; ++t) {
                const auto at = out.a_bar.col(t).array();
                p *= at;
                q = at * q + out.b_bar.col(t).array() * x(t);
            }
            prod.col(c) = p.matrix();
            accum.col(c) = q.matrix();
        });

        MatX<S> incoming(l_len, n_chunks);  // state entering each chunk
        VecX<S> state = VecX<S>::Zero(l_len);
        for (Eigen::Index c = 0; c < n_chunks; ++c) {
            incoming.col(c) = state;
            state = (prod.col(c).array() * state.array() + accum.col(c).array()).matrix();
        }

        parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t ci) {
            const Eigen::Index c = static_cast<Eigen::Index>(ci);
            const Eigen::Index lo = c * kScanChunk;
            const Eigen::Index hi = std::min(t_len, lo + kScanChunk);
            ArrX<S> h = incoming.col(c).array();
            for (Eigen::Index t = lo; t < hi; ++t) {
                h = out.a_bar.col(t).array() * h + out.b_bar.col(t).array() * x(t);
                out.h.col(t) = h.matrix();
                out.y(t) = c_t.col(t).dot(out.h.col(t));
            }
        });
    }

    out.final_state = t_len > 0 ? VecX<S>(out.h.col(t_len - 1)) : VecX<S>::Zero(l_len);
    out.saved = true;
    if (!save_intermediates) {
        // callers that only want y may drop the replay buffers
        out.a_bar.resize(0, 0);
        out.b_bar.resize(0, 0);
        out.h.resize(0, 0);
        out.saved = false;
    }
    return out;
}

template <class S>
ScanOutput<S> selective_scan(const SSMParameters<S>& params, const VecX<S>& x, ScanMode mode,
                             bool save_intermediates = false) {
    return selective_scan<S>(params.a_diag, params.delta, params.b_in, params.c_out, x, mode,
                             save_intermediates);
}

/* Reverse replay off the saved (h, a_bar, b_bar). With g_t = dL/dh_t
 * accumulated backwards (g_t = dy_t c_t + a_bar_{t+1} (.) g_{t+1}):
 *   dc_t     = dy_t h_t
 *   da_bar_t = g_t (.) h_{t-1},   db_bar_t = g_t x_t,   dx_t = <b_bar_t, g_t>
 * then through the discretization, with z = delta_t a and phi as above:
 *   db_t     = db_bar_t (.) phi(z) delta_t
 *   ddelta_t = sum_l [ da_bar a a_bar + db_bar b (phi'(z) a delta_t + phi(z)) ]
 *   da_l    += da_bar delta_t a_bar + db_bar b delta_t^2 phi'(z) */
template <class S>
ScanGradients<S> scan_backward(const Eigen::Ref<const VecX<S>>& a_diag,
                               const Eigen::Ref<const VecX<S>>& delta,
                               const Eigen::Ref<const MatX<S>>& b_in,
                               const Eigen::Ref<const MatX<S>>& c_out,
                               const Eigen::Ref<const VecX<S>>& x, const ScanOutput<S>& saved,
                               const Eigen::Ref<const VecX<S>>& dy) {
    if (!saved.saved)
        throw data_error("state", "scan_backward: forward pass did not save intermediates");
    const Eigen::Index t_len = x.size();
    const Eigen::Index l_len = a_diag.size();
    if (dy.size() != t_len) throw data_error("shape", "scan_backward: dy length mismatch");

    ScanGradients<S> g;
    g.dx.setZero(t_len);
    g.da.setZero(l_len);
    g.ddelta.setZero(t_len);
    MatX<S> db_t(l_len, t_len);  // transposed accumulation, contiguous per step
    MatX<S> dc_t(l_len, t_len);

    // phi and phi' over the whole grid, reusing the saved exponentials
    ArrXX<S> z = (a_diag * delta.transpose()).array();
    ArrXX<S> phi = (z.abs() < S(kZohTaylorCut))
                       .select(S(1) + z / S(2) + z.square() / S(6) + z.cube() / S(24),
                               (saved.a_bar.array() - S(1)) / z);
    ArrXX<S> phip = (z.abs() < S(kZohTaylorCut))
                        .select(S(0.5) + z / S(3) + z.square() / S(8) + z.cube() / S(30),
                                (saved.a_bar.array() * (z - S(1)) + S(1)) / z.square());

    const MatX<S> b_tr = b_in.transpose();   // L x T
    const MatX<S> c_tr = c_out.transpose();  // L x T

    ArrX<S> carry = ArrX<S>::Zero(l_len);  // dL/dh_t
    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
        if (t == t_len - 1)
            carry = dy(t) * c_tr.col(t).array();
        else
            carry = dy(t) * c_tr.col(t).array() + saved.a_bar.col(t + 1).array() * carry;

        dc_t.col(t) = (dy(t) * saved.h.col(t).array()).matrix();

        const ArrX<S> h_prev =
            t > 0 ? ArrX<S>(saved.h.col(t - 1).array()) : ArrX<S>::Zero(l_len);
        const ArrX<S> da_bar = carry * h_prev;
        const ArrX<S> db_bar = carry * x(t);

        g.dx(t) = (saved.b_bar.col(t).array() * carry).sum();
        db_t.col(t) = (db_bar * phi.col(t) * delta(t)).matrix();

        const ArrX<S> a = a_diag.array();
        const ArrX<S> ab = saved.a_bar.col(t).array();
        const ArrX<S> bb = b_tr.col(t).array();
        g.ddelta(t) = (da_bar * a * ab).sum() +
                      (db_bar * bb * (phip.col(t) * a * delta(t) + phi.col(t))).sum();
        g.da += ((da_bar * delta(t) * ab) +
                 (db_bar * bb * delta(t) * delta(t) * phip.col(t))).matrix();
    }

    g.db = db_t.transpose();
    g.dc = dc_t.transpose();
    return g;
}

template <class S>
ScanGradients<S> scan_backward(const SSMParameters<S>& params, const VecX<S>& x,
                               const ScanOutput<S>& saved, const VecX<S>& dy) {
    return scan_backward<S>(params.a_diag, params.delta, params.b_in, params.c_out, x, saved, dy);
}

}  // namespace nm
