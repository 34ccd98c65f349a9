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

#include "nm/model.hpp"

namespace nm {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> entries;

    bool pass(double tol) const { return max_rel_err <= tol; }
};

/* Central differences carry roundoff noise of roughly
 * machine_eps * |loss| / step, so absolute disagreements below 1e-8 are
 * treated as zero rather than inflating the relative error of
 * near-zero gradients. */
inline double gradcheck_rel_err(double analytic, double fd) {
    const double diff = std::abs(analytic - fd);
    if (diff < 1e-8) return 0.0;
    return diff / std::max(std::abs(analytic) + std::abs(fd), 1e-8);
}

/* Central finite differences over every parameter of a 64-bit model on
 * random data, against the analytic gradients. Checks the loss matching
 * the config's mode. */
inline GradCheckResult gradcheck_model(ModelConfig cfg, int t_len, std::uint64_t seed,
                                       double eps0 = 1e-5, double lambda_sparse = 1e-3) {
    cfg.block.model_dim = cfg.model_dim;
    cfg.validate();
    if (t_len < 2) throw usage_error("gradcheck: need at least 2 timepoints");

    auto model = NeuroMambaModel<double>::init(cfg, seed);
    Rng rng(derive_seed(seed, 0xFD));
    MatX<double> x(t_len, cfg.model_dim);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.normal();
    VecX<double> target(3);
    for (int k = 0; k < 3; ++k) target(k) = rng.normal();
    const double moca = rng.normal();
    const int label = static_cast<int>(rng.below(2));

    auto loss_value = [&](const NeuroMambaModel<double>& m) {
        if (cfg.mode == ModelMode::regression)
            return regression_loss_value(m, x, target, lambda_sparse);
        return bce_loss_value(m, x, moca, label, lambda_sparse);
    };

    auto grads = model.zeros_like();
    if (cfg.mode == ModelMode::regression)
        regression_loss_grad(model, x, target, lambda_sparse, grads);
    else
        bce_loss_grad(model, x, moca, label, lambda_sparse, grads);

    auto pv = parameter_views(model);
    auto gv = parameter_views(grads);

    GradCheckResult result;
    for (std::size_t k = 0; k < pv.size(); ++k) {
        GradCheckEntry entry;
        entry.name = pv[k].name;
        for (Eigen::Index i = 0; i < pv[k].count; ++i) {
            const double old = pv[k].data[i];
            const double eps = eps0 * std::max(1.0, std::abs(old));
            pv[k].data[i] = old + eps;
            const double lp = loss_value(model);
            pv[k].data[i] = old - eps;
            const double lm = loss_value(model);
            pv[k].data[i] = old;
            const double fd = (lp - lm) / (2.0 * eps);
            const double analytic = gv[k].data[i];
            entry.max_rel_err = std::max(entry.max_rel_err, gradcheck_rel_err(analytic, fd));
            entry.max_abs_err = std::max(entry.max_abs_err, std::abs(analytic - fd));
        }
        result.max_rel_err = std::max(result.max_rel_err, entry.max_rel_err);
        result.entries.push_back(std::move(entry));
    }
    return result;
}

}  // namespace nm
