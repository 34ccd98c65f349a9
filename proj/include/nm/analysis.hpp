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

#include <json.hpp>

#include "nm/dataio.hpp"
#include "nm/model.hpp"
#include "nm/regression.hpp"

namespace nm {

struct PFIReport {
    std::vector<std::string> score_names;    // C
    std::vector<std::string> region_labels;  // B
    Vector baseline_rmse;                    // C
    Matrix delta_rmse;                       // B x C
    int n_trials = 0;
    std::vector<std::vector<int>> ranking;   // per score: region indices by
                                             // descending delta, ties by index
};

/* Permutation feature importance over cached pooled features. For each
 * region j and trial: shuffle column j across subjects (derived seed per
 * (region, trial)), re-apply the affine head only, record RMSE per score.
 * delta_rmse(j, c) = mean permuted RMSE - baseline. */
PFIReport pfi_head(const Matrix& head_w, const Vector& head_b, const Matrix& pooled,
                   const Matrix& truth, const std::vector<std::string>& score_names,
                   const std::vector<std::string>& region_labels, int n_trials,
                   std::uint64_t seed);

/* N x B matrix of per-subject pooled h-vectors (subjects in parallel). */
template <class S>
Matrix pooled_features(const NeuroMambaModel<S>& model, const Cohort& cohort) {
    const int n = static_cast<int>(cohort.size());
    if (n == 0) throw data_error("format", "cohort has no subjects");
    Matrix pooled(n, model.config.model_dim);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const MatX<S> x = cohort.timeseries[i].values.template cast<S>();
        const VecX<S> h = model_pooled(model, x, static_cast<ModelCache<S>*>(nullptr));
        pooled.row(static_cast<Eigen::Index>(i)) = h.template cast<double>().transpose();
    });
    return pooled;
}

template <class S>
PFIReport pfi(const NeuroMambaModel<S>& model, const Cohort& cohort, int n_trials,
              std::uint64_t seed) {
    if (!model.trained) throw data_error("state", "pfi requires a trained checkpoint");
    if (model.config.mode != ModelMode::regression)
        throw usage_error("pfi: regression checkpoints only");

    const int n = static_cast<int>(cohort.size());
    Matrix truth(n, 3);
    for (int i = 0; i < n; ++i) {
        const auto& rec = cohort.manifest.subjects[static_cast<std::size_t>(i)];
        if (!rec.scores)
            throw data_error("format", "subject " + rec.subject_id + " has no scores");
        for (int k = 0; k < 3; ++k) truth(i, k) = (*rec.scores)[static_cast<std::size_t>(k)];
    }

    const Matrix pooled = pooled_features(model, cohort);
    const Matrix head_w = model.head_w.template cast<double>();
    const Vector head_b = model.head_b.template cast<double>();
    std::vector<std::string> names(cohort.manifest.score_names.begin(),
                                   cohort.manifest.score_names.end());
    return pfi_head(head_w, head_b, pooled, truth, names,
                    cohort.timeseries.front().region_labels, n_trials, seed);
}

nlohmann::json pfi_report_json(const PFIReport& report);

/* Overall metrics plus per-diagnosis subgroups (size >= 3; smaller groups
 * land in "warnings" with metrics omitted). diagnosis may be empty. */
nlohmann::json report_json(const EvaluationReport& report,
                           const std::vector<std::string>& diagnosis, int n_perm,
                           std::uint64_t seed);

/* Rows: subject, score_name, true, pred, diagnosis. */
void write_scatter_csv(const std::string& path, const EvaluationReport& report,
                       const std::vector<std::string>& diagnosis);

/* Columns: fpr, tpr, threshold. */
void write_roc_csv(const std::string& path, const RocResult& roc);

std::string iso_utc_now();

void write_text_file(const std::string& path, const std::string& text);

}  // namespace nm
