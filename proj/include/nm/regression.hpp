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

#include <optional>
#include <string>
#include <vector>

#include "nm/common.hpp"

namespace nm {

struct KernelConfig {
    double gamma = 1e-2;  // RBF width
    double ridge = 1.0;   // lambda
};

/* K[i,j] = exp(-gamma * ||P_i - Q_j||^2). */
Matrix rbf_kernel(const Matrix& p, const Matrix& q, double gamma);

struct KRRModel {
    Matrix training_features;  // N x D
    Matrix dual_weights;       // N x C
    Eigen::RowVectorXd bias;   // C (column means of the training scores)
    KernelConfig config;
};

/* Dual kernel ridge: bias = column means of S, then
 * (K + lambda I) dual = S - bias, solved by Cholesky with a symmetric
 * indefinite fallback. */
KRRModel krr_fit(const Matrix& features, const Matrix& scores, const KernelConfig& config);

Matrix krr_predict(const KRRModel& model, const Matrix& features);

/* Leave-one-out predictions with hyperparameters fixed across folds. */
Matrix krr_loocv_predict(const Matrix& features, const Matrix& scores,
                         const KernelConfig& config);

struct GridSearchSpec {
    std::vector<double> gammas = {1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1};
    std::vector<double> ridges = {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3};
};

/* Picks (gamma, lambda) by mean validation RMSE on a random 50/50 split;
 * ties resolve to the earlier grid entry. */
KernelConfig krr_grid_search(const Matrix& features, const Matrix& scores,
                             const GridSearchSpec& grid, std::uint64_t seed);

double pearson_r(const Vector& x, const Vector& y);

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;
};

/* Two-sided permutation test with +1 smoothing:
 * p = (1 + #{|r_perm| >= |r|}) / (n_perm + 1). Permutation streams are
 * derived per index from the seed, so any parallel split gives the same
 * answer. */
PearsonResult pearson_r_p(const Vector& truth, const Vector& pred, int n_perm,
                          std::uint64_t seed);

double rmse(const Vector& truth, const Vector& pred);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocResult {
    std::vector<RocPoint> points;
    double auc = 0.5;
};

/* Threshold sweep over distinct scores (ties grouped, predict positive at
 * score >= threshold); AUC is the Mann-Whitney statistic
 * P(score_pos > score_neg) + 0.5 P(equal). */
RocResult roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct ScoreMetrics {
    double pearson_r = 0.0;
    double p_value = 1.0;
    double rmse = 0.0;
};

struct EvaluationReport {
    std::vector<std::string> subject_ids;
    std::vector<std::string> score_names;
    Matrix truth;      // N x C
    Matrix predicted;  // N x C
    std::vector<ScoreMetrics> metrics;  // per score
    std::optional<RocResult> roc;
};

/* Fills metrics from truth/predicted via pearson_r_p + rmse. */
void finalize_report(EvaluationReport& report, int n_perm, std::uint64_t seed);

/* Plain logistic regression by Newton's method; used by the MoCA-only
 * classification baseline. Returns weights (D) and intercept. */
struct LogisticModel {
    Vector weights;
    double intercept = 0.0;
};

LogisticModel logistic_fit(const Matrix& x, const std::vector<int>& labels, int max_iter = 100,
                           double tol = 1e-10);

Vector logistic_predict_proba(const LogisticModel& model, const Matrix& x);

}  // namespace nm
