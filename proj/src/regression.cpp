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

#include "nm/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nm {

Matrix rbf_kernel(const Matrix& p, const Matrix& q, double gamma) {
    if (p.cols() != q.cols())
        throw data_error("shape", "rbf_kernel: dimension mismatch (" + std::to_string(p.cols()) +
                                      " vs " + std::to_string(q.cols()) + ")");
    if (!p.allFinite() || !q.allFinite())
        throw data_error("data", "rbf_kernel: non-finite input");
    const Vector pn = p.rowwise().squaredNorm();
    const Vector qn = q.rowwise().squaredNorm();
    Matrix sq = (-2.0 * p * q.transpose()).colwise() + pn;
    sq = sq.rowwise() + qn.transpose();
    return (-gamma * sq.cwiseMax(0.0)).array().exp();
}

KRRModel krr_fit(const Matrix& features, const Matrix& scores, const KernelConfig& config) {
    if (features.rows() != scores.rows())
        throw data_error("shape", "krr_fit: feature/score row mismatch");
    if (features.rows() < 2) throw data_error("data", "krr_fit: needs N >= 2 subjects");
    if (config.gamma <= 0.0 || config.ridge <= 0.0)
        throw data_error("data", "krr_fit: gamma and ridge must be positive");

    KRRModel model;
    model.config = config;
    model.training_features = features;
    model.bias = scores.colwise().mean();
    const Matrix centered = scores.rowwise() - model.bias;

    Matrix gram = rbf_kernel(features, features, config.gamma);
    gram.diagonal().array() += config.ridge;

    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) {
        model.dual_weights = llt.solve(centered);
    } else {
        Eigen::LDLT<Matrix> ldlt(gram);
        if (ldlt.info() != Eigen::Success)
            throw numeric_error("solve", "krr_fit: kernel system factorization failed");
        model.dual_weights = ldlt.solve(centered);
    }
    if (!model.dual_weights.allFinite())
        throw numeric_error("solve", "krr_fit: non-finite dual weights");
    return model;
}

Matrix krr_predict(const KRRModel& model, const Matrix& features) {
    if (features.cols() != model.training_features.cols())
        throw data_error("shape", "krr_predict: feature dimension " +
                                      std::to_string(features.cols()) + " does not match training " +
                                      std::to_string(model.training_features.cols()));
    Matrix k = rbf_kernel(features, model.training_features, model.config.gamma);
    return (k * model.dual_weights).rowwise() + model.bias;
}

Matrix krr_loocv_predict(const Matrix& features, const Matrix& scores,
                         const KernelConfig& config) {
    const Eigen::Index n = features.rows();
    if (n < 3) throw data_error("data", "krr_loocv_predict: needs N >= 3");
    Matrix pred(n, scores.cols());
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t fold) {
        const Eigen::Index i = static_cast<Eigen::Index>(fold);
        Matrix ftrain(n - 1, features.cols());
        Matrix strain(n - 1, scores.cols());
        Eigen::Index w = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            ftrain.row(w) = features.row(j);
            strain.row(w) = scores.row(j);
            ++w;
        }
        const KRRModel model = krr_fit(ftrain, strain, config);
        pred.row(i) = krr_predict(model, features.row(i));
    });
    return pred;
}

KernelConfig krr_grid_search(const Matrix& features, const Matrix& scores,
                             const GridSearchSpec& grid, std::uint64_t seed) {
    const Eigen::Index n = features.rows();
    if (n < 4)
        throw data_error("data", "krr_grid_search: needs N >= 4 for a 50/50 split; pass explicit "
                                 "gamma/ridge instead");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, 0x5917 /* split stream */));
    rng.shuffle(order);

    const Eigen::Index n_train = n / 2;
    Matrix ftrain(n_train, features.cols()), fval(n - n_train, features.cols());
    Matrix strain(n_train, scores.cols()), sval(n - n_train, scores.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i < n_train) {
            ftrain.row(i) = features.row(order[static_cast<std::size_t>(i)]);
            strain.row(i) = scores.row(order[static_cast<std::size_t>(i)]);
        } else {
            fval.row(i - n_train) = features.row(order[static_cast<std::size_t>(i)]);
            sval.row(i - n_train) = scores.row(order[static_cast<std::size_t>(i)]);
        }
    }

    struct Candidate { KernelConfig config; double score; };
    std::vector<Candidate> results(grid.gammas.size() * grid.ridges.size());
    parallel_for(results.size(), [&](std::size_t idx) {
        KernelConfig c;
        c.gamma = grid.gammas[idx / grid.ridges.size()];
        c.ridge = grid.ridges[idx % grid.ridges.size()];
        const KRRModel model = krr_fit(ftrain, strain, c);
        const Matrix pred = krr_predict(model, fval);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < scores.cols(); ++k)
            acc += rmse(sval.col(k), pred.col(k));
        results[idx] = {c, acc / static_cast<double>(scores.cols())};
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i)
        if (results[i].score < results[best].score) best = i;
    return results[best].config;
}

double pearson_r(const Vector& x, const Vector& y) {
    if (x.size() != y.size()) throw data_error("shape", "pearson_r: length mismatch");
    if (x.size() < 2) throw data_error("data", "pearson_r: needs at least 2 samples");
    const double mx = x.mean(), my = y.mean();
    const Eigen::ArrayXd cx = x.array() - mx, cy = y.array() - my;
    const double sx = std::sqrt((cx * cx).sum()), sy = std::sqrt((cy * cy).sum());
    if (sx == 0.0 || sy == 0.0)
        throw data_error("degenerate", "pearson_r: constant input vector");
    return std::clamp((cx * cy).sum() / (sx * sy), -1.0, 1.0);
}

PearsonResult pearson_r_p(const Vector& truth, const Vector& pred, int n_perm,
                          std::uint64_t seed) {
    if (truth.size() < 3) throw data_error("data", "pearson_r_p: needs N >= 3");
    if (n_perm < 1) throw data_error("data", "pearson_r_p: n_perm must be >= 1");

    PearsonResult result;
    result.r = pearson_r(truth, pred);
    const double target = std::abs(result.r);

    const Eigen::Index n = truth.size();
    std::vector<char> hits(static_cast<std::size_t>(n_perm), 0);
    parallel_for(static_cast<std::size_t>(n_perm), [&](std::size_t i) {
        Rng rng(derive_seed(seed, 0x9e37, i));
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        rng.shuffle(idx);
        Vector shuffled(n);
        for (Eigen::Index j = 0; j < n; ++j) shuffled(j) = pred(idx[static_cast<std::size_t>(j)]);
        if (std::abs(pearson_r(truth, shuffled)) >= target) hits[i] = 1;
    });

    int count = 0;
    for (char h : hits) count += h;
    result.p = (1.0 + static_cast<double>(count)) / (static_cast<double>(n_perm) + 1.0);
    return result;
}

double rmse(const Vector& truth, const Vector& pred) {
    if (truth.size() != pred.size()) throw data_error("shape", "rmse: length mismatch");
    if (truth.size() < 1) throw data_error("data", "rmse: empty input");
    return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

RocResult roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw data_error("shape", "roc_auc: length mismatch");
    const std::size_t n = labels.size();
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y == 1) ++n_pos;
        else if (y == 0) ++n_neg;
        else throw data_error("class", "roc_auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0)
        throw data_error("class", "roc_auc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney via average ranks over the ascending order
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    RocResult result;
    result.auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                     static_cast<double>(n_pos + 1)) /
                 (static_cast<double>(n_pos) * static_cast<double>(n_neg));

    // threshold sweep, descending, ties grouped; positive when score >= threshold
    result.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = n; i > 0;) {
        std::size_t j = i;
        const double threshold = scores[order[i - 1]];
        while (j > 0 && scores[order[j - 1]] == threshold) {
            if (labels[order[j - 1]] == 1) ++tp;
            else ++fp;
            --j;
        }
        result.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                                 static_cast<double>(tp) / static_cast<double>(n_pos),
                                 threshold});
        i = j;
    }
    return result;
}

void finalize_report(EvaluationReport& report, int n_perm, std::uint64_t seed) {
    const Eigen::Index c = report.truth.cols();
    report.metrics.resize(static_cast<std::size_t>(c));
    for (Eigen::Index k = 0; k < c; ++k) {
        auto& m = report.metrics[static_cast<std::size_t>(k)];
        const auto pr = pearson_r_p(report.truth.col(k), report.predicted.col(k), n_perm,
                                    derive_seed(seed, 0xAE7, static_cast<std::uint64_t>(k)));
        m.pearson_r = pr.r;
        m.p_value = pr.p;
        m.rmse = rmse(report.truth.col(k), report.predicted.col(k));
    }
}

LogisticModel logistic_fit(const Matrix& x, const std::vector<int>& labels, int max_iter,
                           double tol) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw data_error("shape", "logistic_fit: label/row mismatch");

    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] != 0 && labels[static_cast<std::size_t>(i)] != 1)
            throw data_error("class", "logistic_fit: labels must be 0 or 1");
        y(i) = labels[static_cast<std::size_t>(i)];
    }

    Matrix xa(n, d + 1);
    xa.leftCols(d) = x;
    xa.col(d).setOnes();

    Vector w = Vector::Zero(d + 1);
    for (int it = 0; it < max_iter; ++it) {
        const Vector z = xa * w;
        const Vector p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        const Vector grad = xa.transpose() * (p - y);
        if (grad.norm() < tol) break;
        const Vector s = (p.array() * (1.0 - p.array())).matrix();
        Matrix h = xa.transpose() * s.asDiagonal() * xa;
        h.diagonal().array() += 1e-9;  // keeps Newton defined under separation
        w -= h.ldlt().solve(grad);
        if (!w.allFinite()) throw numeric_error("divergence", "logistic_fit: diverged");
    }

    LogisticModel model;
    model.weights = w.head(d);
    model.intercept = w(d);
    return model;
}

Vector logistic_predict_proba(const LogisticModel& model, const Matrix& x) {
    if (x.cols() != model.weights.size())
        throw data_error("shape", "logistic_predict_proba: dimension mismatch");
    const Vector z = (x * model.weights).array() + model.intercept;
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

}  // namespace nm
