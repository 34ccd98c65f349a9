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

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nm/dataio.hpp"
#include "nm/model.hpp"
#include "nm/regression.hpp"

namespace nm {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 4;  // small-batch regularization default
    double learning_rate = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global gradient norm; 0 disables clipping
    double lambda_sparse = 1e-3;
    std::uint64_t seed = 0;
    int adapt_epochs = 10;  // finetuning epochs for domain adaptation
    int n_perm = 1000;      // report permutation count

    void validate() const {
        if (epochs < 1 || adapt_epochs < 1)
            throw usage_error("train config: epochs must be >= 1");
        if (batch_size < 1) throw usage_error("train config: batch_size must be >= 1");
        if (!(learning_rate > 0)) throw usage_error("train config: learning_rate must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw usage_error("train config: betas must lie in [0, 1)");
        if (!(adam_eps > 0)) throw usage_error("train config: adam_eps must be > 0");
        if (clip_norm < 0) throw usage_error("train config: clip_norm must be >= 0");
        if (lambda_sparse < 0) throw usage_error("train config: lambda_sparse must be >= 0");
        if (n_perm < 1) throw usage_error("train config: n_perm must be >= 1");
    }
};

/* One JSON object carries both the model and the optimizer settings. */
struct PipelineConfig {
    ModelConfig model;
    TrainConfig train;
};

PipelineConfig pipeline_config_from_json_text(const std::string& text,
                                              const std::string& origin);
PipelineConfig pipeline_config_from_json_file(const std::string& path);

/* Cohort rows converted to model inputs. Targets are taken as stored in
 * the manifest (z-scoring happens upstream). */
template <class S>
struct SampleSet {
    ModelMode mode = ModelMode::regression;
    std::vector<MatX<S>> inputs;  // per subject, T x B
    MatX<S> targets;              // N x 3, regression mode
    VecX<S> moca;                 // N, bce mode (z-scored MoCA input feature)
    std::vector<int> labels;      // N, bce mode: 1 = impaired (aMCI or DAT)
    std::vector<std::string> subject_ids;
    std::vector<std::optional<Diagnosis>> diagnosis;

    int n() const { return static_cast<int>(inputs.size()); }
};

template <class S>
SampleSet<S> make_samples(const Cohort& cohort, ModelMode mode) {
    SampleSet<S> set;
    set.mode = mode;
    const int n = static_cast<int>(cohort.size());
    if (n == 0) throw data_error("format", "cohort has no subjects");
    set.inputs.reserve(static_cast<std::size_t>(n));
    set.targets.resize(n, 3);
    set.moca.resize(n);
    set.labels.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const auto& rec = cohort.manifest.subjects[static_cast<std::size_t>(i)];
        set.subject_ids.push_back(rec.subject_id);
        set.diagnosis.push_back(rec.diagnosis);
        set.inputs.push_back(cohort.timeseries[static_cast<std::size_t>(i)]
                                 .values.template cast<S>());
        if (!rec.scores)
            throw data_error("format", "subject " + rec.subject_id + " has no scores");
        for (int k = 0; k < 3; ++k)
            set.targets(i, k) = static_cast<S>((*rec.scores)[static_cast<std::size_t>(k)]);
        set.moca(i) = set.targets(i, 0);
        if (mode == ModelMode::bce) {
            if (!rec.diagnosis)
                throw data_error("class",
                                 "subject " + rec.subject_id + " has no diagnosis label");
            set.labels[static_cast<std::size_t>(i)] = (*rec.diagnosis == Diagnosis::CN) ? 0 : 1;
        }
    }
    return set;
}

/* Adam over the flattened parameter list. Gradients are clipped in place
 * by global L2 norm before entering the moment estimates. */
template <class S>
class AdamOptimizer {
  public:
    AdamOptimizer(NeuroMambaModel<S>& model, const TrainConfig& cfg) : cfg_(cfg) {
        Eigen::Index n = 0;
        for (const auto& v : parameter_views(model)) n += v.count;
        m_.setZero(n);
        v_.setZero(n);
    }

    void step(NeuroMambaModel<S>& params, NeuroMambaModel<S>& grads) {
        auto pv = parameter_views(params);
        auto gv = parameter_views(grads);

        double sq = 0.0;
        for (const auto& g : gv) {
            for (Eigen::Index i = 0; i < g.count; ++i) {
                const double gi = static_cast<double>(g.data[i]);
                if (!std::isfinite(gi))
                    throw numeric_error("divergence", "non-finite gradient in " + g.name);
                sq += gi * gi;
            }
        }
        const double norm = std::sqrt(sq);
        S scale = S(1);
        if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm)
            scale = static_cast<S>(cfg_.clip_norm / norm);

        ++t_;
        const S b1 = static_cast<S>(cfg_.beta1);
        const S b2 = static_cast<S>(cfg_.beta2);
        const S c1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        const S c2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
        const S lr = static_cast<S>(cfg_.learning_rate);
        const S eps = static_cast<S>(cfg_.adam_eps);

        Eigen::Index off = 0;
        for (std::size_t k = 0; k < gv.size(); ++k) {
            S* g = gv[k].data;
            S* p = pv[k].data;
            for (Eigen::Index i = 0; i < gv[k].count; ++i, ++off) {
                const S gi = g[i] * scale;
                m_(off) = b1 * m_(off) + (S(1) - b1) * gi;
                v_(off) = b2 * v_(off) + (S(1) - b2) * gi * gi;
                p[i] -= lr * (m_(off) / c1) / (std::sqrt(v_(off) / c2) + eps);
            }
        }
    }

    long step_count() const { return t_; }

  private:
    TrainConfig cfg_;
    VecX<S> m_, v_;
    long t_ = 0;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample loss per epoch
};

template <class S>
S sample_loss_grad(const NeuroMambaModel<S>& model, const SampleSet<S>& data, int idx,
                   S lambda_sparse, NeuroMambaModel<S>& grads) {
    if (data.mode == ModelMode::regression) {
        const VecX<S> target = data.targets.row(idx).transpose();
        return regression_loss_grad(model, data.inputs[static_cast<std::size_t>(idx)], target,
                                    lambda_sparse, grads);
    }
    return bce_loss_grad(model, data.inputs[static_cast<std::size_t>(idx)], data.moca(idx),
                         data.labels[static_cast<std::size_t>(idx)], lambda_sparse, grads);
}

/* Epochs of shuffled mini-batches; the short final batch is kept. Batch
 * gradients are per-member, reduced in member order, then averaged, so
 * results are independent of --threads. Shuffle order is a pure function
 * of (seed, epoch). */
template <class S>
TrainResult train_model(NeuroMambaModel<S>& model, const SampleSet<S>& data,
                        const std::vector<int>& subset, const TrainConfig& cfg,
                        std::uint64_t seed) {
    cfg.validate();
    if (subset.empty()) throw data_error("format", "training subset is empty");
    for (int idx : subset)
        if (idx < 0 || idx >= data.n())
            throw data_error("format", "training subset index out of range");

    AdamOptimizer<S> adam(model, cfg);
    std::vector<int> order = subset;
    const S lam = static_cast<S>(cfg.lambda_sparse);
    TrainResult out;
    out.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_total = 0.0;
        const int n = static_cast<int>(order.size());
        for (int start = 0, batch = 0; start < n; start += cfg.batch_size, ++batch) {
            const int nb = std::min(cfg.batch_size, n - start);
            std::vector<NeuroMambaModel<S>> member_grads(static_cast<std::size_t>(nb));
            std::vector<double> member_loss(static_cast<std::size_t>(nb), 0.0);
            try {
                parallel_for(static_cast<std::size_t>(nb), [&](std::size_t k) {
                    member_grads[k] = model.zeros_like();
                    member_loss[k] = static_cast<double>(sample_loss_grad(
                        model, data, order[start + static_cast<int>(k)], lam,
                        member_grads[k]));
                });

                NeuroMambaModel<S> total = model.zeros_like();
                auto tv = parameter_views(total);
                const S inv = S(1) / static_cast<S>(nb);
                for (int k = 0; k < nb; ++k) {
                    auto mv = parameter_views(member_grads[static_cast<std::size_t>(k)]);
                    for (std::size_t j = 0; j < tv.size(); ++j)
                        for (Eigen::Index i = 0; i < tv[j].count; ++i)
                            tv[j].data[i] += mv[j].data[i] * inv;
                }
                adam.step(model, total);
            } catch (const Error& e) {
                if (e.category() == Error::Category::numeric)
                    throw numeric_error(e.kind(), "epoch " + std::to_string(epoch) +
                                                      " batch " + std::to_string(batch) +
                                                      ": " + e.what());
                throw;
            }
            epoch_total +=
                std::accumulate(member_loss.begin(), member_loss.end(), 0.0);
        }
        out.epoch_loss.push_back(epoch_total / static_cast<double>(n));
    }
    model.trained = true;
    return out;
}

template <class S>
TrainResult train_model(NeuroMambaModel<S>& model, const SampleSet<S>& data,
                        const TrainConfig& cfg, std::uint64_t seed) {
    std::vector<int> all(static_cast<std::size_t>(data.n()));
    std::iota(all.begin(), all.end(), 0);
    return train_model(model, data, all, cfg, seed);
}

struct FoldResult {
    std::string held_out_subject;
    Vector predictions;  // 3 scores
    std::vector<double> train_loss_curve;
    Vector pooled;  // held-out subject's h under the fold's model
};

struct LoocvOutcome {
    std::vector<FoldResult> folds;
    EvaluationReport report;
};

/* Per fold: reinitialize from the config with fold seed = master ^ fold
 * index, train on the other N-1 subjects, predict the held-out one. Folds
 * run in parallel with results identical to sequential execution. */
template <class S>
LoocvOutcome loocv_run(const Cohort& cohort, ModelConfig model_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (model_cfg.mode != ModelMode::regression)
        throw usage_error("loocv: regression mode only");
    const int n = static_cast<int>(cohort.size());
    if (n < 3) throw data_error("format", "loocv needs at least 3 subjects, have " +
                                              std::to_string(n));
    model_cfg.model_dim = static_cast<int>(cohort.timeseries.front().regions());
    model_cfg.block.model_dim = model_cfg.model_dim;
    model_cfg.validate();

    const SampleSet<S> samples = make_samples<S>(cohort, ModelMode::regression);

    LoocvOutcome out;
    out.folds.resize(static_cast<std::size_t>(n));
    Matrix predicted = Matrix::Zero(n, 3);

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t fold) {
        const std::uint64_t fold_seed = cfg.seed ^ static_cast<std::uint64_t>(fold);
        try {
            auto model = NeuroMambaModel<S>::init(model_cfg, fold_seed);
            std::vector<int> train_idx;
            train_idx.reserve(static_cast<std::size_t>(n - 1));
            for (int i = 0; i < n; ++i)
                if (i != static_cast<int>(fold)) train_idx.push_back(i);
            const auto result = train_model(model, samples, train_idx, cfg, fold_seed);

            const auto fwd = model_forward(model, samples.inputs[fold]);
            FoldResult& fr = out.folds[fold];
            fr.held_out_subject = samples.subject_ids[fold];
            fr.predictions = fwd.output;
            fr.train_loss_curve = result.epoch_loss;
            fr.pooled = fwd.h;
            predicted.row(static_cast<Eigen::Index>(fold)) = fwd.output.transpose();
        } catch (const Error& e) {
            const std::string ctx = "fold " + std::to_string(fold) + " (" +
                                    samples.subject_ids[fold] + "): " + e.what();
            if (e.category() == Error::Category::numeric) throw numeric_error(e.kind(), ctx);
            throw data_error(e.kind(), ctx);
        }
    });

    out.report.subject_ids = samples.subject_ids;
    out.report.score_names.assign(cohort.manifest.score_names.begin(),
                                  cohort.manifest.score_names.end());
    out.report.truth = samples.targets.template cast<double>();
    out.report.predicted = predicted;
    finalize_report(out.report, cfg.n_perm, derive_seed(cfg.seed, 0x7e97));
    return out;
}

template <class S>
struct AdaptOutcome {
    NeuroMambaModel<S> model;
    EvaluationReport report;
    std::vector<std::string> finetune_subjects;
    std::vector<std::string> test_subjects;
};

inline constexpr int kShotsAll = -1;

/* Zero-shot evaluates the checkpoint directly; k-shot finetunes on k
 * subjects per diagnosis class (seeded per-class selection) and evaluates
 * the untouched remainder; shots = all finetunes and evaluates on the
 * full cohort. */
template <class S>
AdaptOutcome<S> adapt_run(NeuroMambaModel<S> model, const Cohort& target, int shots,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (shots < 0 && shots != kShotsAll)
        throw usage_error("adapt: shots must be a nonnegative count or 'all'");
    if (model.config.mode != ModelMode::regression)
        throw usage_error("adapt: regression mode only");
    const int n = static_cast<int>(target.size());
    const int regions = static_cast<int>(target.timeseries.front().regions());
    if (regions != model.config.model_dim)
        throw data_error("shape", "target cohort has " + std::to_string(regions) +
                                      " regions, checkpoint expects " +
                                      std::to_string(model.config.model_dim));

    const SampleSet<S> samples = make_samples<S>(target, ModelMode::regression);

    std::vector<int> finetune_idx, test_idx;
    if (shots == kShotsAll) {
        for (int i = 0; i < n; ++i) finetune_idx.push_back(i);
        test_idx = finetune_idx;
    } else if (shots == 0) {
        for (int i = 0; i < n; ++i) test_idx.push_back(i);
    } else {
        std::vector<std::vector<int>> by_class(3);
        for (int i = 0; i < n; ++i) {
            if (!samples.diagnosis[static_cast<std::size_t>(i)])
                throw data_error("shot", "subject " + samples.subject_ids[static_cast<std::size_t>(i)] +
                                             " has no diagnosis; k-shot selection needs labels");
            by_class[static_cast<std::size_t>(*samples.diagnosis[static_cast<std::size_t>(i)])]
                .push_back(i);
        }
        std::vector<bool> chosen(static_cast<std::size_t>(n), false);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto& members = by_class[c];
            if (members.empty()) continue;
            if (static_cast<int>(members.size()) < shots)
                throw data_error("shot",
                                 "class " + to_string(static_cast<Diagnosis>(c)) + " has " +
                                     std::to_string(members.size()) + " subjects, need " +
                                     std::to_string(shots));
            Rng rng(derive_seed(cfg.seed, 0xADA, static_cast<std::uint64_t>(c)));
            rng.shuffle(members);
            for (int k = 0; k < shots; ++k) {
                finetune_idx.push_back(members[static_cast<std::size_t>(k)]);
                chosen[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = true;
            }
        }
        std::sort(finetune_idx.begin(), finetune_idx.end());
        for (int i = 0; i < n; ++i)
            if (!chosen[static_cast<std::size_t>(i)]) test_idx.push_back(i);
        if (test_idx.empty())
            throw data_error("shot", "no held-out subjects remain after shot selection");
    }

    AdaptOutcome<S> out;
    if (!finetune_idx.empty()) {
        TrainConfig ft = cfg;
        ft.epochs = cfg.adapt_epochs;
        train_model(model, samples, finetune_idx, ft, derive_seed(cfg.seed, 0xF17E));
    }
    for (int idx : finetune_idx)
        out.finetune_subjects.push_back(samples.subject_ids[static_cast<std::size_t>(idx)]);

    const int nt = static_cast<int>(test_idx.size());
    Matrix truth(nt, 3), predicted(nt, 3);
    for (int k = 0; k < nt; ++k) {
        const int idx = test_idx[static_cast<std::size_t>(k)];
        const auto fwd = model_forward(model, samples.inputs[static_cast<std::size_t>(idx)]);
        predicted.row(k) = fwd.output.transpose();
        truth.row(k) =
            samples.targets.row(idx).template cast<double>();
        out.test_subjects.push_back(samples.subject_ids[static_cast<std::size_t>(idx)]);
    }

    out.report.subject_ids = out.test_subjects;
    out.report.score_names.assign(target.manifest.score_names.begin(),
                                  target.manifest.score_names.end());
    out.report.truth = truth;
    out.report.predicted = predicted;
    finalize_report(out.report, cfg.n_perm, derive_seed(cfg.seed, 0x11E7));
    out.model = std::move(model);
    return out;
}

}  // namespace nm
