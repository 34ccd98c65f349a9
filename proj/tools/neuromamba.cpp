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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nm/analysis.hpp"
#include "nm/baselines.hpp"
#include "nm/common.hpp"
#include "nm/dataio.hpp"
#include "nm/gradcheck.hpp"
#include "nm/model.hpp"
#include "nm/regression.hpp"
#include "nm/ssmcore.hpp"
#include "nm/training.hpp"

namespace {

using nlohmann::json;

struct GlobalOpts {
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::string precision = "f32";
    std::string out_dir = ".";
    bool dump_intermediate = false;
};

struct SynthOpts {
    std::string spec_path, out_dir;
};

struct FeaturesOpts {
    std::string method, cohort, out;
    int components = 32;
    double f_lo = 0.008, f_hi = 0.09;
};

struct KrrOpts {
    std::string features, cohort, report, scatter;
    std::optional<double> gamma, ridge;
    bool loocv = false;
    int n_perm = 1000;
};

struct TrainOpts {
    std::string cohort, config, checkpoint;
};

struct LoocvOpts {
    std::string cohort, config, report, scatter, folds;
};

struct PfiOpts {
    std::string checkpoint, cohort, report;
    int trials = 100;
};

struct ClassifyOpts {
    std::string checkpoint, cohort, roc, report;
};

struct AdaptOpts {
    std::string checkpoint, cohort, report, scatter, config;
    std::string shots = "0";
};

struct GradcheckOpts {
    std::string config, report;
    int t_len = 16;
    double eps = 1e-5;
    double tol = 1e-4;
};

void emit_error_json(const std::string& category, const std::string& kind,
                     const std::string& message) {
    const json diag{{"error", {{"category", category}, {"kind", kind}, {"message", message}}}};
    std::cerr << diag.dump() << "\n";
}

std::string diagnosis_string(const nm::SubjectRecord& rec) {
    return rec.diagnosis ? nm::to_string(*rec.diagnosis) : std::string{};
}

std::vector<std::string> cohort_diagnosis(const nm::Cohort& cohort) {
    std::vector<std::string> out;
    out.reserve(cohort.size());
    for (const auto& rec : cohort.manifest.subjects) out.push_back(diagnosis_string(rec));
    return out;
}

nm::Cohort load_zscored_cohort(const std::string& manifest_path) {
    nm::Cohort cohort = nm::load_cohort(manifest_path);
    cohort.manifest = nm::zscore_scores(cohort.manifest);
    return cohort;
}

void write_report_file(const std::string& path, json body) {
    body["generated_at"] = nm::iso_utc_now();
    nm::write_text_file(path, body.dump(2) + "\n");
}

void dump_pooled_csv(const GlobalOpts& g, const std::vector<std::string>& ids,
                     const nm::Matrix& pooled) {
    nm::FeatureMatrix f;
    f.values = pooled;
    f.subject_ids = ids;
    for (Eigen::Index j = 0; j < pooled.cols(); ++j) {
        char name[16];
        std::snprintf(name, sizeof name, "h%03d", static_cast<int>(j));
        f.feature_names.push_back(name);
    }
    const auto path = std::filesystem::path(g.out_dir) / "pooled_h.csv";
    nm::write_feature_csv(path.string(), f);
}

std::uint64_t effective_seed(const GlobalOpts& g, std::uint64_t fallback) {
    return g.seed_given ? g.seed : fallback;
}

int run_synth(const GlobalOpts& g, const SynthOpts& o) {
    nm::SyntheticSpec spec = nm::synthetic_spec_from_json_file(o.spec_path);
    if (g.seed_given) spec.seed = g.seed;
    const auto synth = nm::generate_synthetic(spec);
    nm::save_synthetic(synth, o.out_dir);
    const json summary{{"subjects", spec.n_subjects},
                       {"regions", spec.n_regions},
                       {"timepoints", spec.n_timepoints},
                       {"out", o.out_dir}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_features(const GlobalOpts& g, const FeaturesOpts& o) {
    const nm::Cohort cohort = nm::load_cohort(o.cohort);
    nm::FeatureOptions opts;
    opts.method = nm::feature_method_from_string(o.method);
    opts.ica_components = o.components;
    opts.ica.seed = g.seed;
    opts.alff_f_lo = o.f_lo;
    opts.alff_f_hi = o.f_hi;
    const auto features = nm::extract_features(cohort, opts);
    nm::write_feature_csv(o.out, features);
    const json summary{{"method", o.method},
                       {"subjects", features.values.rows()},
                       {"features", features.values.cols()},
                       {"out", o.out}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_krr(const GlobalOpts& g, const KrrOpts& o) {
    const nm::Cohort cohort = load_zscored_cohort(o.cohort);
    const nm::FeatureMatrix features = nm::read_feature_csv(o.features);

    const int n = static_cast<int>(cohort.size());
    nm::Matrix x(n, features.values.cols());
    nm::Matrix targets(n, 3);
    for (int i = 0; i < n; ++i) {
        const auto& rec = cohort.manifest.subjects[static_cast<std::size_t>(i)];
        const auto it = std::find(features.subject_ids.begin(), features.subject_ids.end(),
                                  rec.subject_id);
        if (it == features.subject_ids.end())
            throw nm::data_error("format",
                                 "feature file has no row for subject " + rec.subject_id);
        x.row(i) = features.values.row(it - features.subject_ids.begin());
        if (!rec.scores)
            throw nm::data_error("format", "subject " + rec.subject_id + " has no scores");
        for (int k = 0; k < 3; ++k) targets(i, k) = (*rec.scores)[static_cast<std::size_t>(k)];
    }

    nm::KernelConfig config;
    bool searched = false;
    if (o.gamma && o.ridge) {
        config.gamma = *o.gamma;
        config.ridge = *o.ridge;
    } else if (!o.gamma && !o.ridge) {
        config = nm::krr_grid_search(x, targets, nm::GridSearchSpec{}, g.seed);
        searched = true;
    } else {
        throw nm::usage_error("krr: give both --gamma and --ridge, or neither");
    }

    nm::Matrix predicted;
    if (o.loocv) {
        predicted = nm::krr_loocv_predict(x, targets, config);
    } else {
        const auto model = nm::krr_fit(x, targets, config);
        predicted = nm::krr_predict(model, x);
    }

    nm::EvaluationReport report;
    for (const auto& rec : cohort.manifest.subjects)
        report.subject_ids.push_back(rec.subject_id);
    report.score_names.assign(cohort.manifest.score_names.begin(),
                              cohort.manifest.score_names.end());
    report.truth = targets;
    report.predicted = predicted;
    nm::finalize_report(report, o.n_perm, nm::derive_seed(g.seed, 0xEB));

    const auto diagnosis = cohort_diagnosis(cohort);
    json body = nm::report_json(report, diagnosis, o.n_perm, nm::derive_seed(g.seed, 0xEC));
    body["method"] = o.loocv ? "krr-loocv" : "krr-insample";
    body["kernel"] = {{"gamma", config.gamma}, {"ridge", config.ridge},
                      {"grid_searched", searched}};
    write_report_file(o.report, body);
    if (!o.scatter.empty()) nm::write_scatter_csv(o.scatter, report, diagnosis);
    std::cout << json{{"report", o.report},
                      {"gamma", config.gamma},
                      {"ridge", config.ridge}}
                     .dump()
              << "\n";
    return 0;
}

template <class S>
int run_train(const GlobalOpts& g, const TrainOpts& o) {
    nm::Cohort cohort = load_zscored_cohort(o.cohort);
    nm::PipelineConfig cfg = nm::pipeline_config_from_json_file(o.config);
    cfg.train.seed = effective_seed(g, cfg.train.seed);

    const int regions = static_cast<int>(cohort.timeseries.front().regions());
    if (cfg.model.model_dim == 0) cfg.model.model_dim = regions;
    if (cfg.model.model_dim != regions)
        throw nm::data_error("shape", "config model_dim " +
                                          std::to_string(cfg.model.model_dim) +
                                          " does not match cohort regions " +
                                          std::to_string(regions));
    cfg.model.block.model_dim = cfg.model.model_dim;

    const auto samples = nm::make_samples<S>(cohort, cfg.model.mode);
    auto model = nm::NeuroMambaModel<S>::init(cfg.model, cfg.train.seed);
    const auto result = nm::train_model(model, samples, cfg.train, cfg.train.seed);
    nm::save_checkpoint(o.checkpoint, model);

    if (g.dump_intermediate)
        dump_pooled_csv(g, samples.subject_ids, nm::pooled_features(model, cohort));

    std::cout << json{{"checkpoint", o.checkpoint},
                      {"epochs", cfg.train.epochs},
                      {"final_loss", result.epoch_loss.back()},
                      {"epoch_loss", result.epoch_loss}}
                     .dump()
              << "\n";
    return 0;
}

template <class S>
int run_loocv(const GlobalOpts& g, const LoocvOpts& o) {
    nm::Cohort cohort = load_zscored_cohort(o.cohort);
    nm::PipelineConfig cfg = nm::pipeline_config_from_json_file(o.config);
    cfg.train.seed = effective_seed(g, cfg.train.seed);

    const auto outcome = nm::loocv_run<S>(cohort, cfg.model, cfg.train);
    const auto diagnosis = cohort_diagnosis(cohort);

    json body = nm::report_json(outcome.report, diagnosis, cfg.train.n_perm,
                                nm::derive_seed(cfg.train.seed, 0x10CA));
    body["method"] = "neuromamba-loocv";
    body["epochs"] = cfg.train.epochs;
    write_report_file(o.report, body);
    if (!o.scatter.empty()) nm::write_scatter_csv(o.scatter, outcome.report, diagnosis);

    if (!o.folds.empty()) {
        std::string lines;
        for (const auto& fold : outcome.folds) {
            const json fj{{"subject", fold.held_out_subject},
                          {"predictions", std::vector<double>(fold.predictions.data(),
                                                              fold.predictions.data() +
                                                                  fold.predictions.size())},
                          {"final_train_loss", fold.train_loss_curve.back()}};
            lines += fj.dump() + "\n";
        }
        nm::write_text_file(o.folds, lines);
    }

    if (g.dump_intermediate) {
        nm::Matrix pooled(static_cast<Eigen::Index>(outcome.folds.size()),
                          outcome.folds.front().pooled.size());
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < outcome.folds.size(); ++i) {
            pooled.row(static_cast<Eigen::Index>(i)) = outcome.folds[i].pooled.transpose();
            ids.push_back(outcome.folds[i].held_out_subject);
        }
        dump_pooled_csv(g, ids, pooled);
    }

    json summary{{"report", o.report}};
    for (std::size_t k = 0; k < outcome.report.score_names.size(); ++k)
        summary[outcome.report.score_names[k] + "_r"] = outcome.report.metrics[k].pearson_r;
    std::cout << summary.dump() << "\n";
    return 0;
}

template <class S>
int run_pfi(const GlobalOpts& g, const PfiOpts& o) {
    auto model = nm::load_checkpoint<S>(o.checkpoint);
    const nm::Cohort cohort = load_zscored_cohort(o.cohort);
    const auto report = nm::pfi(model, cohort, o.trials, g.seed);

    json body = nm::pfi_report_json(report);
    write_report_file(o.report, body);

    if (g.dump_intermediate) {
        std::vector<std::string> ids;
        for (const auto& rec : cohort.manifest.subjects) ids.push_back(rec.subject_id);
        dump_pooled_csv(g, ids, nm::pooled_features(model, cohort));
    }

    json summary{{"report", o.report}, {"trials", o.trials}};
    for (std::size_t k = 0; k < report.score_names.size(); ++k) {
        const int top = report.ranking[k].front();
        summary["top_" + report.score_names[k]] = report.region_labels[
            static_cast<std::size_t>(top)];
    }
    std::cout << summary.dump() << "\n";
    return 0;
}

template <class S>
int run_classify(const GlobalOpts& g, const ClassifyOpts& o) {
    auto model = nm::load_checkpoint<S>(o.checkpoint);
    if (model.config.mode != nm::ModelMode::bce)
        throw nm::data_error("state", "classify requires a bce-mode checkpoint");
    if (!model.trained) throw nm::data_error("state", "classify requires a trained checkpoint");
    const nm::Cohort cohort = load_zscored_cohort(o.cohort);
    const auto samples = nm::make_samples<S>(cohort, nm::ModelMode::bce);

    const int n = samples.n();
    std::vector<double> model_prob(static_cast<std::size_t>(n));
    nm::Matrix pooled(n, model.config.model_dim);
    nm::parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const S* moca = &samples.moca(static_cast<Eigen::Index>(i));
        const auto fwd = nm::model_forward(model, samples.inputs[i], moca);
        model_prob[i] = 1.0 / (1.0 + std::exp(-fwd.output(0)));
        pooled.row(static_cast<Eigen::Index>(i)) = fwd.h.transpose();
    });

    nm::Matrix moca_only(n, 1);
    for (int i = 0; i < n; ++i)
        moca_only(i, 0) = static_cast<double>(samples.moca(i));
    const auto logistic = nm::logistic_fit(moca_only, samples.labels);
    const nm::Vector base_prob = nm::logistic_predict_proba(logistic, moca_only);

    const auto roc_model = nm::roc_auc(samples.labels, model_prob);
    const auto roc_base = nm::roc_auc(
        samples.labels, std::vector<double>(base_prob.data(), base_prob.data() + n));

    nm::write_roc_csv(o.roc, roc_model);
    std::filesystem::path base_path(o.roc);
    base_path.replace_filename(base_path.stem().string() + "_moca" +
                               base_path.extension().string());
    nm::write_roc_csv(base_path.string(), roc_base);

    int positives = 0;
    for (int lab : samples.labels) positives += lab;
    json body{{"n_subjects", n},
              {"positives", positives},
              {"auc", {{"neuromamba_bce", roc_model.auc}, {"moca_only", roc_base.auc}}},
              {"roc_csv", o.roc},
              {"roc_csv_moca", base_path.string()}};
    if (!o.report.empty()) write_report_file(o.report, body);

    if (g.dump_intermediate) dump_pooled_csv(g, samples.subject_ids, pooled);

    std::cout << body.dump() << "\n";
    return 0;
}

template <class S>
int run_adapt(const GlobalOpts& g, const AdaptOpts& o) {
    auto model = nm::load_checkpoint<S>(o.checkpoint);
    nm::Cohort cohort = load_zscored_cohort(o.cohort);

    nm::PipelineConfig cfg;
    if (!o.config.empty()) cfg = nm::pipeline_config_from_json_file(o.config);
    cfg.train.seed = effective_seed(g, cfg.train.seed);

    int shots = 0;
    if (o.shots == "all") {
        shots = nm::kShotsAll;
    } else {
        try {
            std::size_t pos = 0;
            shots = std::stoi(o.shots, &pos);
            if (pos != o.shots.size() || shots < 0) throw std::invalid_argument("shots");
        } catch (const std::exception&) {
            throw nm::usage_error("adapt: --shots takes a nonnegative count or 'all'");
        }
    }

    auto outcome = nm::adapt_run(std::move(model), cohort, shots, cfg.train);

    std::vector<std::string> diagnosis;
    for (const auto& id : outcome.test_subjects) {
        for (const auto& rec : cohort.manifest.subjects)
            if (rec.subject_id == id) {
                diagnosis.push_back(diagnosis_string(rec));
                break;
            }
    }

    json body = nm::report_json(outcome.report, diagnosis, cfg.train.n_perm,
                                nm::derive_seed(cfg.train.seed, 0xADA7));
    body["method"] = "neuromamba-adapt";
    body["shots"] = o.shots;
    body["finetune_subjects"] = outcome.finetune_subjects;
    body["n_test"] = outcome.test_subjects.size();
    write_report_file(o.report, body);
    if (!o.scatter.empty()) nm::write_scatter_csv(o.scatter, outcome.report, diagnosis);

    if (g.dump_intermediate)
        dump_pooled_csv(g, outcome.test_subjects,
                        nm::pooled_features(outcome.model, cohort));

    json summary{{"report", o.report}, {"shots", o.shots}};
    for (std::size_t k = 0; k < outcome.report.score_names.size(); ++k)
        summary[outcome.report.score_names[k] + "_r"] = outcome.report.metrics[k].pearson_r;
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_gradcheck(const GlobalOpts& g, const GradcheckOpts& o) {
    if (g.precision != "f64")
        throw nm::usage_error("gradcheck requires --precision f64");
    nm::PipelineConfig cfg = nm::pipeline_config_from_json_file(o.config);
    if (cfg.model.model_dim < 1)
        throw nm::usage_error("gradcheck: config must set model_dim");

    const auto result = nm::gradcheck_model(cfg.model, o.t_len, g.seed, o.eps,
                                            cfg.train.lambda_sparse);

    json params = json::array();
    for (const auto& e : result.entries)
        params.push_back({{"name", e.name},
                          {"max_rel_err", e.max_rel_err},
                          {"max_abs_err", e.max_abs_err}});
    json body{{"max_rel_err", result.max_rel_err},
              {"tolerance", o.tol},
              {"pass", result.pass(o.tol)},
              {"parameters", params}};
    if (!o.report.empty()) write_report_file(o.report, body);
    std::cout << json{{"max_rel_err", result.max_rel_err}, {"pass", result.pass(o.tol)}}
                     .dump()
              << "\n";
    if (!result.pass(o.tol))
        throw nm::numeric_error("gradcheck", "max relative error " +
                                                 std::to_string(result.max_rel_err) +
                                                 " exceeds tolerance");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parcellated resting-state fMRI behavior-score pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Master RNG seed");
    app.add_option("--threads", g.threads, "Worker thread count (affects wall time only)");
    app.add_option("--precision", g.precision, "Numeric precision")
        ->check(CLI::IsMember({"f32", "f64"}));
    app.add_option("--out-dir", g.out_dir, "Directory for auxiliary outputs");
    app.add_flag("--dump-intermediate", g.dump_intermediate,
                 "Write per-subject pooled h-vectors to out-dir/pooled_h.csv");

    SynthOpts synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cohort");
    synth_cmd->add_option("--spec", synth.spec_path, "Synthetic spec JSON")->required();
    synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();

    FeaturesOpts feat;
    auto* feat_cmd = app.add_subcommand("features", "Extract baseline features");
    feat_cmd->add_option("--method", feat.method, "fcm, iica, gica, or alff")->required();
    feat_cmd->add_option("--cohort", feat.cohort, "Cohort manifest JSON")->required();
    feat_cmd->add_option("--out", feat.out, "Feature CSV path")->required();
    feat_cmd->add_option("--components", feat.components, "ICA component count");
    feat_cmd->add_option("--f-lo", feat.f_lo, "ALFF band low edge (Hz)");
    feat_cmd->add_option("--f-hi", feat.f_hi, "ALFF band high edge (Hz)");

    KrrOpts krr;
    auto* krr_cmd = app.add_subcommand("krr", "Kernel ridge regression on features");
    krr_cmd->add_option("--features", krr.features, "Feature CSV")->required();
    krr_cmd->add_option("--cohort", krr.cohort, "Cohort manifest JSON")->required();
    krr_cmd->add_option("--gamma", krr.gamma, "RBF gamma (omit with --ridge to grid search)");
    krr_cmd->add_option("--ridge", krr.ridge, "Ridge strength");
    krr_cmd->add_flag("--loocv", krr.loocv, "Leave-one-out predictions");
    krr_cmd->add_option("--report", krr.report, "Report JSON path")->required();
    krr_cmd->add_option("--scatter", krr.scatter, "Scatter CSV path");
    krr_cmd->add_option("--n-perm", krr.n_perm, "Permutations for p-values");

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a full cohort");
    train_cmd->add_option("--cohort", train.cohort, "Cohort manifest JSON")->required();
    train_cmd->add_option("--config", train.config, "Model + optimizer JSON")->required();
    train_cmd->add_option("--checkpoint", train.checkpoint, "Checkpoint output")->required();

    LoocvOpts loocv;
    auto* loocv_cmd = app.add_subcommand("loocv", "Leave-one-out evaluation");
    loocv_cmd->add_option("--cohort", loocv.cohort, "Cohort manifest JSON")->required();
    loocv_cmd->add_option("--config", loocv.config, "Model + optimizer JSON")->required();
    loocv_cmd->add_option("--report", loocv.report, "Report JSON path")->required();
    loocv_cmd->add_option("--scatter", loocv.scatter, "Scatter CSV path");
    loocv_cmd->add_option("--folds", loocv.folds, "Per-fold JSON-lines path");

    PfiOpts pfi;
    auto* pfi_cmd = app.add_subcommand("pfi", "Permutation feature importance");
    pfi_cmd->add_option("--checkpoint", pfi.checkpoint, "Trained checkpoint")->required();
    pfi_cmd->add_option("--cohort", pfi.cohort, "Cohort manifest JSON")->required();
    pfi_cmd->add_option("--trials", pfi.trials, "Shuffling trials per region");
    pfi_cmd->add_option("--report", pfi.report, "Report JSON path")->required();

    ClassifyOpts classify;
    auto* classify_cmd =
        app.add_subcommand("classify", "Impairment classification vs MoCA-only baseline");
    classify_cmd->add_option("--checkpoint", classify.checkpoint, "BCE checkpoint")
        ->required();
    classify_cmd->add_option("--cohort", classify.cohort, "Cohort manifest JSON")->required();
    classify_cmd->add_option("--roc", classify.roc, "ROC CSV path")->required();
    classify_cmd->add_option("--report", classify.report, "Summary JSON path");

    AdaptOpts adapt;
    auto* adapt_cmd = app.add_subcommand("adapt", "Zero/few/all-shot domain adaptation");
    adapt_cmd->add_option("--checkpoint", adapt.checkpoint, "Pretrained checkpoint")
        ->required();
    adapt_cmd->add_option("--cohort", adapt.cohort, "Target cohort manifest")->required();
    adapt_cmd->add_option("--shots", adapt.shots, "Subjects per class: 0, 1, 3, 5, or all");
    adapt_cmd->add_option("--report", adapt.report, "Report JSON path")->required();
    adapt_cmd->add_option("--scatter", adapt.scatter, "Scatter CSV path");
    adapt_cmd->add_option("--config", adapt.config, "Optimizer JSON (defaults otherwise)");

    GradcheckOpts gradcheck;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gradcheck_cmd->add_option("--config", gradcheck.config, "Model JSON")->required();
    gradcheck_cmd->add_option("--t-len", gradcheck.t_len, "Timepoints for the probe input");
    gradcheck_cmd->add_option("--eps", gradcheck.eps, "Finite-difference step");
    gradcheck_cmd->add_option("--tol", gradcheck.tol, "Max relative error accepted");
    gradcheck_cmd->add_option("--report", gradcheck.report, "Report JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error_json("usage", "cli", e.what());
        return 2;
    }
    g.seed_given = seed_opt->count() > 0;

    try {
        if (g.threads < 1) throw nm::usage_error("--threads must be >= 1");
        nm::set_global_threads(g.threads);
        const bool f64 = g.precision == "f64";

        if (synth_cmd->parsed()) return run_synth(g, synth);
        if (feat_cmd->parsed()) return run_features(g, feat);
        if (krr_cmd->parsed()) return run_krr(g, krr);
        if (train_cmd->parsed())
            return f64 ? run_train<double>(g, train) : run_train<float>(g, train);
        if (loocv_cmd->parsed())
            return f64 ? run_loocv<double>(g, loocv) : run_loocv<float>(g, loocv);
        if (pfi_cmd->parsed()) return f64 ? run_pfi<double>(g, pfi) : run_pfi<float>(g, pfi);
        if (classify_cmd->parsed())
            return f64 ? run_classify<double>(g, classify) : run_classify<float>(g, classify);
        if (adapt_cmd->parsed())
            return f64 ? run_adapt<double>(g, adapt) : run_adapt<float>(g, adapt);
        if (gradcheck_cmd->parsed()) return run_gradcheck(g, gradcheck);
        throw nm::usage_error("no subcommand given");
    } catch (const nm::Error& e) {
        emit_error_json(e.category_name(), e.kind(), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        emit_error_json("data", "internal", e.what());
        return 3;
    }
}
