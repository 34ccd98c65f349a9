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

#include "nm/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>

namespace nm {

using nlohmann::json;

PFIReport pfi_head(const Matrix& head_w, const Vector& head_b, const Matrix& pooled,
                   const Matrix& truth, const std::vector<std::string>& score_names,
                   const std::vector<std::string>& region_labels, int n_trials,
                   std::uint64_t seed) {
    const Eigen::Index n = pooled.rows();
    const Eigen::Index b = pooled.cols();
    const Eigen::Index c = head_w.rows();
    if (n < 2) throw data_error("format", "pfi needs at least 2 subjects");
    if (head_w.cols() != b)
        throw data_error("shape", "pfi: head expects " + std::to_string(head_w.cols()) +
                                      " regions, pooled features have " + std::to_string(b));
    if (truth.rows() != n || truth.cols() != c)
        throw data_error("shape", "pfi: truth matrix shape mismatch");
    if (head_b.size() != c) throw data_error("shape", "pfi: head bias shape mismatch");
    if (static_cast<Eigen::Index>(region_labels.size()) != b)
        throw data_error("shape", "pfi: region label count mismatch");
    if (n_trials < 1) throw usage_error("pfi: n_trials must be >= 1");

    const Matrix base_pred = (pooled * head_w.transpose()).rowwise() + head_b.transpose();

    PFIReport report;
    report.score_names = score_names;
    report.region_labels = region_labels;
    report.n_trials = n_trials;
    report.baseline_rmse.resize(c);
    for (Eigen::Index k = 0; k < c; ++k)
        report.baseline_rmse(k) = rmse(truth.col(k), base_pred.col(k));
    report.delta_rmse.setZero(b, c);

    parallel_for(static_cast<std::size_t>(b), [&](std::size_t j_raw) {
        const Eigen::Index j = static_cast<Eigen::Index>(j_raw);
        Vector mean_rmse = Vector::Zero(c);
        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int trial = 0; trial < n_trials; ++trial) {
            std::iota(perm.begin(), perm.end(), 0);
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j),
                                static_cast<std::uint64_t>(trial)));
            rng.shuffle(perm);
            for (Eigen::Index k = 0; k < c; ++k) {
                double sq = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double shift =
                        head_w(k, j) * (pooled(perm[static_cast<std::size_t>(i)], j) -
                                        pooled(i, j));
                    const double err = base_pred(i, k) + shift - truth(i, k);
                    sq += err * err;
                }
                mean_rmse(k) += std::sqrt(sq / static_cast<double>(n));
            }
        }
        report.delta_rmse.row(j) =
            (mean_rmse / static_cast<double>(n_trials) - report.baseline_rmse).transpose();
    });

    report.ranking.resize(static_cast<std::size_t>(c));
    for (Eigen::Index k = 0; k < c; ++k) {
        auto& order = report.ranking[static_cast<std::size_t>(k)];
        order.resize(static_cast<std::size_t>(b));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            const double dx = report.delta_rmse(x, k), dy = report.delta_rmse(y, k);
            if (dx != dy) return dx > dy;
            return x < y;
        });
    }
    return report;
}

json pfi_report_json(const PFIReport& report) {
    json regions = json::array();
    for (Eigen::Index j = 0; j < report.delta_rmse.rows(); ++j) {
        json deltas;
        for (std::size_t k = 0; k < report.score_names.size(); ++k)
            deltas[report.score_names[k]] = report.delta_rmse(j, static_cast<Eigen::Index>(k));
        regions.push_back({{"index", j},
                           {"label", report.region_labels[static_cast<std::size_t>(j)]},
                           {"delta_rmse", deltas}});
    }
    json baseline, ranking;
    for (std::size_t k = 0; k < report.score_names.size(); ++k) {
        baseline[report.score_names[k]] = report.baseline_rmse(static_cast<Eigen::Index>(k));
        json rows = json::array();
        const auto& order = report.ranking[k];
        for (std::size_t r = 0; r < order.size(); ++r) {
            const int j = order[r];
            rows.push_back({{"rank", r + 1},
                            {"region", j},
                            {"label", report.region_labels[static_cast<std::size_t>(j)]},
                            {"delta_rmse",
                             report.delta_rmse(j, static_cast<Eigen::Index>(k))}});
        }
        ranking[report.score_names[k]] = rows;
    }
    return json{{"n_trials", report.n_trials},
                {"baseline_rmse", baseline},
                {"regions", regions},
                {"ranking", ranking}};
}

namespace {

json metrics_json(const ScoreMetrics& m) {
    return json{{"pearson_r", m.pearson_r}, {"p_value", m.p_value}, {"rmse", m.rmse}};
}

}  // namespace

json report_json(const EvaluationReport& report, const std::vector<std::string>& diagnosis,
                 int n_perm, std::uint64_t seed) {
    const Eigen::Index n = report.truth.rows();
    if (!diagnosis.empty() && static_cast<Eigen::Index>(diagnosis.size()) != n)
        throw data_error("shape", "report: diagnosis list does not match subject count");

    json scores;
    for (std::size_t k = 0; k < report.score_names.size(); ++k)
        scores[report.score_names[k]] = metrics_json(report.metrics[k]);

    json out{{"n_subjects", n}, {"score_names", report.score_names}, {"scores", scores}};
    if (report.roc) out["auc"] = report.roc->auc;

    if (!diagnosis.empty()) {
        std::map<std::string, std::vector<Eigen::Index>> groups;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!diagnosis[static_cast<std::size_t>(i)].empty())
                groups[diagnosis[static_cast<std::size_t>(i)]].push_back(i);

        json subgroups;
        json warnings = json::array();
        std::uint64_t group_index = 0;
        for (const auto& [name, rows] : groups) {
            ++group_index;
            if (rows.size() < 3) {
                warnings.push_back("subgroup " + name + " has " +
                                   std::to_string(rows.size()) +
                                   " subjects; metrics omitted");
                subgroups[name] = json{{"n", rows.size()}};
                continue;
            }
            json gscores;
            for (std::size_t k = 0; k < report.score_names.size(); ++k) {
                Vector t(static_cast<Eigen::Index>(rows.size()));
                Vector p(static_cast<Eigen::Index>(rows.size()));
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    t(static_cast<Eigen::Index>(i)) =
                        report.truth(rows[i], static_cast<Eigen::Index>(k));
                    p(static_cast<Eigen::Index>(i)) =
                        report.predicted(rows[i], static_cast<Eigen::Index>(k));
                }
                ScoreMetrics m;
                const auto pr = pearson_r_p(
                    t, p, n_perm, derive_seed(seed, group_index, static_cast<std::uint64_t>(k)));
                m.pearson_r = pr.r;
                m.p_value = pr.p;
                m.rmse = rmse(t, p);
                gscores[report.score_names[k]] = metrics_json(m);
            }
            subgroups[name] = json{{"n", rows.size()}, {"scores", gscores}};
        }
        out["subgroups"] = subgroups;
        if (!warnings.empty()) out["warnings"] = warnings;
    }
    return out;
}

void write_scatter_csv(const std::string& path, const EvaluationReport& report,
                       const std::vector<std::string>& diagnosis) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("load", "cannot open for writing: " + path);
    out << "subject,score_name,true,pred,diagnosis\n";
    char buf[64];
    for (Eigen::Index i = 0; i < report.truth.rows(); ++i) {
        for (std::size_t k = 0; k < report.score_names.size(); ++k) {
            out << report.subject_ids[static_cast<std::size_t>(i)] << ','
                << report.score_names[k] << ',';
            std::snprintf(buf, sizeof buf, "%.9g",
                          report.truth(i, static_cast<Eigen::Index>(k)));
            out << buf << ',';
            std::snprintf(buf, sizeof buf, "%.9g",
                          report.predicted(i, static_cast<Eigen::Index>(k)));
            out << buf << ','
                << (diagnosis.empty() ? "" : diagnosis[static_cast<std::size_t>(i)]) << '\n';
        }
    }
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("load", "cannot open for writing: " + path);
    out << "fpr,tpr,threshold\n";
    char buf[64];
    for (const auto& pt : roc.points) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", pt.fpr, pt.tpr, pt.threshold);
        out << buf << '\n';
    }
}

std::string iso_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("load", "cannot open for writing: " + path);
    out << text;
    if (!out) throw data_error("load", "short write: " + path);
}

}  // namespace nm
