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

#include "nm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace nm {

namespace {

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

void ParcellatedTimeseries::validate() const {
    if (values.rows() < 2)
        throw data_error("shape", "subject " + subject_id + ": needs T >= 2 timepoints, got " +
                                      std::to_string(values.rows()));
    if (values.cols() < 2)
        throw data_error("shape", "subject " + subject_id + ": needs B >= 2 regions, got " +
                                      std::to_string(values.cols()));
    if (static_cast<Eigen::Index>(region_labels.size()) != values.cols())
        throw data_error("shape", "subject " + subject_id + ": " +
                                      std::to_string(region_labels.size()) + " labels for " +
                                      std::to_string(values.cols()) + " regions");
    if (tr_seconds <= 0.0)
        throw data_error("data", "subject " + subject_id + ": tr_seconds must be positive");
    if (!values.allFinite()) {
        for (Eigen::Index t = 0; t < values.rows(); ++t)
            for (Eigen::Index b = 0; b < values.cols(); ++b)
                if (!std::isfinite(values(t, b)))
                    throw data_error("data", "subject " + subject_id + ": non-finite value at (" +
                                                 std::to_string(t) + "," + std::to_string(b) + ")");
    }
}

std::string to_string(Diagnosis d) {
    switch (d) {
    case Diagnosis::CN: return "CN";
    case Diagnosis::aMCI: return "aMCI";
    case Diagnosis::DAT: return "DAT";
    }
    return "?";
}

Diagnosis diagnosis_from_string(const std::string& s) {
    if (s == "CN") return Diagnosis::CN;
    if (s == "aMCI") return Diagnosis::aMCI;
    if (s == "DAT") return Diagnosis::DAT;
    throw data_error("class", "unknown diagnosis label '" + s + "' (expected CN, aMCI, or DAT)");
}

Matrix read_timeseries_csv(const std::string& path, std::vector<std::string>& labels_out) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open timeseries CSV: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw data_error("format", path + ": empty file (missing header row)");
    labels_out = split_csv_line(strip_cr(line));
    const std::size_t ncols = labels_out.size();
    if (ncols == 0) throw data_error("format", path + ": header row has no columns");

    std::vector<std::vector<double>> rows;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != ncols)
            throw data_error("format", path + ": row " + std::to_string(row_index) + " has " +
                                           std::to_string(fields.size()) + " fields, expected " +
                                           std::to_string(ncols));
        std::vector<double> vals(ncols);
        for (std::size_t c = 0; c < ncols; ++c) {
            const std::string& f = fields[c];
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (end == f.c_str() || (end && *end != '\0'))
                throw data_error("format", path + ": unparsable number '" + f + "' at row " +
                                               std::to_string(row_index) + ", col " +
                                               std::to_string(c));
            if (!std::isfinite(v))
                throw data_error("data", path + ": non-finite value at (" +
                                             std::to_string(row_index) + "," + std::to_string(c) +
                                             ")");
            vals[c] = v;
        }
        rows.push_back(std::move(vals));
        ++row_index;
    }

    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < ncols; ++c)
            m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
    return m;
}

void write_timeseries_csv(const std::string& path, const Matrix& values,
                          const std::vector<std::string>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != values.cols())
        throw data_error("shape", path + ": label count does not match column count");
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings on every platform
    if (!out) throw data_error("load", "cannot write timeseries CSV: " + path);
    for (std::size_t b = 0; b < labels.size(); ++b)
        out << (b ? "," : "") << labels[b];
    out << '\n';
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
        for (Eigen::Index b = 0; b < values.cols(); ++b)
            out << (b ? "," : "") << format_g9(values(t, b));
        out << '\n';
    }
    if (!out) throw data_error("load", "write failed: " + path);
}

namespace {

CohortManifest manifest_from_json(const json& j, const std::string& path) {
    CohortManifest m;
    try {
        m.tr_seconds = j.at("tr_seconds").get<double>();
        if (j.contains("score_names")) {
            const auto names = j.at("score_names").get<std::vector<std::string>>();
            if (names.size() != 3)
                throw data_error("format", path + ": score_names must list exactly 3 names");
            std::copy(names.begin(), names.end(), m.score_names.begin());
        }
        for (const auto& js : j.at("subjects")) {
            SubjectRecord r;
            r.subject_id = js.at("subject_id").get<std::string>();
            r.timeseries_path = js.at("timeseries_path").get<std::string>();
            if (js.contains("scores") && !js.at("scores").is_null()) {
                const auto& sc = js.at("scores");
                std::array<double, 3> vals{};
                for (int k = 0; k < 3; ++k) {
                    if (!sc.contains(m.score_names[k]))
                        throw data_error("format", path + ": subject " + r.subject_id +
                                                       " missing score '" + m.score_names[k] + "'");
                    vals[static_cast<std::size_t>(k)] = sc.at(m.score_names[k]).get<double>();
                }
                r.scores = vals;
            }
            if (js.contains("diagnosis") && !js.at("diagnosis").is_null())
                r.diagnosis = diagnosis_from_string(js.at("diagnosis").get<std::string>());
            if (js.contains("normative")) r.normative = js.at("normative").get<bool>();
            m.subjects.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw data_error("format", path + ": manifest JSON error: " + e.what());
    }

    if (m.tr_seconds <= 0.0) throw data_error("data", path + ": tr_seconds must be positive");
    std::set<std::string> ids;
    for (const auto& r : m.subjects)
        if (!ids.insert(r.subject_id).second)
            throw data_error("data", path + ": duplicate subject_id '" + r.subject_id + "'");
    for (const auto& r : m.subjects)
        if (r.normative && r.diagnosis && *r.diagnosis != Diagnosis::CN)
            throw data_error("data", path + ": subject " + r.subject_id +
                                         " is normative but not CN");
    return m;
}

}  // namespace

CohortManifest load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw data_error("load", "cannot open manifest: " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("format", manifest_path + ": invalid JSON: " + e.what());
    }
    return manifest_from_json(j, manifest_path);
}

Cohort load_cohort(const std::string& manifest_path) {
    Cohort cohort;
    cohort.manifest = load_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    cohort.timeseries.resize(cohort.manifest.subjects.size());
    parallel_for(cohort.manifest.subjects.size(), [&](std::size_t i) {
        const auto& rec = cohort.manifest.subjects[i];
        fs::path p(rec.timeseries_path);
        if (p.is_relative()) p = base / p;
        if (!fs::exists(p))
            throw data_error("load", "subject " + rec.subject_id +
                                         ": missing timeseries file " + p.string());
        ParcellatedTimeseries ts;
        ts.subject_id = rec.subject_id;
        ts.tr_seconds = cohort.manifest.tr_seconds;
        ts.values = read_timeseries_csv(p.string(), ts.region_labels);
        ts.validate();
        cohort.timeseries[i] = std::move(ts);
    });

    // shape agreement across the cohort
    for (std::size_t i = 1; i < cohort.timeseries.size(); ++i) {
        const auto& a = cohort.timeseries[0];
        const auto& b = cohort.timeseries[i];
        if (a.regions() != b.regions())
            throw data_error("shape", "region count mismatch: subject " + a.subject_id + " has " +
                                          std::to_string(a.regions()) + ", subject " +
                                          b.subject_id + " has " + std::to_string(b.regions()));
        if (a.timepoints() != b.timepoints())
            throw data_error("shape", "timepoint count mismatch: subject " + a.subject_id +
                                          " has " + std::to_string(a.timepoints()) +
                                          ", subject " + b.subject_id + " has " +
                                          std::to_string(b.timepoints()));
    }
    return cohort;
}

namespace {

json manifest_to_json(const CohortManifest& m) {
    json j;
    j["tr_seconds"] = m.tr_seconds;
    j["score_names"] = m.score_names;
    j["subjects"] = json::array();
    for (const auto& r : m.subjects) {
        json js;
        js["subject_id"] = r.subject_id;
        js["timeseries_path"] = r.timeseries_path;
        if (r.scores) {
            json sc;
            for (int k = 0; k < 3; ++k)
                sc[m.score_names[static_cast<std::size_t>(k)]] =
                    (*r.scores)[static_cast<std::size_t>(k)];
            js["scores"] = sc;
        } else {
            js["scores"] = nullptr;
        }
        js["diagnosis"] = r.diagnosis ? json(to_string(*r.diagnosis)) : json(nullptr);
        js["normative"] = r.normative;
        j["subjects"].push_back(js);
    }
    return j;
}

}  // namespace

void save_cohort(const Cohort& cohort, const std::string& dir, const std::string& manifest_name) {
    fs::create_directories(dir);
    CohortManifest manifest = cohort.manifest;
    for (std::size_t i = 0; i < cohort.timeseries.size(); ++i) {
        const auto& ts = cohort.timeseries[i];
        const std::string fname = ts.subject_id + ".csv";
        write_timeseries_csv((fs::path(dir) / fname).string(), ts.values, ts.region_labels);
        manifest.subjects[i].timeseries_path = fname;
    }
    std::ofstream out(fs::path(dir) / manifest_name, std::ios::binary);
    if (!out) throw data_error("load", "cannot write manifest in " + dir);
    out << manifest_to_json(manifest).dump(2) << '\n';
}

CohortManifest zscore_scores(const CohortManifest& manifest) {
    CohortManifest out = manifest;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> norm_vals;
        for (const auto& r : manifest.subjects)
            if (r.normative && r.scores) norm_vals.push_back((*r.scores)[static_cast<std::size_t>(k)]);
        if (norm_vals.size() < 2)
            throw data_error("data", "z-scoring needs >= 2 normative subjects with scores, got " +
                                         std::to_string(norm_vals.size()));
        double mu = 0.0;
        for (double v : norm_vals) mu += v;
        mu /= static_cast<double>(norm_vals.size());
        double ss = 0.0;
        for (double v : norm_vals) ss += (v - mu) * (v - mu);
        const double sigma = std::sqrt(ss / static_cast<double>(norm_vals.size() - 1));
        if (sigma == 0.0)
            throw data_error("degenerate",
                             "normative '" + manifest.score_names[static_cast<std::size_t>(k)] +
                                 "' scores are all equal; z-scoring undefined");
        for (auto& r : out.subjects)
            if (r.scores)
                (*r.scores)[static_cast<std::size_t>(k)] =
                    ((*r.scores)[static_cast<std::size_t>(k)] - mu) / sigma;
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (n_subjects < 4) throw data_error("data", "synthetic spec: n_subjects must be >= 4");
    if (n_regions < 2) throw data_error("data", "synthetic spec: n_regions must be >= 2");
    if (n_timepoints < 2) throw data_error("data", "synthetic spec: n_timepoints must be >= 2");
    if (tr_seconds <= 0.0) throw data_error("data", "synthetic spec: tr_seconds must be positive");
    if (coupling <= 0.0) throw data_error("data", "synthetic spec: coupling must be positive");
    for (int r : informative_regions)
        if (r < 0 || r >= n_regions)
            throw data_error("data", "synthetic spec: informative region " + std::to_string(r) +
                                         " out of range [0," + std::to_string(n_regions) + ")");
}

SyntheticSpec synthetic_spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open synthetic spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("format", path + ": invalid JSON: " + e.what());
    }
    SyntheticSpec s;
    try {
        s.n_subjects = j.at("n_subjects").get<int>();
        s.n_regions = j.at("n_regions").get<int>();
        s.n_timepoints = j.at("n_timepoints").get<int>();
        s.tr_seconds = j.at("tr_seconds").get<double>();
        s.informative_regions = j.at("informative_regions").get<std::vector<int>>();
        s.coupling = j.at("coupling").get<double>();
        const std::string mode = j.value("mode", std::string("dynamics_only"));
        if (mode == "dynamics_only") s.mode = SyntheticMode::dynamics_only;
        else if (mode == "mixed") s.mode = SyntheticMode::mixed;
        else throw data_error("format", path + ": unknown mode '" + mode + "'");
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw data_error("format", path + ": synthetic spec JSON error: " + e.what());
    }
    s.validate();
    return s;
}

namespace {

// x_t = rho x_{t-1} + sqrt(1-rho^2) eps_t, x_0 ~ N(0,1); stationary unit variance
std::vector<double> ar1_series(Rng& rng, int t_len, double rho) {
    std::vector<double> x(static_cast<std::size_t>(t_len));
    x[0] = rng.normal();
    const double w = std::sqrt(1.0 - rho * rho);
    for (int t = 1; t < t_len; ++t)
        x[static_cast<std::size_t>(t)] = rho * x[static_cast<std::size_t>(t - 1)] + w * rng.normal();
    return x;
}

// damped oscillation x_t = 2 r cos(theta) x_{t-1} - r^2 x_{t-2} + sigma eps_t
// with sigma set for unit stationary variance and (x_0, x_1) drawn from the
// stationary law, so no burn-in is needed. Innovations are a two-point
// Gaussian scale mixture: with probability burst_prob the draw is scaled
// by burst_gain, renormalized to unit variance, so burst_gain sets the
// innovation kurtosis without touching the spectrum. Per step t >= 2 the
// draw order is (uniform, normal); t = 0 and 1 draw one normal each.
std::vector<double> oscillator_series(Rng& rng, int t_len, double r, double theta,
                                      double burst_gain, double burst_prob) {
    const double phi1 = 2.0 * r * std::cos(theta);
    const double phi2 = -r * r;
    const double rho1 = phi1 / (1.0 - phi2);
    const double sigma = std::sqrt((1.0 + phi2) *
                                   ((1.0 - phi2) * (1.0 - phi2) - phi1 * phi1) / (1.0 - phi2));
    const double mix_norm =
        std::sqrt(1.0 - burst_prob + burst_prob * burst_gain * burst_gain);
    std::vector<double> x(static_cast<std::size_t>(t_len));
    x[0] = rng.normal();
    if (t_len > 1) x[1] = rho1 * x[0] + std::sqrt(1.0 - rho1 * rho1) * rng.normal();
    for (int t = 2; t < t_len; ++t) {
        const double g = rng.uniform(0.0, 1.0) < burst_prob ? burst_gain : 1.0;
        const double eps = g * rng.normal() / mix_norm;
        x[static_cast<std::size_t>(t)] = phi1 * x[static_cast<std::size_t>(t - 1)] +
                                         phi2 * x[static_cast<std::size_t>(t - 2)] +
                                         sigma * eps;
    }
    return x;
}

constexpr double kOscRadius = 0.95;
constexpr double kBurstProb = 0.2;

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

SyntheticCohort generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();

    const int width_n = static_cast<int>(std::to_string(spec.n_subjects - 1).size());
    const int width_b = static_cast<int>(std::to_string(spec.n_regions - 1).size());
    std::vector<std::string> labels(static_cast<std::size_t>(spec.n_regions));
    for (int b = 0; b < spec.n_regions; ++b)
        labels[static_cast<std::size_t>(b)] = "r" + zero_pad(b, width_b);

    std::vector<bool> informative(static_cast<std::size_t>(spec.n_regions), false);
    for (int r : spec.informative_regions) informative[static_cast<std::size_t>(r)] = true;

    SyntheticCohort out;
    out.truth.informative_regions = spec.informative_regions;
    out.truth.mode = spec.mode;
    out.truth.coupling = spec.coupling;
    out.truth.seed = spec.seed;
    out.truth.score.resize(static_cast<std::size_t>(spec.n_subjects));
    out.cohort.manifest.tr_seconds = spec.tr_seconds;
    out.cohort.manifest.subjects.resize(static_cast<std::size_t>(spec.n_subjects));
    out.cohort.timeseries.resize(static_cast<std::size_t>(spec.n_subjects));

    parallel_for(static_cast<std::size_t>(spec.n_subjects), [&](std::size_t i) {
        Rng rng(spec.seed ^ static_cast<std::uint64_t>(i));
        const int t_len = spec.n_timepoints;

        // draw order is part of the format: s, memory, language, shared
        // latent (mixed only), then regions in index order
        const double s = rng.uniform(-2.0, 2.0);
        const double mem = s + 0.25 * rng.normal();
        const double lang = s + 0.25 * rng.normal();

        std::vector<double> common;
        if (spec.mode == SyntheticMode::mixed) common = ar1_series(rng, t_len, 0.3);

        Matrix x(t_len, spec.n_regions);
        for (int b = 0; b < spec.n_regions; ++b) {
            if (informative[static_cast<std::size_t>(b)]) {
                const double f_hz = std::clamp(0.05 + 0.044 * spec.coupling * s, 0.012, 0.088);
                const double theta = 2.0 * std::numbers::pi * f_hz * spec.tr_seconds;
                const double gain = 1.0 + 2.0 * spec.coupling * (s + 2.0);
                auto series = oscillator_series(rng, t_len, kOscRadius, theta, gain, kBurstProb);
                if (spec.mode == SyntheticMode::mixed) {
                    const double w = std::clamp(0.3 + 0.25 * spec.coupling * s, 0.05, 0.9);
                    const double v = std::sqrt(1.0 - w * w);
                    for (int t = 0; t < t_len; ++t)
                        x(t, b) = v * series[static_cast<std::size_t>(t)] +
                                  w * common[static_cast<std::size_t>(t)];
                } else {
                    for (int t = 0; t < t_len; ++t) x(t, b) = series[static_cast<std::size_t>(t)];
                }
            } else {
                auto series = ar1_series(rng, t_len, 0.3);
                // independent measurement noise keeps these regions off
                // the exact AR(1) manifold; 1/sqrt(1.25) restores ~unit scale
                const double inv = 1.0 / std::sqrt(1.25);
                for (int t = 0; t < t_len; ++t)
                    x(t, b) = (series[static_cast<std::size_t>(t)] + 0.5 * rng.normal()) * inv;
            }
        }

        if (spec.mode == SyntheticMode::dynamics_only) {
            for (int b = 0; b < spec.n_regions; ++b) {
                const double mu = x.col(b).mean();
                const double sd = std::sqrt((x.col(b).array() - mu).square().sum() /
                                            static_cast<double>(t_len - 1));
                x.col(b) = (x.col(b).array() - mu) / sd;
            }
        }

        SubjectRecord rec;
        rec.subject_id = "s" + zero_pad(static_cast<int>(i), width_n);
        rec.timeseries_path = rec.subject_id + ".csv";
        rec.scores = std::array<double, 3>{s, mem, lang};
        rec.diagnosis = s >= 0.5 ? Diagnosis::CN : (s <= -1.0 ? Diagnosis::DAT : Diagnosis::aMCI);
        rec.normative = (*rec.diagnosis == Diagnosis::CN);

        ParcellatedTimeseries ts;
        ts.subject_id = rec.subject_id;
        ts.tr_seconds = spec.tr_seconds;
        ts.region_labels = labels;
        ts.values = std::move(x);

        out.truth.score[i] = s;
        out.cohort.manifest.subjects[i] = std::move(rec);
        out.cohort.timeseries[i] = std::move(ts);
    });

    return out;
}

void save_synthetic(const SyntheticCohort& synth, const std::string& dir) {
    save_cohort(synth.cohort, dir);
    json j;
    j["score"] = synth.truth.score;
    j["informative_regions"] = synth.truth.informative_regions;
    j["mode"] = synth.truth.mode == SyntheticMode::dynamics_only ? "dynamics_only" : "mixed";
    j["coupling"] = synth.truth.coupling;
    j["seed"] = synth.truth.seed;
    std::ofstream out(fs::path(dir) / "ground_truth.json", std::ios::binary);
    if (!out) throw data_error("load", "cannot write ground_truth.json in " + dir);
    out << j.dump(2) << '\n';
}

SyntheticGroundTruth load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open ground truth: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("format", path + ": invalid JSON: " + e.what());
    }
    SyntheticGroundTruth t;
    t.score = j.at("score").get<std::vector<double>>();
    t.informative_regions = j.at("informative_regions").get<std::vector<int>>();
    t.mode = j.at("mode").get<std::string>() == "mixed" ? SyntheticMode::mixed
                                                        : SyntheticMode::dynamics_only;
    t.coupling = j.value("coupling", 0.0);
    t.seed = j.value("seed", std::uint64_t{0});
    return t;
}

}  // namespace nm
