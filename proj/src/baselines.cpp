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

#include "nm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nm/fft.hpp"

namespace nm {

namespace {

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

ConnectivityMatrix fcm(const ParcellatedTimeseries& ts) {
    ts.validate();
    const Eigen::Index t_len = ts.timepoints();
    const Eigen::Index b_len = ts.regions();

    Matrix centered = ts.values.rowwise() - ts.values.colwise().mean();
    Vector sd(b_len);
    for (Eigen::Index b = 0; b < b_len; ++b) {
        sd(b) = std::sqrt(centered.col(b).squaredNorm() / static_cast<double>(t_len - 1));
        if (sd(b) == 0.0)
            throw data_error("degenerate", "subject " + ts.subject_id + ": region " +
                                               std::to_string(b) + " (" +
                                               ts.region_labels[static_cast<std::size_t>(b)] +
                                               ") has zero temporal variance");
    }

    Matrix cov = centered.transpose() * centered / static_cast<double>(t_len - 1);
    ConnectivityMatrix out;
    out.subject_id = ts.subject_id;
    out.values = cov.array() / (sd * sd.transpose()).array();
    out.values = ((out.values + out.values.transpose()) / 2.0).eval();  // exact symmetry
    out.values = out.values.cwiseMax(-1.0).cwiseMin(1.0);
    out.values.diagonal().setOnes();
    return out;
}

Vector vectorize_upper(const ConnectivityMatrix& c) {
    const Eigen::Index b_len = c.values.rows();
    Vector v(b_len * (b_len - 1) / 2);
    Eigen::Index idx = 0;
    for (Eigen::Index j = 0; j < b_len; ++j)
        for (Eigen::Index k = j + 1; k < b_len; ++k) v(idx++) = c.values(j, k);
    return v;
}

namespace {

// M^(-1/2) for symmetric positive definite M
Matrix inv_sqrt_spd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success)
        throw numeric_error("solve", "eigendecomposition failed in orthonormalization");
    const Vector ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0)
        throw numeric_error("solve", "non-positive spectrum in orthonormalization");
    return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

/* Sorts components by descending timecourse variance (stable, so the fit
 * order breaks ties) and fixes each sign so the largest-magnitude mixing
 * weight is positive. Timecourses S are the components on the fit data. */
void canonicalize_components(UnmixingResult& r, Matrix& s) {
    const int k_len = r.n_components;
    const Eigen::Index m_rows = s.rows();

    Vector var(k_len);
    for (int k = 0; k < k_len; ++k) {
        const double mu = s.col(k).mean();
        var(k) = (s.col(k).array() - mu).square().sum() / static_cast<double>(m_rows - 1);
    }

    std::vector<int> order(static_cast<std::size_t>(k_len));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return var(a) > var(b); });

    Matrix unmix(k_len, r.unmixing.cols());
    Matrix mix(r.mixing.rows(), k_len);
    Matrix rot(k_len, k_len);
    Matrix s_sorted(m_rows, k_len);
    for (int k = 0; k < k_len; ++k) {
        const int src = order[static_cast<std::size_t>(k)];
        Eigen::Index peak;
        r.mixing.col(src).cwiseAbs().maxCoeff(&peak);
        const double sign = r.mixing(peak, src) < 0.0 ? -1.0 : 1.0;
        unmix.row(k) = sign * r.unmixing.row(src);
        mix.col(k) = sign * r.mixing.col(src);
        rot.row(k) = sign * r.rotation.row(src);
        s_sorted.col(k) = sign * s.col(src);
    }
    r.unmixing = std::move(unmix);
    r.mixing = std::move(mix);
    r.rotation = std::move(rot);
    s = std::move(s_sorted);
}

}  // namespace

UnmixingResult ica_fit(const Matrix& data, int k, int max_iter, double tol, std::uint64_t seed) {
    const Eigen::Index m_rows = data.rows();
    const Eigen::Index b_len = data.cols();
    if (k < 1) throw data_error("rank", "ica_fit: K must be >= 1");
    if (k > b_len)
        throw data_error("rank", "ica_fit: K=" + std::to_string(k) + " exceeds data dimension " +
                                     std::to_string(b_len));
    if (m_rows <= k)
        throw data_error("rank", "ica_fit: needs more than K=" + std::to_string(k) +
                                     " samples, got " + std::to_string(m_rows));
    if (!data.allFinite()) throw data_error("data", "ica_fit: non-finite input");

    UnmixingResult r;
    r.n_components = k;
    r.mean = data.colwise().mean();
    Matrix centered = data.rowwise() - r.mean.transpose();

    Matrix cov = centered.transpose() * centered / static_cast<double>(m_rows - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success)
        throw numeric_error("solve", "ica_fit: covariance eigendecomposition failed");
    const Vector ev = es.eigenvalues();  // ascending
    const double rank_floor = std::max(ev(b_len - 1), 0.0) * 1e-10;
    if (ev(b_len - k) <= rank_floor)
        throw data_error("rank", "ica_fit: data rank below K=" + std::to_string(k));

    // top-K eigenpairs, leading component first
    Matrix basis(b_len, k);
    Vector lam(k);
    for (int j = 0; j < k; ++j) {
        basis.col(j) = es.eigenvectors().col(b_len - 1 - j);
        lam(j) = ev(b_len - 1 - j);
    }
    r.whitener = lam.cwiseSqrt().cwiseInverse().asDiagonal() * basis.transpose();  // K x B
    Matrix whitened = centered * r.whitener.transpose();                           // M x K

    Rng rng(seed);
    Matrix rot(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) rot(i, j) = rng.normal();
    rot = inv_sqrt_spd(rot * rot.transpose()) * rot;

    r.converged = false;
    r.iterations = 0;
    const double inv_m = 1.0 / static_cast<double>(m_rows);
    for (int it = 0; it < max_iter; ++it) {
        Matrix s = whitened * rot.transpose();     // M x K
        Matrix g = s.array().tanh();               // contrast derivative
        Vector gp_mean = (1.0 - g.array().square()).colwise().mean();
        Matrix next = (g.transpose() * whitened) * inv_m - gp_mean.asDiagonal() * rot;
        next = inv_sqrt_spd(next * next.transpose()) * next;

        double drift = 0.0;
        for (int j = 0; j < k; ++j)
            drift = std::max(drift, 1.0 - std::abs(next.row(j).dot(rot.row(j))));
        rot = std::move(next);
        r.iterations = it + 1;
        if (drift < tol) {
            r.converged = true;
            break;
        }
    }

    r.rotation = rot;
    r.unmixing = rot * r.whitener;                                        // K x B
    r.mixing = basis * lam.cwiseSqrt().asDiagonal() * rot.transpose();    // B x K

    Matrix s = centered * r.unmixing.transpose();
    canonicalize_components(r, s);
    return r;
}

namespace {

Vector component_summary(const Matrix& timecourses) {
    const int k_len = static_cast<int>(timecourses.cols());
    const Eigen::Index t_len = timecourses.rows();
    Vector features(k_len + k_len * (k_len - 1) / 2);

    Matrix centered = timecourses.rowwise() - timecourses.colwise().mean();
    Vector var(k_len), sd(k_len);
    for (int j = 0; j < k_len; ++j) {
        var(j) = centered.col(j).squaredNorm() / static_cast<double>(t_len - 1);
        sd(j) = std::sqrt(var(j));
        features(j) = var(j);
    }
    Eigen::Index idx = k_len;
    for (int j = 0; j < k_len; ++j)
        for (int k2 = j + 1; k2 < k_len; ++k2) {
            const double denom = sd(j) * sd(k2);
            const double cov = centered.col(j).dot(centered.col(k2)) /
                               static_cast<double>(t_len - 1);
            features(idx++) = denom > 0.0 ? std::clamp(cov / denom, -1.0, 1.0) : 0.0;
        }
    return features;
}

std::string ic_name(int j, int width) {
    std::string s = std::to_string(j + 1);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return "ic" + s;
}

std::vector<std::string> component_feature_names(int k_len) {
    const int width = static_cast<int>(std::to_string(k_len).size());
    std::vector<std::string> names;
    for (int j = 0; j < k_len; ++j) names.push_back(ic_name(j, width) + "_var");
    for (int j = 0; j < k_len; ++j)
        for (int k2 = j + 1; k2 < k_len; ++k2)
            names.push_back("corr_" + ic_name(j, width) + "_" + ic_name(k2, width));
    return names;
}

}  // namespace

Vector ica_features_individual(const ParcellatedTimeseries& ts, int k, const IcaOptions& opts) {
    const UnmixingResult r = ica_fit(ts.values, k, opts.max_iter, opts.tol, opts.seed);
    Matrix centered = ts.values.rowwise() - r.mean.transpose();
    Matrix timecourses = centered * r.unmixing.transpose();
    return component_summary(timecourses);
}

FeatureMatrix group_ica_features(const std::vector<ParcellatedTimeseries>& all_ts, int k,
                                 const IcaOptions& opts, GroupIcaResult* detail) {
    if (all_ts.empty()) throw data_error("data", "group ICA: empty cohort");
    const Eigen::Index t_len = all_ts[0].timepoints();
    const Eigen::Index b_len = all_ts[0].regions();
    for (const auto& ts : all_ts)
        if (ts.timepoints() != t_len || ts.regions() != b_len)
            throw data_error("shape", "group ICA: subject " + ts.subject_id +
                                          " shape differs from the first subject");

    const Eigen::Index n = static_cast<Eigen::Index>(all_ts.size());
    Matrix g(t_len * n, b_len);
    for (Eigen::Index i = 0; i < n; ++i)
        g.middleRows(i * t_len, t_len) = all_ts[static_cast<std::size_t>(i)].values;

    GroupIcaResult local;
    GroupIcaResult& gr = detail ? *detail : local;
    gr.shared = ica_fit(g, k, opts.max_iter, opts.tol, opts.seed);
    gr.subject_rows.clear();
    gr.component_timecourses.assign(static_cast<std::size_t>(n), Matrix());

    FeatureMatrix out;
    out.feature_names = component_feature_names(k);
    out.subject_ids.resize(static_cast<std::size_t>(n));
    out.values.resize(n, static_cast<Eigen::Index>(out.feature_names.size()));

    for (Eigen::Index i = 0; i < n; ++i)
        gr.subject_rows.emplace_back(i * t_len, (i + 1) * t_len);

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto& ts = all_ts[i];
        Matrix centered = ts.values.rowwise() - gr.shared.mean.transpose();
        Matrix timecourses = centered * gr.shared.unmixing.transpose();
        out.values.row(static_cast<Eigen::Index>(i)) = component_summary(timecourses).transpose();
        out.subject_ids[i] = ts.subject_id;
        gr.component_timecourses[i] = std::move(timecourses);
    });
    return out;
}

std::vector<int> alff_band_bins(int t_len, double tr_seconds, double f_lo, double f_hi) {
    if (t_len < 2 || tr_seconds <= 0.0)
        throw data_error("band", "alff: invalid T or tr");
    if (f_lo < 0.0 || f_hi <= f_lo)
        throw data_error("band", "alff: need 0 <= f_lo < f_hi, got [" + std::to_string(f_lo) +
                                     ", " + std::to_string(f_hi) + "]");
    const double duration = static_cast<double>(t_len) * tr_seconds;
    const double resolution = 1.0 / duration;
    std::vector<int> bins;
    for (int k = 1; k < t_len; ++k) {
        const double f = static_cast<double>(k) * resolution;
        // tiny relative slack keeps exact band edges in the bin set
        if (f >= f_lo * (1.0 - 1e-12) && f <= f_hi * (1.0 + 1e-12)) bins.push_back(k);
    }
    if (bins.empty() || resolution > f_hi - f_lo)
        throw data_error("band", "alff: no DFT bin inside [" + std::to_string(f_lo) + ", " +
                                     std::to_string(f_hi) + "] Hz at resolution " +
                                     std::to_string(resolution) + " Hz");
    return bins;
}

Vector alff(const ParcellatedTimeseries& ts, double f_lo, double f_hi) {
    ts.validate();
    const int t_len = static_cast<int>(ts.timepoints());
    const auto bins = alff_band_bins(t_len, ts.tr_seconds, f_lo, f_hi);

    Vector out(ts.regions());
    for (Eigen::Index b = 0; b < ts.regions(); ++b) {
        std::vector<double> x(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t) x[static_cast<std::size_t>(t)] = ts.values(t, b);
        const auto spectrum = dft(x);
        double acc = 0.0;
        for (int k : bins) acc += std::sqrt(std::abs(spectrum[static_cast<std::size_t>(k)]));
        out(b) = acc / static_cast<double>(bins.size());
    }
    return out;
}

FeatureMethod feature_method_from_string(const std::string& s) {
    if (s == "fcm") return FeatureMethod::fcm;
    if (s == "iica") return FeatureMethod::iica;
    if (s == "gica") return FeatureMethod::gica;
    if (s == "alff") return FeatureMethod::alff;
    throw usage_error("unknown feature method '" + s + "' (expected fcm, iica, gica, alff)");
}

FeatureMatrix extract_features(const Cohort& cohort, const FeatureOptions& opts) {
    if (cohort.timeseries.empty()) throw data_error("data", "feature extraction: empty cohort");
    const auto& first = cohort.timeseries[0];
    const std::size_t n = cohort.timeseries.size();

    FeatureMatrix out;
    out.subject_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.subject_ids[i] = cohort.timeseries[i].subject_id;

    switch (opts.method) {
    case FeatureMethod::fcm: {
        for (Eigen::Index j = 0; j < first.regions(); ++j)
            for (Eigen::Index k = j + 1; k < first.regions(); ++k)
                out.feature_names.push_back(
                    "fc_" + first.region_labels[static_cast<std::size_t>(j)] + "_" +
                    first.region_labels[static_cast<std::size_t>(k)]);
        out.values.resize(static_cast<Eigen::Index>(n),
                          static_cast<Eigen::Index>(out.feature_names.size()));
        parallel_for(n, [&](std::size_t i) {
            out.values.row(static_cast<Eigen::Index>(i)) =
                vectorize_upper(fcm(cohort.timeseries[i])).transpose();
        });
        break;
    }
    case FeatureMethod::alff: {
        for (const auto& label : first.region_labels) out.feature_names.push_back("alff_" + label);
        out.values.resize(static_cast<Eigen::Index>(n), first.regions());
        parallel_for(n, [&](std::size_t i) {
            out.values.row(static_cast<Eigen::Index>(i)) =
                alff(cohort.timeseries[i], opts.alff_f_lo, opts.alff_f_hi).transpose();
        });
        break;
    }
    case FeatureMethod::iica: {
        out.feature_names = component_feature_names(opts.ica_components);
        out.values.resize(static_cast<Eigen::Index>(n),
                          static_cast<Eigen::Index>(out.feature_names.size()));
        parallel_for(n, [&](std::size_t i) {
            out.values.row(static_cast<Eigen::Index>(i)) =
                ica_features_individual(cohort.timeseries[i], opts.ica_components, opts.ica)
                    .transpose();
        });
        break;
    }
    case FeatureMethod::gica: {
        out = group_ica_features(cohort.timeseries, opts.ica_components, opts.ica);
        break;
    }
    }
    return out;
}

void write_feature_csv(const std::string& path, const FeatureMatrix& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("load", "cannot write feature CSV: " + path);
    out << "subject_id";
    for (const auto& name : f.feature_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index i = 0; i < f.values.rows(); ++i) {
        out << f.subject_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < f.values.cols(); ++j)
            out << ',' << format_g9(f.values(i, j));
        out << '\n';
    }
    if (!out) throw data_error("load", "write failed: " + path);
}

FeatureMatrix read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open feature CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("format", path + ": empty feature CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    FeatureMatrix f;
    {
        std::stringstream ss(line);
        std::string field;
        bool head = true;
        while (std::getline(ss, field, ',')) {
            if (head) {
                if (field != "subject_id")
                    throw data_error("format", path + ": first column must be subject_id");
                head = false;
            } else {
                f.feature_names.push_back(field);
            }
        }
    }
    std::vector<std::vector<double>> rows;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        f.subject_ids.push_back(field);
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) {
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (end == field.c_str() || (end && *end != '\0'))
                throw data_error("format", path + ": unparsable number '" + field + "' at row " +
                                               std::to_string(row_index));
            vals.push_back(v);
        }
        if (vals.size() != f.feature_names.size())
            throw data_error("format", path + ": row " + std::to_string(row_index) + " has " +
                                           std::to_string(vals.size()) + " features, expected " +
                                           std::to_string(f.feature_names.size()));
        rows.push_back(std::move(vals));
        ++row_index;
    }
    f.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(f.feature_names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return f;
}

}  // namespace nm
