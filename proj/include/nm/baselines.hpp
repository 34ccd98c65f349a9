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

#include "nm/common.hpp"
#include "nm/dataio.hpp"

namespace nm {

struct ConnectivityMatrix {
    std::string subject_id;
    Matrix values;  // B x B, symmetric, unit diagonal
};

/* Pearson product-moment correlation matrix over regions, sample (n-1)
 * covariance. Zero-variance regions are degenerate-region errors. */
ConnectivityMatrix fcm(const ParcellatedTimeseries& ts);

/* Strict upper triangle in row-major order (j < k, j ascending then k);
 * length B(B-1)/2. */
Vector vectorize_upper(const ConnectivityMatrix& c);

struct IcaOptions {
    int max_iter = 500;
    double tol = 1e-5;
    std::uint64_t seed = 0;
};

struct UnmixingResult {
    Matrix unmixing;   // K x B, maps centered data rows to component space
    Matrix mixing;     // B x K, pseudo-inverse of unmixing
    Matrix whitener;   // K x B, PCA whitening of centered data
    Vector mean;       // B, column means of the fit data
    Matrix rotation;   // K x K, orthonormal rows (unmixing in whitened coordinates)
    int n_components = 0;
    bool converged = false;
    int iterations = 0;
};

/* Symmetric FastICA with tanh contrast (derivative of log cosh) on data
 * centered and PCA-whitened to K dimensions. Convergence when
 * max_k (1 - |<w_new_k, w_old_k>|) < tol. Non-convergence sets the flag
 * but is not an error; insufficient rank is. */
UnmixingResult ica_fit(const Matrix& data, int k, int max_iter, double tol,
                       std::uint64_t seed = 0);

/* Per-subject ICA summary: K component-timecourse variances followed by
 * the strict upper triangle of the K x K timecourse correlation;
 * D = K(K+1)/2. Components sorted by descending timecourse variance with
 * the largest-magnitude spatial weight made positive. */
Vector ica_features_individual(const ParcellatedTimeseries& ts, int k, const IcaOptions& opts);

struct GroupIcaResult {
    UnmixingResult shared;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> subject_rows;  // [begin, end) in G
    std::vector<Matrix> component_timecourses;                        // per subject, T x K
};

struct FeatureMatrix {
    Matrix values;  // N x D
    std::vector<std::string> feature_names;
    std::vector<std::string> subject_ids;
};

/* Temporal-concatenation group ICA: one fit on the stacked (T*N) x B
 * matrix, shared components projected back per subject. */
FeatureMatrix group_ica_features(const std::vector<ParcellatedTimeseries>& all_ts, int k,
                                 const IcaOptions& opts, GroupIcaResult* detail = nullptr);

/* Amplitude of low-frequency fluctuations: per region, the mean of
 * sqrt(|DFT coefficient|) over bins k >= 1 with f_lo <= k/(T*tr) <= f_hi. */
Vector alff(const ParcellatedTimeseries& ts, double f_lo, double f_hi);

/* DFT bin indices selected by the band; empty band is an error naming the
 * resolution and limits. */
std::vector<int> alff_band_bins(int t_len, double tr_seconds, double f_lo, double f_hi);

enum class FeatureMethod { fcm, iica, gica, alff };

FeatureMethod feature_method_from_string(const std::string& s);

struct FeatureOptions {
    FeatureMethod method = FeatureMethod::fcm;
    int ica_components = 32;
    IcaOptions ica;
    double alff_f_lo = 0.008;
    double alff_f_hi = 0.09;
};

/* Cohort-level extraction; parallel over subjects for the per-subject
 * methods. */
FeatureMatrix extract_features(const Cohort& cohort, const FeatureOptions& opts);

/* Feature CSV: header "subject_id,<feature names...>", one row per
 * subject, 9 significant digits. */
void write_feature_csv(const std::string& path, const FeatureMatrix& f);
FeatureMatrix read_feature_csv(const std::string& path);

}  // namespace nm
