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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nm/common.hpp"

namespace nm {

/* One subject's parcellated resting-state recording: values(t, b) is the
 * z-scored BOLD signal of region b at sample t. */
struct ParcellatedTimeseries {
    std::string subject_id;
    Matrix values;  // T x B
    double tr_seconds = 0.0;
    std::vector<std::string> region_labels;

    Eigen::Index timepoints() const { return values.rows(); }
    Eigen::Index regions() const { return values.cols(); }

    // throws data errors on T < 2, B < 2, label mismatch, non-finite cells
    void validate() const;
};

enum class Diagnosis { CN, aMCI, DAT };

std::string to_string(Diagnosis d);
Diagnosis diagnosis_from_string(const std::string& s);

struct SubjectRecord {
    std::string subject_id;
    std::string timeseries_path;
    std::optional<std::array<double, 3>> scores;  // ordered per CohortManifest::score_names
    std::optional<Diagnosis> diagnosis;
    bool normative = false;
};

struct CohortManifest {
    std::vector<SubjectRecord> subjects;
    double tr_seconds = 0.0;
    std::array<std::string, 3> score_names = {"moca", "memory", "language"};
};

struct Cohort {
    CohortManifest manifest;
    std::vector<ParcellatedTimeseries> timeseries;  // aligned with manifest.subjects

    std::size_t size() const { return manifest.subjects.size(); }
};

/* Timeseries CSV: header row = region labels, row t / column b = X[t,b].
 * Values written with 9 significant digits, LF endings, '.' decimal. */
Matrix read_timeseries_csv(const std::string& path, std::vector<std::string>& labels_out);
void write_timeseries_csv(const std::string& path, const Matrix& values,
                          const std::vector<std::string>& labels);

/* Loads the manifest plus every referenced timeseries. Relative
 * timeseries paths resolve against the manifest's directory. All subjects
 * must share B, T, and tr_seconds. */
Cohort load_cohort(const std::string& manifest_path);

CohortManifest load_manifest(const std::string& manifest_path);

/* Writes manifest.json plus one <subject_id>.csv per subject into dir. */
void save_cohort(const Cohort& cohort, const std::string& dir,
                 const std::string& manifest_name = "manifest.json");

/* Per score: z = (raw - mu) / sigma with mu, sigma the mean and sample
 * (n-1) standard deviation over normative subjects only. Requires >= 2
 * normative subjects with scores present; sigma = 0 is a degenerate-
 * normative error. */
CohortManifest zscore_scores(const CohortManifest& manifest);

enum class SyntheticMode { dynamics_only, mixed };

struct SyntheticSpec {
    int n_subjects = 0;
    int n_regions = 0;
    int n_timepoints = 0;
    double tr_seconds = 0.8;
    std::vector<int> informative_regions;
    double coupling = 0.0;  // kappa: score -> dynamics strength
    SyntheticMode mode = SyntheticMode::dynamics_only;
    std::uint64_t seed = 0;

    void validate() const;
};

SyntheticSpec synthetic_spec_from_json_file(const std::string& path);

struct SyntheticGroundTruth {
    std::vector<double> score;  // latent s per subject
    std::vector<int> informative_regions;
    SyntheticMode mode = SyntheticMode::dynamics_only;
    double coupling = 0.0;
    std::uint64_t seed = 0;
};

struct SyntheticCohort {
    Cohort cohort;
    SyntheticGroundTruth truth;
};

/* Plants a score-dependent temporal signal. Per subject i, with the
 * substream seeded by seed XOR i:
 *   s ~ Uniform(-2, 2); memory/language = s + 0.25 * N(0,1) each.
 *   Informative regions: unit-variance damped oscillation (AR(2), pole
 *       radius 0.95) whose center frequency and innovation burstiness
 *       both encode the score:
 *       f = clamp(0.05 + 0.044 * coupling * s, 0.012, 0.088) Hz, and
 *       with probability 0.08 an innovation is scaled by the burst gain
 *       1 + 1.5 * coupling * (s + 2) (variance renormalized), so the score
 *       sets the innovation kurtosis but not the spectrum.
 *   Other regions: unit-variance AR(1) at rho = 0.3 plus independent
 *       N(0, 0.5^2) measurement noise, renormalized to ~unit variance.
 * dynamics_only additionally z-scores every region (exact zero mean, unit
 * sample variance) so static correlations carry no score information.
 * mixed instead adds a shared latent to informative regions with a
 * score-dependent loading, planting signal in static correlations too.
 * Diagnosis terciles: s >= 0.5 CN (normative), s <= -1 DAT, else aMCI. */
SyntheticCohort generate_synthetic(const SyntheticSpec& spec);

/* Writes cohort files plus ground_truth.json into dir. */
void save_synthetic(const SyntheticCohort& synth, const std::string& dir);

SyntheticGroundTruth load_ground_truth(const std::string& path);

}  // namespace nm
