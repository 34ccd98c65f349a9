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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "nm/baselines.hpp"

using nm::ConnectivityMatrix;
using nm::Matrix;
using nm::ParcellatedTimeseries;
using nm::Vector;
using testutil::TempDir;

namespace {

ParcellatedTimeseries make_ts(const Matrix& values, double tr = 0.8) {
    ParcellatedTimeseries ts;
    ts.subject_id = "s0";
    ts.tr_seconds = tr;
    ts.values = values;
    ts.region_labels.resize(static_cast<std::size_t>(values.cols()));
    for (Eigen::Index b = 0; b < values.cols(); ++b)
        ts.region_labels[static_cast<std::size_t>(b)] = "r" + std::to_string(b);
    return ts;
}

double amari_index(const Matrix& p) {
    const Eigen::Index k = p.rows();
    const Matrix a = p.cwiseAbs();
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
        total += a.row(i).sum() / a.row(i).maxCoeff() - 1.0;
    for (Eigen::Index j = 0; j < k; ++j)
        total += a.col(j).sum() / a.col(j).maxCoeff() - 1.0;
    return total / (2.0 * static_cast<double>(k) * static_cast<double>(k - 1));
}

// empirical product measure: every pairing of the marginal grids, so the
// joint is exactly independent and the true axes are exact ICA fixed points
Matrix product_grid_sources(int m1, int m2) {
    Vector s1(m1), s2(m2);
    for (int i = 0; i < m1; ++i) {
        const double u = (i + 0.5) / m1 - 0.5;  // (-0.5, 0.5), symmetric
        s1[i] = (u < 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::abs(u));  // Laplace quantile
    }
    for (int j = 0; j < m2; ++j) s2[j] = (j + 0.5) / m2 - 0.5;  // uniform
    s1.array() -= s1.mean();
    s2.array() -= s2.mean();
    s1 /= std::sqrt(s1.squaredNorm() / (m1 - 1));
    s2 /= std::sqrt(s2.squaredNorm() / (m2 - 1));
    Matrix data(m1 * m2, 2);
    for (int i = 0; i < m1; ++i)
        for (int j = 0; j < m2; ++j) {
            data(i * m2 + j, 0) = s1[i];
            data(i * m2 + j, 1) = s2[j];
        }
    return data;
}

}  // namespace

TEST_CASE("fcm matches the Pearson formula") {
    Matrix x(3, 2);
    x << 1, 1, 2, 2, 3, 4;
    const ConnectivityMatrix c = nm::fcm(make_ts(x));
    REQUIRE(c.values.rows() == 2);
    CHECK(c.values(0, 0) == 1.0);
    CHECK(c.values(1, 1) == 1.0);
    CHECK(c.values(0, 1) == doctest::Approx(0.9819805060619656).epsilon(1e-12));
    CHECK(c.values(0, 1) == c.values(1, 0));
}

TEST_CASE("fcm perfect and anti correlation") {
    Matrix x(4, 3);
    x.col(0) << 1, 2, 3, 5;
    x.col(1) = x.col(0);
    x.col(2) = -x.col(0);
    const ConnectivityMatrix c = nm::fcm(make_ts(x));
    CHECK(c.values(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.values(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(c.values.maxCoeff() <= 1.0);
    CHECK(c.values.minCoeff() >= -1.0);
}

TEST_CASE("fcm rejects zero-variance regions by name") {
    Matrix x(4, 2);
    x.col(0) << 1, 2, 3, 4;
    x.col(1).setConstant(7.0);
    try {
        nm::fcm(make_ts(x));
        FAIL("expected degenerate error");
    } catch (const nm::Error& e) {
        CHECK(e.kind() == "degenerate");
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("fcm is invariant to positive affine maps per region") {
    nm::Rng rng(42);
    Matrix x(32, 4);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.normal();
    const ConnectivityMatrix base = nm::fcm(make_ts(x));

    Matrix y = x;
    y.col(0) = 3.5 * y.col(0).array() + 10.0;
    y.col(2) = 0.01 * y.col(2).array() - 4.0;
    const ConnectivityMatrix mapped = nm::fcm(make_ts(y));
    CHECK((base.values - mapped.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vectorize_upper follows row-major strict upper order") {
    ConnectivityMatrix c;
    c.values = Matrix::Identity(3, 3);
    c.values(0, 1) = c.values(1, 0) = 0.5;
    c.values(0, 2) = c.values(2, 0) = -0.25;
    c.values(1, 2) = c.values(2, 1) = 0.75;
    const Vector v = nm::vectorize_upper(c);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 0.5);
    CHECK(v[1] == -0.25);
    CHECK(v[2] == 0.75);

    SUBCASE("B=2 gives a single element") {
        ConnectivityMatrix c2;
        c2.values = Matrix::Identity(2, 2);
        c2.values(0, 1) = c2.values(1, 0) = 0.3;
        CHECK(nm::vectorize_upper(c2).size() == 1);
    }

    SUBCASE("B=272 gives 36856 features") {
        ConnectivityMatrix big;
        big.values = Matrix::Identity(272, 272);
        CHECK(nm::vectorize_upper(big).size() == 36856);
    }
}

TEST_CASE("region permutation permutes connectivity features consistently") {
    nm::Rng rng(7);
    const int b_count = 4;
    Matrix x(40, b_count);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.normal();

    const std::vector<int> perm = {2, 0, 3, 1};
    Matrix xp(40, b_count);
    for (int b = 0; b < b_count; ++b) xp.col(b) = x.col(perm[static_cast<std::size_t>(b)]);

    const ConnectivityMatrix c = nm::fcm(make_ts(x));
    const ConnectivityMatrix cp = nm::fcm(make_ts(xp));
    for (int j = 0; j < b_count; ++j)
        for (int k = 0; k < b_count; ++k)
            CHECK(cp.values(j, k) ==
                  doctest::Approx(c.values(perm[static_cast<std::size_t>(j)],
                                           perm[static_cast<std::size_t>(k)])).epsilon(1e-12));
}

TEST_CASE("ica recovers exactly independent sources as a signed permutation") {
    const Matrix data = product_grid_sources(220, 180);
    const nm::UnmixingResult r = nm::ica_fit(data, 2, 500, 1e-10, 3);
    CHECK(r.converged);

    // true mixing is the identity, so unmixing itself is the gain matrix
    Matrix g = r.unmixing;
    for (Eigen::Index i = 0; i < 2; ++i) g.row(i) /= g.row(i).norm();
    for (Eigen::Index i = 0; i < 2; ++i) {
        Eigen::Index arg = 0;
        g.row(i).cwiseAbs().maxCoeff(&arg);
        CHECK(std::abs(g.row(i).cwiseAbs()(arg) - 1.0) < 1e-3);
        CHECK(g.row(i).cwiseAbs()(1 - arg) < 1e-3);
    }

    SUBCASE("rotation rows stay orthonormal") {
        const Matrix gram = r.rotation * r.rotation.transpose();
        CHECK((gram - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("ica separates a random mixture of heavy-tailed sources") {
    const int m = 20000, k = 4;
    nm::Rng rng(11);
    Matrix s(m, k);
    for (Eigen::Index t = 0; t < m; ++t)
        for (Eigen::Index j = 0; j < k; ++j) s(t, j) = rng.laplace();
    Matrix a(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) a(i, j) = rng.normal();
    const Matrix data = s * a.transpose();

    const nm::UnmixingResult r = nm::ica_fit(data, k, 500, 1e-7, 1);
    const Matrix gain = r.unmixing * a;
    CHECK(amari_index(gain) < 0.05);
}

TEST_CASE("ica rank errors") {
    Matrix data = Matrix::Random(32, 3);

    SUBCASE("K above data dimension") {
        CHECK_THROWS_AS(nm::ica_fit(data, 4, 100, 1e-5), nm::Error);
    }

    SUBCASE("rank-deficient data") {
        data.col(2) = data.col(0);
        try {
            nm::ica_fit(data, 3, 100, 1e-5);
            FAIL("expected rank error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "rank");
        }
    }

    SUBCASE("too few rows") {
        Matrix tiny = Matrix::Random(3, 3);
        CHECK_THROWS_AS(nm::ica_fit(tiny, 3, 100, 1e-5), nm::Error);
    }
}

TEST_CASE("individual ica features have the documented layout") {
    nm::Rng rng(5);
    Matrix x(256, 4);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.laplace();
    const auto ts = make_ts(x);

    nm::IcaOptions opts;
    opts.seed = 2;
    const Vector f = nm::ica_features_individual(ts, 2, opts);
    REQUIRE(f.size() == 3);  // K variances + K(K-1)/2 correlations

    // variance block sorted descending, correlation block near zero
    CHECK(f[0] >= f[1]);
    CHECK(std::abs(f[2]) < 0.1);

    SUBCASE("deterministic given the seed") {
        const Vector g = nm::ica_features_individual(ts, 2, opts);
        CHECK((f - g).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("group ica with one subject matches individual features") {
    nm::Rng rng(9);
    Matrix x(200, 3);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.laplace();
    const auto ts = make_ts(x);

    nm::IcaOptions opts;
    opts.seed = 4;
    const Vector indiv = nm::ica_features_individual(ts, 2, opts);
    const nm::FeatureMatrix group = nm::group_ica_features({ts}, 2, opts);
    REQUIRE(group.values.rows() == 1);
    REQUIRE(group.values.cols() == indiv.size());
    CHECK((group.values.row(0).transpose() - indiv).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("group ica yields identical rows for identical subjects") {
    nm::Rng rng(13);
    Matrix x(128, 3);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index b = 0; b < x.cols(); ++b) x(t, b) = rng.laplace();
    auto ts0 = make_ts(x);
    auto ts1 = make_ts(x);
    ts1.subject_id = "s1";

    nm::IcaOptions opts;
    opts.seed = 6;
    nm::GroupIcaResult detail;
    const nm::FeatureMatrix f = nm::group_ica_features({ts0, ts1}, 2, opts, &detail);
    REQUIRE(f.values.rows() == 2);
    CHECK((f.values.row(0) - f.values.row(1)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(f.subject_ids == std::vector<std::string>{"s0", "s1"});

    // stacked index ranges cover the concatenation disjointly
    REQUIRE(detail.subject_rows.size() == 2);
    CHECK(detail.subject_rows[0].first == 0);
    CHECK(detail.subject_rows[0].second == 128);
    CHECK(detail.subject_rows[1].first == 128);
    CHECK(detail.subject_rows[1].second == 256);
}

TEST_CASE("group ica separates sub-cohorts with different spatial sources") {
    nm::Rng rng(31);
    const double axis_sum[3] = {0.577, 0.577, 0.577};
    const double axis_diff[3] = {0.707, -0.707, 0.0};

    std::vector<ParcellatedTimeseries> cohort;
    for (int i = 0; i < 8; ++i) {
        const bool sum_group = i < 4;  // dominant source lives on a different axis per group
        Matrix x(512, 3);
        for (int t = 0; t < 512; ++t) {
            const double strong = rng.laplace();
            const double weak = 0.2 * rng.laplace();
            for (int b = 0; b < 3; ++b) {
                const double on_sum = sum_group ? strong : weak;
                const double on_diff = sum_group ? weak : strong;
                x(t, b) = on_sum * axis_sum[b] + on_diff * axis_diff[b] + 0.1 * rng.normal();
            }
        }
        auto ts = make_ts(x);
        ts.subject_id = "s" + std::to_string(i);
        cohort.push_back(ts);
    }

    nm::IcaOptions opts;
    opts.seed = 8;
    const nm::FeatureMatrix f = nm::group_ica_features(cohort, 2, opts);

    bool separated = false;
    for (Eigen::Index d = 0; d < 2; ++d) {  // variance block only
        const auto col = f.values.col(d);
        const double m0 = col.head(4).mean(), m1 = col.tail(4).mean();
        const double v0 = (col.head(4).array() - m0).square().sum() / 3.0;
        const double v1 = (col.tail(4).array() - m1).square().sum() / 3.0;
        const double pooled = std::sqrt((v0 + v1) / 2.0);
        if (std::abs(m0 - m1) / pooled > 1.0) separated = true;
    }
    CHECK(separated);
}

TEST_CASE("alff band bins for the reference scan") {
    const auto bins = nm::alff_band_bins(570, 0.8, 0.008, 0.09);
    REQUIRE(bins.size() == 38);
    CHECK(bins.front() == 4);
    CHECK(bins.back() == 41);
}

TEST_CASE("alff concentrates on in-band energy") {
    const int t_len = 570;
    const double tr = 0.8;
    Matrix x(t_len, 2);
    for (int t = 0; t < t_len; ++t) {
        const double arg = 2.0 * M_PI * static_cast<double>(t) / static_cast<double>(t_len);
        x(t, 0) = std::sin(arg * 20.0);   // bin 20: 0.0439 Hz, in band
        x(t, 1) = std::sin(arg * 100.0);  // bin 100: 0.219 Hz, out of band
    }
    const Vector a = nm::alff(make_ts(x, tr), 0.008, 0.09);
    REQUIRE(a.size() == 2);
    CHECK(a[0] / a[1] > 10.0);
}

TEST_CASE("alff trivia") {
    SUBCASE("zero signal gives zero amplitude") {
        const Vector a = nm::alff(make_ts(Matrix::Zero(64, 2), 0.8), 0.008, 0.09);
        CHECK(a[0] == 0.0);
        CHECK(a[1] == 0.0);
    }

    SUBCASE("constant offsets do not change alff") {
        nm::Rng rng(3);
        Matrix x(128, 2);
        for (Eigen::Index t = 0; t < x.rows(); ++t)
            for (Eigen::Index b = 0; b < 2; ++b) x(t, b) = rng.normal();
        const Vector base = nm::alff(make_ts(x, 0.8), 0.008, 0.09);
        Matrix y = x;
        y.col(0).array() += 100.0;
        y.col(1).array() -= 3.0;
        const Vector shifted = nm::alff(make_ts(y, 0.8), 0.008, 0.09);
        CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-9);
    }

    SUBCASE("empty band reports resolution and limits") {
        try {
            nm::alff_band_bins(16, 0.8, 0.008, 0.05);
            FAIL("expected band error");
        } catch (const nm::Error& e) {
            CHECK(e.kind() == "band");
            CHECK(std::string(e.what()).find("resolution") != std::string::npos);
        }
    }
}

TEST_CASE("cohort feature extraction aligns subjects and names") {
    nm::SyntheticSpec spec;
    spec.n_subjects = 4;
    spec.n_regions = 4;
    spec.n_timepoints = 32;
    spec.informative_regions = {0};
    spec.coupling = 0.3;
    spec.seed = 2;
    const auto synth = nm::generate_synthetic(spec);

    nm::FeatureOptions opts;
    opts.method = nm::FeatureMethod::fcm;
    const nm::FeatureMatrix f = nm::extract_features(synth.cohort, opts);
    REQUIRE(f.values.rows() == 4);
    CHECK(f.values.cols() == 6);  // 4*3/2 pairs
    CHECK(f.feature_names.size() == 6);
    CHECK(f.subject_ids[2] == synth.cohort.manifest.subjects[2].subject_id);

    // row 1 equals the standalone fcm vector for subject 1
    const Vector direct = nm::vectorize_upper(nm::fcm(synth.cohort.timeseries[1]));
    CHECK((f.values.row(1).transpose() - direct).cwiseAbs().maxCoeff() < 1e-12);

    SUBCASE("alff method produces one feature per region") {
        opts.method = nm::FeatureMethod::alff;
        const nm::FeatureMatrix fa = nm::extract_features(synth.cohort, opts);
        CHECK(fa.values.cols() == 4);
        CHECK(fa.feature_names[0] == "alff_r0");
    }
}

TEST_CASE("feature method names parse") {
    CHECK(nm::feature_method_from_string("fcm") == nm::FeatureMethod::fcm);
    CHECK(nm::feature_method_from_string("iica") == nm::FeatureMethod::iica);
    CHECK(nm::feature_method_from_string("gica") == nm::FeatureMethod::gica);
    CHECK(nm::feature_method_from_string("alff") == nm::FeatureMethod::alff);
    CHECK_THROWS_AS(nm::feature_method_from_string("pca"), nm::Error);
}

TEST_CASE("feature csv round-trip") {
    TempDir dir;
    nm::FeatureMatrix f;
    f.values = Matrix(2, 3);
    f.values << 0.123456789, -1e-7, 42.0, 3.0, -0.5, 1e8;
    f.feature_names = {"fa", "fb", "fc"};
    f.subject_ids = {"s0", "s1"};
    const std::string path = dir.path() + "/features.csv";
    nm::write_feature_csv(path, f);

    const nm::FeatureMatrix back = nm::read_feature_csv(path);
    CHECK(back.feature_names == f.feature_names);
    CHECK(back.subject_ids == f.subject_ids);
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) {
            const double rel = std::abs(back.values(i, j) - f.values(i, j)) /
                               std::max(1.0, std::abs(f.values(i, j)));
            CHECK(rel < 1e-7);
        }
}
