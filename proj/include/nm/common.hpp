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

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nm {

template <class S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S> using ArrXX = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/* Error taxonomy. category selects the process exit code at the CLI
 * boundary; kind is a short machine-readable tag carried into the JSON
 * diagnostic (e.g. "format", "shape", "band", "divergence"). */
class Error : public std::runtime_error {
public:
    enum class Category { usage, data, numeric };

    Error(Category cat, std::string kind, const std::string& msg)
        : std::runtime_error(msg), category_(cat), kind_(std::move(kind)) {}

    Category category() const { return category_; }
    const std::string& kind() const { return kind_; }

    int exit_code() const {
        switch (category_) {
        case Category::usage: return 2;
        case Category::data: return 3;
        case Category::numeric: return 4;
        }
        return 1;
    }

    const char* category_name() const {
        switch (category_) {
        case Category::usage: return "usage";
        case Category::data: return "data";
        case Category::numeric: return "numeric";
        }
        return "error";
    }

private:
    Category category_;
    std::string kind_;
};

inline Error usage_error(const std::string& msg) {
    return Error(Error::Category::usage, "usage", msg);
}
inline Error data_error(const std::string& kind, const std::string& msg) {
    return Error(Error::Category::data, kind, msg);
}
inline Error numeric_error(const std::string& kind, const std::string& msg) {
    return Error(Error::Category::numeric, kind, msg);
}

/* splitmix64; used to derive independent stream seeds from (seed, tags). */
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(seed + 0x517cc1b727220a95ull * a) ^ splitmix64(b + 1));
}

/* Deterministic RNG. Wraps the standard 64-bit Mersenne twister but keeps
 * the variate transforms in-house: the std::* distribution objects are
 * implementation-defined, and reports must be byte-identical across
 * toolchains. */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller, pair cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    // Laplace(0, 1) via inverse CDF
    double laplace() {
        const double u = uniform() - 0.5;
        return (u < 0.0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::abs(u));
    }

    template <class V>
    void shuffle(V& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/* Process-wide worker count, set once by the CLI. Results never depend on
 * it: parallel loops use static index blocks and write to per-index slots,
 * and reductions happen afterwards in index order. */
int global_threads();
void set_global_threads(int n);

/* Runs fn(i) for i in [0, n). With t > 1 workers the index range is split
 * into t contiguous blocks. The first exception (lowest index) wins. */
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nm
