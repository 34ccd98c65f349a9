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

#include <complex>
#include <vector>

namespace nm {

/* Forward DFT, X[k] = sum_n x[n] exp(-2*pi*i*k*n/N), no normalization.
 * Arbitrary N via Bluestein's chirp-z transform over a power-of-two FFT;
 * N < 64 falls back to the direct O(N^2) sum. */
std::vector<std::complex<double>> dft(const std::vector<double>& x);

/* In-place radix-2 FFT; size must be a power of two. inverse=true applies
 * the conjugate transform without the 1/N factor. */
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace nm
