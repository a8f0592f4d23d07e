/*
 * Copyright 2026 the koopman-lens authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Compares the OpenMP kernels against their serial reference implementations
// and checks that both produce the same numbers.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "klens/lin_analysis.hpp"
#include "klens/parallel.hpp"
#include "klens/shift_gen.hpp"

using namespace klens;
using h_clock = std::chrono::high_resolution_clock;

namespace {

double seconds_since(h_clock::time_point t0) {
  return std::chrono::duration<double>(h_clock::now() - t0).count();
}

Mat random_stable(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = gauss(rng);
  return a * (0.9 / spectral_radius(a));
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", omp_get_max_threads());
  std::mt19937_64 rng(17);

  // Frequency-grid scan, the hot loop of the Hinf computation.
  for (const int n : {32, 96, 192}) {
    TransferFunction tf;
    tf.a = random_stable(n, rng);
    tf.b = Mat::Random(n, 2);
    tf.c = Mat::Identity(n, n);
    const detail::ResolventEvaluator ev(tf);
    const int grid = 4096;

    auto t0 = h_clock::now();
    const detail::GridScan serial = detail::grid_scan_serial(ev, grid);
    const double t_serial = seconds_since(t0);

    t0 = h_clock::now();
    const detail::GridScan parallel = detail::grid_scan_parallel(ev, grid);
    const double t_parallel = seconds_since(t0);

    const bool match = serial.peak_value == parallel.peak_value &&
                       serial.values == parallel.values;
    std::printf("hinf grid  n=%-4d serial %7.3fs  omp %7.3fs  speedup %.2fx  %s\n", n,
                t_serial, t_parallel, t_serial / t_parallel,
                match ? "match" : "MISMATCH");
  }
  std::printf("\n");

  // Batched disturbance trials (the Monte-Carlo loop of the reports).
  {
    const long trials = 512;
    const Eigen::Index t_len = 512;
    std::vector<double> out_serial(trials), out_parallel(trials);
    auto trial_norm = [&](long i) {
      ShiftSpec spec;
      spec.kind = ShiftKind::Mixture;
      spec.lambda = 1.0;
      spec.seed = derive_seed(99, static_cast<std::uint64_t>(i));
      return generate(spec, t_len).l2_norm;
    };

    auto t0 = h_clock::now();
    serial_for(trials, [&](long i) { out_serial[i] = trial_norm(i); });
    const double t_serial = seconds_since(t0);

    t0 = h_clock::now();
    parallel_for(trials, [&](long i) { out_parallel[i] = trial_norm(i); });
    const double t_parallel = seconds_since(t0);

    std::printf("shift trials x%-5ld serial %7.3fs  omp %7.3fs  speedup %.2fx  %s\n",
                trials, t_serial, t_parallel, t_serial / t_parallel,
                out_serial == out_parallel ? "match" : "MISMATCH");
  }
  return 0;
}
