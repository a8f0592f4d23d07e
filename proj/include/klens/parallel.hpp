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

#ifndef KLENS_PARALLEL_HPP
#define KLENS_PARALLEL_HPP

// OpenMP kernels and their serial twins. The serial versions are kept as the
// reference for tests and for the benchmark target; both orderings must give
// identical results because every iteration writes only to its own slot.

namespace klens {

template <typename Fn>
void parallel_for(long n, Fn&& fn) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    fn(i);
  }
}

template <typename Fn>
void serial_for(long n, Fn&& fn) {
  for (long i = 0; i < n; ++i) {
    fn(i);
  }
}

/// Max of fn(0..n-1), fn returns double.
template <typename Fn>
double parallel_max(long n, Fn&& fn) {
  double best = -1.0;
#pragma omp parallel for schedule(static) reduction(max : best)
  for (long i = 0; i < n; ++i) {
    const double v = fn(i);
    if (v > best) best = v;
  }
  return best;
}

template <typename Fn>
double serial_max(long n, Fn&& fn) {
  double best = -1.0;
  for (long i = 0; i < n; ++i) {
    const double v = fn(i);
    if (v > best) best = v;
  }
  return best;
}

}  // namespace klens

#endif  // KLENS_PARALLEL_HPP
