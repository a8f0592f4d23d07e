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

#ifndef KLENS_LIN_ANALYSIS_HPP
#define KLENS_LIN_ANALYSIS_HPP

#include <vector>

#include "klens/dmdc.hpp"
#include "klens/numerics.hpp"

namespace klens {

struct LstmNetwork;

enum class TfTag { ds, dh, delta_d, delta_s };

/// State-space realization of C (zI - A)^-1 B.
struct TransferFunction {
  Mat a;
  Mat b;
  Mat c;
  TfTag tag = TfTag::ds;

  /// Disturbance-to-state map of the surrogate (C = I).
  static TransferFunction disturbance_to_state(const LinearSurrogate& sur);
  /// Disturbance-to-top-hidden map (C selects the top hidden block).
  static TransferFunction disturbance_to_hidden(const LinearSurrogate& sur);
  void validate() const;
};

struct StabilityResult {
  bool stable = false;
  double spectral_radius = 0.0;
};

StabilityResult stability(const Mat& a, double margin = 1e-9);
StabilityResult stability(const TransferFunction& tf, double margin = 1e-9);

/// C (e^{jw} I - A)^-1 B via a linear solve; no explicit inverse.
CMat freq_response(const TransferFunction& tf, double omega);

struct HinfResult {
  double norm = 0.0;
  double peak_frequency = 0.0;
  int grid_size = 0;
  int refinement_iterations = 0;
  double certified_rel_gap = 0.0;
};

/// Grid scan over [0, pi] plus golden-section refinement around the top
/// grid peaks; the gap against a 4x denser grid is reported.
HinfResult hinf_norm(const TransferFunction& tf, int grid_size = 4096);

/// Theorem-style worst-case deviation bounds for an l2 budget alpha:
/// (||T||^2 alpha^2, ||T|| alpha).
struct DeviationBound {
  double sum_sq_bound = 0.0;
  double max_bound = 0.0;
};
DeviationBound deviation_bound(const TransferFunction& tf_dh, double alpha);
DeviationBound deviation_bound(double hinf, double alpha);

struct DeviationTrace {
  std::vector<double> lstm_dev;       // per-step ||top-hidden deviation||
  std::vector<double> surrogate_dev;  // same, on the linear model
  double d_l2 = 0.0;                  // realized l2 norm of the disturbance
  double bound_max = 0.0;             // ||T^dh|| * ||d||_l2
  double bound_sum_sq = 0.0;          // ||T^dh||^2 * ||d||_l2^2
  double lstm_sum_sq = 0.0;
  double surrogate_sum_sq = 0.0;
};

/// Runs the network and the surrogate on x and on x + d from the same zero
/// initial state and reports top-hidden deviations against the bound.
DeviationTrace empirical_deviation(const LstmNetwork& net, const LinearSurrogate& sur,
                                   const std::vector<Vec>& x_seq,
                                   const std::vector<Vec>& d_seq, double hinf);

namespace detail {

/// Precomputed Hessenberg form for fast resolvent gains on a frequency grid.
struct ResolventEvaluator {
  Mat h;      // upper Hessenberg, orthogonally similar to A
  Mat b_til;  // Q^T B
  Mat c_til;  // C Q
  explicit ResolventEvaluator(const TransferFunction& tf);
  /// sigma_max(C (e^{jw} I - A)^-1 B)
  double gain(double omega) const;
};

struct GridScan {
  double peak_value = 0.0;
  double peak_omega = 0.0;
  std::vector<double> values;
};

/// OpenMP frequency scan and its serial reference; the two must agree exactly.
GridScan grid_scan_parallel(const ResolventEvaluator& ev, int grid_size);
GridScan grid_scan_serial(const ResolventEvaluator& ev, int grid_size);

}  // namespace detail

}  // namespace klens

#endif  // KLENS_LIN_ANALYSIS_HPP
