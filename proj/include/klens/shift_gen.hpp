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

#ifndef KLENS_SHIFT_GEN_HPP
#define KLENS_SHIFT_GEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "klens/numerics.hpp"

namespace klens {

enum class ShiftKind { Uniform, FixedMagnitude, Mixture };

std::string to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(const std::string& s);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::Uniform;
  double lambda = 0.0;      // shift-strength multiplier
  double sigma_data = 1.0;  // data standard deviation (kW)
  std::uint64_t seed = 0;

  double alpha() const { return lambda * sigma_data; }
  void validate() const;
};

struct ShiftRealization {
  std::vector<Vec> d;
  double linf_norm = 0.0;
  double l2_norm = 0.0;
  double l2_upper = 0.0;  // sqrt(T) * alpha
};

/// i.i.d. Uniform(-alpha, alpha) per element; mean |d| is about alpha/2.
ShiftRealization gen_uniform(const ShiftSpec& spec, Eigen::Index t_len,
                             Eigen::Index dim = 1);
/// |d_t| = alpha exactly with Rademacher signs.
ShiftRealization gen_fixed(const ShiftSpec& spec, Eigen::Index t_len,
                           Eigen::Index dim = 1);
/// 70/30 small/large uniform mixture, Gaussian-smoothed (sigma = 12 samples,
/// radius 48, reflective edges), rescaled by 0.95 alpha / ||d||_inf if the
/// smoothed draw exceeds the budget.
ShiftRealization gen_mixture(const ShiftSpec& spec, Eigen::Index t_len,
                             Eigen::Index dim = 1);

ShiftRealization generate(const ShiftSpec& spec, Eigen::Index t_len,
                          Eigen::Index dim = 1);

enum class ShiftClass { Covariate, Concept, Indeterminate };
std::string to_string(ShiftClass c);

struct ClassificationResult {
  ShiftClass verdict = ShiftClass::Indeterminate;
  double rho_orig = 0.0;
  double rho_shift = 0.0;
};

/// Compares the horizon-averaged lag-0 Pearson correlation between the last
/// input sample and each target horizon, standardized within each regime.
/// Rows of the matrices are windows.
ClassificationResult classify(const Mat& x_shift, const Mat& y_shift,
                              const Mat& x_orig, const Mat& y_orig);

/// W1 coupling upper bound for the realized shift: its l2 norm.
double wasserstein_upper(const ShiftRealization& d);

/// Documented splitmix-style derivation so that trial-level parallelism keeps
/// deterministic streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

void write_shift_manifest(const ShiftRealization& d, const ShiftSpec& spec,
                          const std::string& csv_path, const std::string& json_path,
                          const std::string& classification);

}  // namespace klens

#endif  // KLENS_SHIFT_GEN_HPP
