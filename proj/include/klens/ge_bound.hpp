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

#ifndef KLENS_GE_BOUND_HPP
#define KLENS_GE_BOUND_HPP

#include <vector>

#include "klens/numerics.hpp"
#include "klens/shift_gen.hpp"

namespace klens {

struct LstmNetwork;

struct BoundInputs {
  double loss_lipschitz = 1.0;  // L
  double g = 1.0;               // output-map Lipschitz constant
  int tau = 0;                  // history length
  double hinf = 0.0;            // ||T^dh||_Hinf
  double alpha = 0.0;           // l2 shift budget
  double beta = 0.0;            // output-shift budget
  // Skips the sqrt(tau+1) window factor by bounding the stacked window map
  // through the summed deviation energy instead of the per-step maximum.
  bool tight_window = false;

  void validate() const;
  /// G * sqrt(tau+1) * hinf (or G * hinf in tight mode).
  double output_gain() const;
};

/// L * (beta + G sqrt(tau+1) ||T^dh|| alpha).
double corollary1_bound(const BoundInputs& b);

/// 2 E[sqrt(loss)] (beta + G Gamma alpha) + (beta + G Gamma alpha)^2 with
/// Gamma = sqrt(tau+1) ||T^dh||; the squared-loss analogue of Corollary 1.
double mse_bound(const BoundInputs& b, double sqrt_loss_mean);

/// Lipschitz constant of the linear head: its largest singular value.
double estimate_G(const LstmNetwork& net);

enum class LossKind { AbsoluteError, SquaredError, Huber };
LossKind loss_kind_from_string(const std::string& s);

/// Loss applied to one prediction window: the Euclidean residual norm, its
/// square, or the Huber function of the residual norm.
double window_loss_value(LossKind kind, const Vec& y, const Vec& q,
                         double huber_delta = 1.0);

/// Lipschitz constant of the loss in its second argument. SquaredError is not
/// globally Lipschitz -> Unsupported (use mse_bound instead).
double estimate_L(LossKind kind, double huber_delta = 1.0);

/// Windows with their position in the source series, so a series-level shift
/// realization lines up with each window.
struct WindowDataset {
  std::vector<std::vector<Vec>> x;
  std::vector<Vec> y;
  std::vector<Eigen::Index> start;

  std::size_t size() const { return x.size(); }
  void validate() const;
};

enum class TargetMode {
  Unchanged,      // shifted targets equal the clean ones (beta = 0)
  Autoregressive  // targets are future samples of the shifted series (beta = alpha)
};

struct GEReport {
  double bound = 0.0;
  double empirical_ge = 0.0;
  double margin = 0.0;  // bound - empirical, recorded even when negative
  double clean_loss_mean = 0.0;
  double shifted_loss_mean = 0.0;
};

/// |E L(y_hat, q_hat) - E L(y, q)| over the window set, with the matching
/// Corollary-1 / squared-loss bound evaluated from `bi`.
GEReport empirical_ge(const LstmNetwork& net, const WindowDataset& ws,
                      const ShiftRealization& shift, LossKind loss, TargetMode mode,
                      const BoundInputs& bi, double huber_delta = 1.0);

}  // namespace klens

#endif  // KLENS_GE_BOUND_HPP
