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

#ifndef KLENS_DMDC_HPP
#define KLENS_DMDC_HPP

#include <complex>
#include <string>
#include <vector>

#include "klens/numerics.hpp"

namespace klens {

struct LstmNetwork;  // lstm.hpp

/// Aligned snapshot triples: column t of `xi` is the successor of column t
/// of `s` under input column t of `x`.
struct SnapshotSet {
  Mat s;   // n_state x T
  Mat xi;  // n_state x T
  Mat x;   // n_input x T

  Eigen::Index count() const { return s.cols(); }
  Eigen::Index state_dim() const { return s.rows(); }
  Eigen::Index input_dim() const { return x.rows(); }
  void validate() const;
};

struct TruncationPolicy {
  enum class Kind { None, Energy, Ranks };
  Kind kind = Kind::None;
  double energy = 0.999;  // cumulative singular-value energy kept
  Eigen::Index p = -1;    // rank for the stacked [S; X] basis
  Eigen::Index r = -1;    // rank for the output basis

  static TruncationPolicy none() { return {}; }
  static TruncationPolicy energy_fraction(double e);
  static TruncationPolicy ranks(Eigen::Index p, Eigen::Index r);
};

/// Per-layer linear model s_t = A s_{t-1} + B u_t.
struct LayerSurrogate {
  Mat a;
  Mat b;
  Eigen::Index rank_p = -1;  // -1 means the exact pseudoinverse path
  Eigen::Index rank_r = -1;
  double training_residual = 0.0;  // ||Xi - A S - B X||_F / ||Xi||_F
  double tikhonov = 0.0;
};

/// Block-assembled full-network model with the top-layer hidden selector.
struct LinearSurrogate {
  std::vector<LayerSurrogate> layers;
  Mat a;  // n_total x n_total, block lower bidiagonal
  Mat b;  // n_total x n_in
  Mat c;  // n_hid_top x n_total, [0 ... 0 I]

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
  /// Hidden-block selector of layer `n` within that layer's state: [0 I].
  static Mat layer_hidden_selector(Eigen::Index n_hid);
};

struct FitOptions {
  TruncationPolicy truncation;
  double tikhonov = 0.0;
};

SnapshotSet make_snapshots(const Mat& s, const Mat& xi, const Mat& x);

/// Identity-observable DMDc fit. With no truncation this is the exact
/// least-squares solution [A B] = Xi [S; X]^+; truncated fits project through
/// the low-rank bases and lift back to full state coordinates.
LayerSurrogate fit_dmdc(const SnapshotSet& snap, const FitOptions& opts = {});

struct DmdcModes {
  CVec eigenvalues;  // |lambda| descending
  CMat modes;        // full-state modes, one column per eigenvalue
};

DmdcModes dmdc_modes(const LayerSurrogate& layer, const SnapshotSet& snap);

LinearSurrogate assemble(const std::vector<LayerSurrogate>& layers);

Vec surrogate_step(const LinearSurrogate& sur, const Vec& s_prev, const Vec& x);
std::vector<Vec> surrogate_rollout(const LinearSurrogate& sur,
                                   const std::vector<Vec>& x_seq, const Vec& s0);

struct FidelityReport {
  // Relative RMS errors of the assembled model against the true network.
  double one_step_state = 0.0;
  double free_run_state = 0.0;
  double one_step_top_hidden = 0.0;
  double free_run_top_hidden = 0.0;
  std::vector<double> per_layer_one_step;
  std::vector<double> per_layer_free_run;
  double tikhonov = 0.0;
};

FidelityReport fidelity_report(const LinearSurrogate& sur, const LstmNetwork& net,
                               const std::vector<std::vector<Vec>>& heldout);

void save_surrogate(const LinearSurrogate& sur, const std::string& path);
LinearSurrogate load_surrogate(const std::string& path);

}  // namespace klens

#endif  // KLENS_DMDC_HPP
