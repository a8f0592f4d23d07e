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

#ifndef KLENS_DG_SYNTHESIS_HPP
#define KLENS_DG_SYNTHESIS_HPP

#include <string>
#include <vector>

#include "klens/dmdc.hpp"
#include "klens/lstm.hpp"
#include "klens/numerics.hpp"

namespace klens {

struct ReductionPolicy {
  enum class Kind { TopK, EigThreshold };
  Kind kind = Kind::TopK;
  Eigen::Index k = 50;
  double eps = 1e-8;  // relative to the largest Gramian eigenvalue

  static ReductionPolicy top_k(Eigen::Index k);
  static ReductionPolicy eig_threshold(double eps);
};

struct ReductionResult {
  Mat p_c;  // controllability Gramian
  Mat t_c;  // n x n_c, orthonormal columns
  Mat a_cc;
  Mat b_c;
  Mat c_c;
  Vec kept_eigenvalues;
  double localization_ratio = 0.0;  // ||B_c|| / ||B_uc||
  double energy_fraction = 0.0;     // kept Gramian energy / total

  Eigen::Index reduced_dim() const { return t_c.cols(); }
};

/// Controllability-Gramian reduction: P_c from the discrete Lyapunov
/// equation, kept directions from its dominant eigenvectors.
ReductionResult reduce(const LinearSurrogate& sur, const ReductionPolicy& policy);
ReductionResult reduce(const Mat& a, const Mat& b, const Mat& c,
                       const ReductionPolicy& policy);

struct LmiResidual {
  Mat matrix;
  double min_eig = 0.0;
};

/// Assembles the bounded-real synthesis block matrix in (R, K) at level gamma
/// with the augmented disturbance channel [B B] and returns its smallest
/// eigenvalue. Positive means the certificate holds strictly.
LmiResidual lmi_residual(const Mat& a, const Mat& b, const Mat& r, const Mat& k,
                         double gamma);

struct SynthOptions {
  double gamma_lo = 1e-6;
  double gamma_hi = -1.0;  // <= 0 means 10x the open-loop norm
  int bisect_iters = 40;
  double gamma_rel_tol = 1e-6;
  int ap_max_iters = 5000;
  int ap_propose_iters = 600;  // cap per bisection step; see alternating_projections
  double psd_margin = 1e-9;       // strict-inequality margin epsilon
  double affine_tol = 1e-7;       // block-form residual for feasibility
  int search_grid = 1024;         // frequency grid inside the bisection
  int verify_grid = 4096;         // frequency grid for the final certificate
  Eigen::Index max_dim = 64;      // reduce() first if the state is larger
};

struct SynthesisResult {
  Mat v;  // m x n feedback gain
  Mat r;  // certificate, symmetric positive definite
  Mat k;  // certificate, V = K R^-1
  double gamma = 0.0;
  double lmi_min_eig = 0.0;
  double verified_hinf = 0.0;     // independent stacked-channel recomputation
  double closed_loop_rho = 0.0;
  double s_channel_bound = 0.0;   // gamma * ||V||_2
};

/// Gamma bisection over an alternating-projection feasibility solver, with
/// every accepted point re-verified through the frequency-domain path.
SynthesisResult synth(const Mat& a, const Mat& b, const SynthOptions& opts = {});

/// Runs the network with inputs x_t + d_t + f_{t-1}, where the feedback
/// f_{t-1} = V_c T_c^T s_{t-1} is computed from the network's own states.
Trajectory apply_rejection(const LstmNetwork& net, const LinearSurrogate& sur,
                           const ReductionResult& red, const Mat& v_c,
                           const std::vector<Vec>& x_seq,
                           const std::vector<Vec>& d_seq);

struct VerificationReport {
  bool stable = false;
  double rho = 0.0;
  double stacked_hinf = 0.0;
  double lmi_min_eig = 0.0;
  bool certificate_ok = false;
};

/// Recomputes all three certificate checks through independent code paths.
VerificationReport verify(const SynthesisResult& res, const Mat& a, const Mat& b,
                          int grid_size = 4096);

void save_certificate(const SynthesisResult& res, const ReductionResult& red,
                      const std::string& path);

}  // namespace klens

#endif  // KLENS_DG_SYNTHESIS_HPP
