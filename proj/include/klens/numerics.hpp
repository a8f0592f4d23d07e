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

#ifndef KLENS_NUMERICS_HPP
#define KLENS_NUMERICS_HPP

#include <Eigen/Dense>
#include <optional>

#include "klens/errors.hpp"

namespace klens {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Absolute tolerance floor so that relative checks survive zero matrices.
inline constexpr double kAbsFloor = 1e-14;

/// Throws InvalidInput if any entry of m is NaN or infinite.
void require_finite(const Mat& m, const char* what);
void require_finite(const CMat& m, const char* what);

struct SvdResult {
  Mat u;  // orthonormal columns
  Vec s;  // non-increasing, nonnegative
  Mat v;  // orthonormal columns
};

/// Thin SVD, optionally truncated to the leading `rank` triplets.
SvdResult svd(const Mat& m, std::optional<Eigen::Index> rank = std::nullopt);

/// Moore-Penrose pseudoinverse via SVD with a relative singular-value cutoff.
Mat pinv(const Mat& m);

struct SymEigResult {
  Vec values;   // descending
  Mat vectors;  // orthonormal, column i pairs with values(i)
};

/// Eigendecomposition of a symmetric matrix. Asymmetric input -> InvalidInput.
SymEigResult sym_eig(const Mat& m);

/// Solves P = A P A^T + Q for stable A by the doubling iteration
/// (P <- P + A_k P A_k^T, A_k <- A_k^2). Spectral radius >= 1 -> UnstableSystem.
Mat dlyap(const Mat& a, const Mat& q);

/// Largest singular value.
double sigma_max(const CMat& m);
double sigma_max(const Mat& m);

/// Spectral radius. Full eigendecomposition for n <= 256, power iteration
/// (norm-ratio estimate, 1e-10 convergence) above.
double spectral_radius(const Mat& a);

}  // namespace klens

#endif  // KLENS_NUMERICS_HPP
