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

#include "klens/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace klens {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entries");
  }
}

void require_finite(const CMat& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entries");
  }
}

SvdResult svd(const Mat& m, std::optional<Eigen::Index> rank) {
  if (m.size() == 0) throw InvalidInput("svd: empty matrix");
  require_finite(m, "svd");
  const Eigen::Index full = std::min(m.rows(), m.cols());
  if (rank && (*rank < 0 || *rank > full)) {
    throw InvalidInput("svd: rank out of range");
  }

  SvdResult out;
  // Jacobi is robust for small blocks; bidiagonal divide-and-conquer
  // (Golub-Kahan family) handles the wide snapshot matrices.
  if (full <= 16) {
    Eigen::JacobiSVD<Mat> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) throw NumericalFailure("svd: no convergence");
    out.u = dec.matrixU();
    out.s = dec.singularValues();
    out.v = dec.matrixV();
  } else {
    Eigen::BDCSVD<Mat> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) throw NumericalFailure("svd: no convergence");
    out.u = dec.matrixU();
    out.s = dec.singularValues();
    out.v = dec.matrixV();
  }
  if (rank && *rank < full) {
    out.u = out.u.leftCols(*rank).eval();
    out.s = out.s.head(*rank).eval();
    out.v = out.v.leftCols(*rank).eval();
  }
  return out;
}

Mat pinv(const Mat& m) {
  if (m.size() == 0) throw InvalidInput("pinv: empty matrix");
  const SvdResult f = svd(m);
  const double cutoff =
      std::max(static_cast<double>(std::max(m.rows(), m.cols())) *
                   std::numeric_limits<double>::epsilon() * f.s(0),
               kAbsFloor);
  Vec sinv = Vec::Zero(f.s.size());
  for (Eigen::Index i = 0; i < f.s.size(); ++i) {
    if (f.s(i) > cutoff) sinv(i) = 1.0 / f.s(i);
  }
  return f.v * sinv.asDiagonal() * f.u.transpose();
}

SymEigResult sym_eig(const Mat& m) {
  if (m.size() == 0 || m.rows() != m.cols()) {
    throw InvalidInput("sym_eig: matrix must be square and nonempty");
  }
  require_finite(m, "sym_eig");
  const double scale = std::max(m.norm(), kAbsFloor);
  if ((m - m.transpose()).norm() > 1e-10 * scale) {
    throw InvalidInput("sym_eig: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> dec(m);
  if (dec.info() != Eigen::Success) throw NumericalFailure("sym_eig: no convergence");

  // Eigen returns ascending order; flip to descending.
  const Eigen::Index n = m.rows();
  SymEigResult out;
  out.values = dec.eigenvalues().reverse();
  out.vectors = dec.eigenvectors().rowwise().reverse();
  (void)n;
  return out;
}

namespace {

double power_iteration_radius(const Mat& a) {
  const Eigen::Index n = a.rows();
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss(rng);
  v.normalize();

  // Norm-ratio estimate over a 16-step stride; the stride damps the
  // oscillation produced by complex-conjugate dominant pairs.
  constexpr int kStride = 16;
  double prev = 0.0;
  for (int outer = 0; outer < 4096; ++outer) {
    double log_growth = 0.0;
    for (int k = 0; k < kStride; ++k) {
      v = a * v;
      const double nv = v.norm();
      if (nv == 0.0) return 0.0;
      log_growth += std::log(nv);
      v /= nv;
    }
    const double est = std::exp(log_growth / kStride);
    if (outer > 0 && std::abs(est - prev) <= 1e-10 * std::max(est, 1.0)) {
      return est;
    }
    prev = est;
  }
  return prev;
}

}  // namespace

double spectral_radius(const Mat& a) {
  if (a.size() == 0 || a.rows() != a.cols()) {
    throw InvalidInput("spectral_radius: matrix must be square");
  }
  require_finite(a, "spectral_radius");
  if (a.rows() <= 256) {
    Eigen::EigenSolver<Mat> dec(a, /*computeEigenvectors=*/false);
    if (dec.info() != Eigen::Success) {
      throw NumericalFailure("spectral_radius: eigensolver failed");
    }
    return dec.eigenvalues().cwiseAbs().maxCoeff();
  }
  return power_iteration_radius(a);
}

Mat dlyap(const Mat& a, const Mat& q) {
  if (a.rows() != a.cols()) throw InvalidInput("dlyap: A must be square");
  if (q.rows() != q.cols() || q.rows() != a.rows()) {
    throw InvalidInput("dlyap: Q must be square and match A");
  }
  require_finite(a, "dlyap A");
  require_finite(q, "dlyap Q");
  const double qscale = std::max(q.norm(), kAbsFloor);
  if ((q - q.transpose()).norm() > 1e-10 * qscale) {
    throw InvalidInput("dlyap: Q is not symmetric");
  }
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    throw UnstableSystem("dlyap: spectral radius " + std::to_string(rho) + " >= 1");
  }

  Mat p = q;
  Mat ak = a;
  const double tol = std::max(1e-14 * qscale, kAbsFloor);
  for (int iter = 0; iter < 128; ++iter) {
    const Mat incr = ak * p * ak.transpose();
    p += incr;
    if (!p.allFinite()) throw UnstableSystem("dlyap: iteration diverged");
    if (incr.norm() < tol) {
      return 0.5 * (p + p.transpose());  // kill rounding asymmetry
    }
    ak = (ak * ak).eval();
  }
  throw NumericalFailure("dlyap: doubling iteration did not converge");
}

double sigma_max(const CMat& m) {
  if (m.size() == 0) throw InvalidInput("sigma_max: empty matrix");
  require_finite(m, "sigma_max");
  Eigen::JacobiSVD<CMat> dec(m);
  return dec.singularValues()(0);
}

double sigma_max(const Mat& m) {
  if (m.size() == 0) throw InvalidInput("sigma_max: empty matrix");
  require_finite(m, "sigma_max");
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<Mat> dec(m);
    return dec.singularValues()(0);
  }
  Eigen::BDCSVD<Mat> dec(m);
  return dec.singularValues()(0);
}

}  // namespace klens
