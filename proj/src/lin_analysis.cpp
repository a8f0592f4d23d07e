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

#include "klens/lin_analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <complex>

#include "klens/lstm.hpp"
#include "klens/parallel.hpp"

namespace klens {

TransferFunction TransferFunction::disturbance_to_state(const LinearSurrogate& sur) {
  TransferFunction tf;
  tf.a = sur.a;
  tf.b = sur.b;
  tf.c = Mat::Identity(sur.state_dim(), sur.state_dim());
  tf.tag = TfTag::ds;
  return tf;
}

TransferFunction TransferFunction::disturbance_to_hidden(const LinearSurrogate& sur) {
  TransferFunction tf;
  tf.a = sur.a;
  tf.b = sur.b;
  tf.c = sur.c;
  tf.tag = TfTag::dh;
  return tf;
}

void TransferFunction::validate() const {
  if (a.rows() != a.cols() || a.size() == 0) {
    throw InvalidInput("transfer function: A must be square");
  }
  if (b.rows() != a.rows()) throw InvalidInput("transfer function: B rows mismatch");
  if (c.cols() != a.rows()) throw InvalidInput("transfer function: C cols mismatch");
  require_finite(a, "tf A");
  require_finite(b, "tf B");
  require_finite(c, "tf C");
}

StabilityResult stability(const Mat& a, double margin) {
  const double rho = spectral_radius(a);
  return {rho < 1.0 - margin, rho};
}

StabilityResult stability(const TransferFunction& tf, double margin) {
  tf.validate();
  return stability(tf.a, margin);
}

CMat freq_response(const TransferFunction& tf, double omega) {
  tf.validate();
  CMat m = (-tf.a).cast<std::complex<double>>();
  m.diagonal().array() += std::polar(1.0, omega);
  Eigen::FullPivLU<CMat> lu(m);
  if (!lu.isInvertible()) {
    throw UnstableSystem("freq_response: singular resolvent at omega");
  }
  const CMat y = lu.solve(tf.b.cast<std::complex<double>>());
  return tf.c.cast<std::complex<double>>() * y;
}

namespace detail {

ResolventEvaluator::ResolventEvaluator(const TransferFunction& tf) {
  Eigen::HessenbergDecomposition<Mat> dec(tf.a);
  h = dec.matrixH();
  const Mat q = dec.matrixQ();
  b_til = q.transpose() * tf.b;
  c_til = tf.c * q;
}

double ResolventEvaluator::gain(double omega) const {
  const Eigen::Index n = h.rows();
  const std::complex<double> z = std::polar(1.0, omega);
  CMat m = (-h).cast<std::complex<double>>();
  m.diagonal().array() += z;
  CMat x = b_til.cast<std::complex<double>>();

  // Givens sweep kills the one subdiagonal, then back substitution: O(n^2)
  // per frequency instead of a fresh O(n^3) factorization.
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const std::complex<double> a = m(k, k);
    const std::complex<double> b = m(k + 1, k);
    const double r = std::sqrt(std::norm(a) + std::norm(b));
    if (r < kAbsFloor) throw UnstableSystem("hinf grid: singular resolvent");
    const std::complex<double> cu = std::conj(a) / r;
    const std::complex<double> su = std::conj(b) / r;
    const std::complex<double> bl = -b / r;
    const std::complex<double> br = a / r;
    for (Eigen::Index j = k; j < n; ++j) {
      const std::complex<double> mk = m(k, j);
      const std::complex<double> mk1 = m(k + 1, j);
      m(k, j) = cu * mk + su * mk1;
      m(k + 1, j) = bl * mk + br * mk1;
    }
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const std::complex<double> xk = x(k, j);
      const std::complex<double> xk1 = x(k + 1, j);
      x(k, j) = cu * xk + su * xk1;
      x(k + 1, j) = bl * xk + br * xk1;
    }
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (i + 1 < n) {
      x.row(i) -= m.row(i).segment(i + 1, n - i - 1) * x.bottomRows(n - i - 1);
    }
    if (std::abs(m(i, i)) < kAbsFloor) {
      throw UnstableSystem("hinf grid: singular resolvent");
    }
    x.row(i) /= m(i, i);
  }

  const CMat t = c_til.cast<std::complex<double>>() * x;
  if (t.cols() == 1) return t.norm();
  if (t.rows() == 1) return t.norm();
  return sigma_max(t);
}

namespace {

GridScan finish_scan(std::vector<double>&& values) {
  GridScan scan;
  scan.values = std::move(values);
  const long g = static_cast<long>(scan.values.size());
  for (long i = 0; i < g; ++i) {
    if (scan.values[i] > scan.peak_value) {
      scan.peak_value = scan.values[i];
      scan.peak_omega = g > 1 ? M_PI * static_cast<double>(i) / (g - 1) : 0.0;
    }
  }
  return scan;
}

}  // namespace

GridScan grid_scan_parallel(const ResolventEvaluator& ev, int grid_size) {
  std::vector<double> values(grid_size);
  parallel_for(grid_size, [&](long i) {
    const double omega =
        grid_size > 1 ? M_PI * static_cast<double>(i) / (grid_size - 1) : 0.0;
    values[i] = ev.gain(omega);
  });
  return finish_scan(std::move(values));
}

GridScan grid_scan_serial(const ResolventEvaluator& ev, int grid_size) {
  std::vector<double> values(grid_size);
  serial_for(grid_size, [&](long i) {
    const double omega =
        grid_size > 1 ? M_PI * static_cast<double>(i) / (grid_size - 1) : 0.0;
    values[i] = ev.gain(omega);
  });
  return finish_scan(std::move(values));
}

}  // namespace detail

namespace {

struct RefinedPeak {
  double value;
  double omega;
  int iterations;
};

RefinedPeak golden_refine(const detail::ResolventEvaluator& ev, double lo, double hi,
                          double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = ev.gain(x1);
  double f2 = ev.gain(x2);
  int iters = 0;
  while (b - a > tol && iters < 200) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = ev.gain(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = ev.gain(x1);
    }
    ++iters;
  }
  RefinedPeak out;
  if (f1 >= f2) {
    out.value = f1;
    out.omega = x1;
  } else {
    out.value = f2;
    out.omega = x2;
  }
  out.iterations = iters;
  return out;
}

// Indices of grid-local maxima, best first, at most `count`.
std::vector<int> top_local_maxima(const std::vector<double>& v, int count) {
  std::vector<int> idx;
  const int g = static_cast<int>(v.size());
  for (int i = 0; i < g; ++i) {
    const bool left_ok = (i == 0) || v[i] >= v[i - 1];
    const bool right_ok = (i == g - 1) || v[i] >= v[i + 1];
    if (left_ok && right_ok) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
  if (static_cast<int>(idx.size()) > count) idx.resize(count);
  return idx;
}

}  // namespace

HinfResult hinf_norm(const TransferFunction& tf, int grid_size) {
  tf.validate();
  if (grid_size < 2) throw InvalidInput("hinf_norm: grid too small");
  const StabilityResult st = stability(tf);
  if (!st.stable) {
    throw UnstableSystem("hinf_norm: spectral radius " +
                         std::to_string(st.spectral_radius));
  }

  const detail::ResolventEvaluator ev(tf);
  const detail::GridScan scan = detail::grid_scan_parallel(ev, grid_size);

  HinfResult res;
  res.grid_size = grid_size;
  res.norm = scan.peak_value;
  res.peak_frequency = scan.peak_omega;

  const double step = M_PI / (grid_size - 1);
  const double tol = 1e-8;
  for (const int i : top_local_maxima(scan.values, 3)) {
    const double lo = std::max(0.0, (i - 1) * step);
    const double hi = std::min(M_PI, (i + 1) * step);
    const RefinedPeak peak = golden_refine(ev, lo, hi, tol);
    res.refinement_iterations += peak.iterations;
    if (peak.value > res.norm) {
      res.norm = peak.value;
      res.peak_frequency = peak.omega;
    }
  }
  const double coarse_norm = res.norm;

  // Certification pass against a 4x denser grid.
  const detail::GridScan dense = detail::grid_scan_parallel(ev, 4 * grid_size);
  const double dense_step = M_PI / (4 * grid_size - 1);
  for (const int i : top_local_maxima(dense.values, 1)) {
    const double lo = std::max(0.0, (i - 1) * dense_step);
    const double hi = std::min(M_PI, (i + 1) * dense_step);
    const RefinedPeak peak = golden_refine(ev, lo, hi, tol);
    res.refinement_iterations += peak.iterations;
    if (peak.value > res.norm) {
      res.norm = peak.value;
      res.peak_frequency = peak.omega;
    }
  }
  if (dense.peak_value > res.norm) {
    res.norm = dense.peak_value;
    res.peak_frequency = dense.peak_omega;
  }
  res.certified_rel_gap =
      res.norm > kAbsFloor ? (res.norm - coarse_norm) / res.norm : 0.0;
  return res;
}

DeviationBound deviation_bound(double hinf, double alpha) {
  if (alpha < 0.0 || hinf < 0.0) throw InvalidInput("deviation_bound: negative input");
  return {hinf * hinf * alpha * alpha, hinf * alpha};
}

DeviationBound deviation_bound(const TransferFunction& tf_dh, double alpha) {
  return deviation_bound(hinf_norm(tf_dh).norm, alpha);
}

DeviationTrace empirical_deviation(const LstmNetwork& net, const LinearSurrogate& sur,
                                   const std::vector<Vec>& x_seq,
                                   const std::vector<Vec>& d_seq, double hinf) {
  if (x_seq.size() != d_seq.size()) {
    throw InvalidInput("empirical_deviation: x and d lengths differ");
  }
  std::vector<Vec> shifted(x_seq.size());
  for (std::size_t t = 0; t < x_seq.size(); ++t) shifted[t] = x_seq[t] + d_seq[t];

  const Trajectory clean = forward(net, x_seq);
  const Trajectory noisy = forward(net, shifted);

  // By linearity the surrogate deviation is the response to d alone.
  const Vec s0 = Vec::Zero(sur.state_dim());
  const std::vector<Vec> dev_states = surrogate_rollout(sur, d_seq, s0);

  DeviationTrace trace;
  trace.lstm_dev.reserve(x_seq.size());
  trace.surrogate_dev.reserve(x_seq.size());
  double d_sq = 0.0;
  for (const Vec& d : d_seq) d_sq += d.squaredNorm();
  trace.d_l2 = std::sqrt(d_sq);

  for (std::size_t t = 0; t < x_seq.size(); ++t) {
    const double lstm_dev =
        (noisy.top_hidden(static_cast<Eigen::Index>(t)) -
         clean.top_hidden(static_cast<Eigen::Index>(t)))
            .norm();
    const double sur_dev = (sur.c * dev_states[t]).norm();
    trace.lstm_dev.push_back(lstm_dev);
    trace.surrogate_dev.push_back(sur_dev);
    trace.lstm_sum_sq += lstm_dev * lstm_dev;
    trace.surrogate_sum_sq += sur_dev * sur_dev;
  }
  const DeviationBound bound = deviation_bound(hinf, trace.d_l2);
  trace.bound_max = bound.max_bound;
  trace.bound_sum_sq = bound.sum_sq_bound;
  return trace;
}

}  // namespace klens
