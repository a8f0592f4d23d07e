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

#include "klens/shift_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace klens {

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::Uniform:
      return "uniform";
    case ShiftKind::FixedMagnitude:
      return "fixed";
    case ShiftKind::Mixture:
      return "mixture";
  }
  return "unknown";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "uniform") return ShiftKind::Uniform;
  if (s == "fixed") return ShiftKind::FixedMagnitude;
  if (s == "mixture") return ShiftKind::Mixture;
  throw InvalidInput("unknown shift kind: " + s);
}

std::string to_string(ShiftClass c) {
  switch (c) {
    case ShiftClass::Covariate:
      return "covariate";
    case ShiftClass::Concept:
      return "concept";
    case ShiftClass::Indeterminate:
      return "indeterminate";
  }
  return "unknown";
}

void ShiftSpec::validate() const {
  if (lambda < 0.0) throw InvalidInput("shift spec: lambda must be >= 0");
  if (sigma_data < 0.0) throw InvalidInput("shift spec: sigma_data must be >= 0");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // One splitmix64 round on base xor golden-ratio-striped index.
  std::uint64_t z = base ^ (0x9E3779B97F4A7C15ull * (index + 1));
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

ShiftRealization finish(std::vector<Vec>&& d, double alpha) {
  ShiftRealization out;
  out.d = std::move(d);
  double sq = 0.0;
  for (const Vec& v : out.d) {
    out.linf_norm = std::max(out.linf_norm, v.cwiseAbs().maxCoeff());
    sq += v.squaredNorm();
  }
  out.l2_norm = std::sqrt(sq);
  out.l2_upper = std::sqrt(static_cast<double>(out.d.size())) * alpha;
  return out;
}

}  // namespace

ShiftRealization gen_uniform(const ShiftSpec& spec, Eigen::Index t_len,
                             Eigen::Index dim) {
  spec.validate();
  if (t_len < 1 || dim < 1) throw InvalidInput("gen_uniform: T and dim must be >= 1");
  const double alpha = spec.alpha();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-alpha, alpha);
  std::vector<Vec> d(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    d[t].resize(dim);
    for (Eigen::Index k = 0; k < dim; ++k) d[t](k) = alpha == 0.0 ? 0.0 : u(rng);
  }
  return finish(std::move(d), alpha);
}

ShiftRealization gen_fixed(const ShiftSpec& spec, Eigen::Index t_len,
                           Eigen::Index dim) {
  spec.validate();
  if (t_len < 1 || dim < 1) throw InvalidInput("gen_fixed: T and dim must be >= 1");
  const double alpha = spec.alpha();
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<Vec> d(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    d[t].resize(dim);
    for (Eigen::Index k = 0; k < dim; ++k) d[t](k) = coin(rng) ? alpha : -alpha;
  }
  return finish(std::move(d), alpha);
}

ShiftRealization gen_mixture(const ShiftSpec& spec, Eigen::Index t_len,
                             Eigen::Index dim) {
  spec.validate();
  if (t_len < 1 || dim < 1) throw InvalidInput("gen_mixture: T and dim must be >= 1");
  const double alpha = spec.alpha();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::uniform_real_distribution<double> small(-0.1 * alpha, 0.1 * alpha);
  std::uniform_real_distribution<double> large(-alpha, alpha);

  Mat raw(dim, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (alpha == 0.0) {
        raw(k, t) = 0.0;
        pick(rng);
        continue;
      }
      raw(k, t) = pick(rng) < 0.7 ? small(rng) : large(rng);
    }
  }

  // Truncated Gaussian kernel, sigma = 12 samples, radius 4 sigma, sum 1.
  constexpr int kSigma = 12;
  constexpr int kRadius = 4 * kSigma;
  Vec kernel(2 * kRadius + 1);
  for (int k = -kRadius; k <= kRadius; ++k) {
    kernel(k + kRadius) =
        std::exp(-0.5 * static_cast<double>(k) * k / (kSigma * kSigma));
  }
  kernel /= kernel.sum();

  Mat smooth(dim, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (Eigen::Index kdim = 0; kdim < dim; ++kdim) {
      double acc = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        Eigen::Index idx = t + k;
        // reflective boundary
        while (idx < 0 || idx >= t_len) {
          if (idx < 0) idx = -idx - 1;
          if (idx >= t_len) idx = 2 * t_len - idx - 1;
        }
        acc += kernel(k + kRadius) * raw(kdim, idx);
      }
      smooth(kdim, t) = acc;
    }
  }

  const double linf = smooth.cwiseAbs().maxCoeff();
  if (linf > alpha && linf > 0.0) {
    smooth *= 0.95 * alpha / linf;
  }

  std::vector<Vec> d(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) d[t] = smooth.col(t);
  return finish(std::move(d), alpha);
}

ShiftRealization generate(const ShiftSpec& spec, Eigen::Index t_len, Eigen::Index dim) {
  switch (spec.kind) {
    case ShiftKind::Uniform:
      return gen_uniform(spec, t_len, dim);
    case ShiftKind::FixedMagnitude:
      return gen_fixed(spec, t_len, dim);
    case ShiftKind::Mixture:
      return gen_mixture(spec, t_len, dim);
  }
  throw InvalidInput("generate: unknown shift kind");
}

namespace {

// Pearson correlation of two equally long samples; zero variance is the
// caller's problem.
double pearson(const Vec& a, const Vec& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Vec da = a.array() - ma;
  const Vec db = b.array() - mb;
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom <= kAbsFloor) throw DegenerateData("classify: zero-variance series");
  return da.dot(db) / denom;
}

// Standardize columns of a window matrix within its regime.
Mat standardized(const Mat& m) {
  const double mean = m.mean();
  const double sd = std::sqrt((m.array() - mean).square().mean());
  if (sd <= kAbsFloor) throw DegenerateData("classify: zero-variance regime");
  return (m.array() - mean) / sd;
}

double horizon_avg_rho(const Mat& x, const Mat& y) {
  // lag-0 pairing: the last input sample against each forecast horizon.
  const Vec anchor = x.col(x.cols() - 1);
  double acc = 0.0;
  for (Eigen::Index h = 0; h < y.cols(); ++h) {
    acc += pearson(anchor, y.col(h));
  }
  return acc / static_cast<double>(y.cols());
}

}  // namespace

ClassificationResult classify(const Mat& x_shift, const Mat& y_shift,
                              const Mat& x_orig, const Mat& y_orig) {
  if (x_shift.rows() != y_shift.rows() || x_orig.rows() != y_orig.rows() ||
      x_shift.rows() != x_orig.rows() || x_shift.cols() != x_orig.cols() ||
      y_shift.cols() != y_orig.cols()) {
    throw InvalidInput("classify: shapes of shifted and original datasets must match");
  }
  if (x_shift.rows() < 3) throw InvalidInput("classify: need at least 3 windows");

  ClassificationResult res;
  res.rho_orig = horizon_avg_rho(standardized(x_orig), standardized(y_orig));
  res.rho_shift = horizon_avg_rho(standardized(x_shift), standardized(y_shift));

  if (std::abs(res.rho_orig) <= kAbsFloor) {
    throw DegenerateData("classify: original correlation is zero");
  }
  const double ratio = res.rho_shift / res.rho_orig;
  if (ratio > 0.95) {
    res.verdict = ShiftClass::Covariate;
  } else if (ratio < 0.5) {
    res.verdict = ShiftClass::Concept;
  } else {
    res.verdict = ShiftClass::Indeterminate;
  }
  return res;
}

double wasserstein_upper(const ShiftRealization& d) { return d.l2_norm; }

void write_shift_manifest(const ShiftRealization& d, const ShiftSpec& spec,
                          const std::string& csv_path, const std::string& json_path,
                          const std::string& classification) {
  std::ofstream csv(csv_path);
  if (!csv) throw ParseError("write_shift_manifest: cannot open " + csv_path);
  csv << "t,d_t\n";
  csv.precision(17);
  for (std::size_t t = 0; t < d.d.size(); ++t) {
    csv << t;
    for (Eigen::Index k = 0; k < d.d[t].size(); ++k) csv << "," << d.d[t](k);
    csv << "\n";
  }

  nlohmann::json meta;
  meta["spec"] = {{"kind", to_string(spec.kind)},
                  {"lambda", spec.lambda},
                  {"sigma_data", spec.sigma_data},
                  {"alpha", spec.alpha()},
                  {"seed", spec.seed}};
  meta["norms"] = {{"linf", d.linf_norm},
                   {"l2", d.l2_norm},
                   {"l2_upper", d.l2_upper},
                   {"wasserstein_upper", wasserstein_upper(d)}};
  meta["classification"] = classification;
  std::ofstream js(json_path);
  if (!js) throw ParseError("write_shift_manifest: cannot open " + json_path);
  js << meta.dump(2) << "\n";
}

}  // namespace klens
