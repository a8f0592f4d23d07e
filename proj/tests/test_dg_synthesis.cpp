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

#include "klens/dg_synthesis.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "klens/lin_analysis.hpp"

using namespace klens;

namespace {

Mat random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

Mat stable_system(Eigen::Index n, std::mt19937_64& rng, double rho = 0.85) {
  const Mat raw = random_mat(n, n, rng);
  return raw * (rho / spectral_radius(raw));
}

double open_loop_stacked(const Mat& a, const Mat& b) {
  TransferFunction tf;
  tf.a = a;
  tf.b = b;
  tf.c = Mat::Identity(a.rows(), a.rows());
  return hinf_norm(tf, 1024).norm;
}

}  // namespace

TEST_CASE("reduce on closed-form scalar Gramians") {
  Mat a = Mat::Zero(2, 2);
  a.diagonal() << 0.9, 0.1;
  Mat b(2, 1);
  b << 1.0, 0.0;
  Mat c = Mat::Identity(2, 2);
  const ReductionResult red = reduce(a, b, c, ReductionPolicy::top_k(2));
  // P = diag(1/(1-0.81), 0): the driven mode dominates by far.
  CHECK(red.kept_eigenvalues(0) == doctest::Approx(1.0 / 0.19).epsilon(1e-9));
  CHECK(red.kept_eigenvalues(0) / std::max(red.kept_eigenvalues(1), 1e-300) >= 10.0);
  // Lyapunov residual of the Gramian.
  CHECK((red.p_c - a * red.p_c * a.transpose() - b * b.transpose()).norm() <
        1e-8 * (b * b.transpose()).norm());
  // Orthonormal projection columns.
  CHECK((red.t_c.transpose() * red.t_c - Mat::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("reduce rejects zero input channels and unstable systems") {
  std::mt19937_64 rng(101);
  const Mat a = stable_system(4, rng);
  CHECK_THROWS_AS(reduce(a, Mat::Zero(4, 1), Mat::Identity(4, 4),
                         ReductionPolicy::top_k(2)),
                  ReductionEmpty);
  CHECK_THROWS_AS(reduce(Mat(1.2 * Mat::Identity(3, 3)), Mat::Ones(3, 1),
                         Mat::Identity(3, 3), ReductionPolicy::top_k(2)),
                  UnstableSystem);
}

TEST_CASE("reduce keeps the requested subspace and reports energy") {
  std::mt19937_64 rng(102);
  const Mat a = stable_system(8, rng);
  const Mat b = random_mat(8, 1, rng);
  const ReductionResult red = reduce(a, b, Mat::Identity(8, 8),
                                     ReductionPolicy::top_k(3));
  CHECK(red.reduced_dim() == 3);
  CHECK(red.a_cc.rows() == 3);
  CHECK(red.b_c.rows() == 3);
  CHECK(red.energy_fraction > 0.0);
  CHECK(red.energy_fraction <= 1.0 + 1e-12);
  // Eigenvalue-threshold mode keeps every mode above the relative cutoff.
  const ReductionResult red2 = reduce(a, b, Mat::Identity(8, 8),
                                      ReductionPolicy::eig_threshold(1e-8));
  for (Eigen::Index i = 0; i < red2.kept_eigenvalues.size(); ++i) {
    CHECK(red2.kept_eigenvalues(i) > 1e-8 * red2.kept_eigenvalues(0));
  }
}

TEST_CASE("gramian reduction keeps the disturbance channel when localized") {
  std::mt19937_64 rng(103);
  // Strongly localized construction: B excites a 2-dimensional subspace.
  Mat a = Mat::Zero(10, 10);
  a.diagonal().setConstant(0.3);
  a.block(0, 0, 2, 2) << 0.9, 0.05, -0.05, 0.9;
  Mat b = Mat::Zero(10, 1);
  b(0) = 1.0;
  b(1) = 0.4;
  const ReductionResult red = reduce(a, b, Mat::Identity(10, 10),
                                     ReductionPolicy::top_k(3));
  if (red.localization_ratio >= 20.0) {
    CHECK((b - red.t_c * red.b_c).norm() / b.norm() < 0.05);
  }
  CHECK(red.localization_ratio > 1.0);
}

TEST_CASE("lmi_residual assembles the block matrix faithfully") {
  SUBCASE("A = 0, B = 0, R = I, K = 0, gamma = 2") {
    const Mat a = Mat::Zero(2, 2);
    const Mat b = Mat::Zero(2, 1);
    const LmiResidual res = lmi_residual(a, b, Mat::Identity(2, 2), Mat::Zero(1, 2), 2.0);
    REQUIRE(res.matrix.rows() == 8);
    // Stability block [[I, I], [I, I]] has eigenvalues {0, 2}; the identity
    // performance block contributes 1 and the gamma block 4.
    CHECK(res.min_eig == doctest::Approx(0.0).epsilon(1e-12));
    const SymEigResult eig = sym_eig(res.matrix);
    CHECK(eig.values(0) == doctest::Approx(4.0));
  }
  SUBCASE("gamma = 0 is never strictly feasible") {
    std::mt19937_64 rng(104);
    const Mat a = stable_system(3, rng);
    const Mat b = random_mat(3, 1, rng);
    const LmiResidual res =
        lmi_residual(a, b, Mat::Identity(3, 3), Mat::Zero(1, 3), 0.0);
    CHECK(res.min_eig <= 0.0);
  }
  SUBCASE("min_eig sign agrees with an independent Cholesky check") {
    std::mt19937_64 rng(105);
    for (int trial = 0; trial < 20; ++trial) {
      const Mat a = stable_system(3, rng, 0.6);
      const Mat b = random_mat(3, 1, rng);
      const Mat g = random_mat(3, 3, rng);
      const Mat r = 0.4 * Mat::Identity(3, 3) + 0.1 * (g + g.transpose());
      const Mat k = 0.2 * random_mat(1, 3, rng);
      std::uniform_real_distribution<double> gamma_dist(0.1, 3.0);
      const LmiResidual res = lmi_residual(a, b, r, k, gamma_dist(rng));
      const Eigen::LLT<Mat> llt(res.matrix);
      const bool pd_by_cholesky = llt.info() == Eigen::Success;
      CHECK((res.min_eig > 0.0) == pd_by_cholesky);
    }
  }
  SUBCASE("shape validation") {
    CHECK_THROWS_AS(lmi_residual(Mat::Zero(2, 2), Mat::Zero(3, 1), Mat::Identity(2, 2),
                                 Mat::Zero(1, 2), 1.0),
                    InvalidInput);
    Mat asym(2, 2);
    asym << 1, 1, 0, 1;
    CHECK_THROWS_AS(lmi_residual(Mat::Zero(2, 2), Mat::Zero(2, 1), asym,
                                 Mat::Zero(1, 2), 1.0),
                    InvalidInput);
  }
}

TEST_CASE("synth handles the zero-input special case") {
  std::mt19937_64 rng(106);
  const Mat a = stable_system(3, rng);
  const SynthesisResult res = synth(a, Mat::Zero(3, 1));
  CHECK(res.v.norm() == 0.0);
  CHECK(res.gamma == 0.0);
  CHECK(res.verified_hinf == 0.0);
  CHECK(res.closed_loop_rho < 1.0);
  const VerificationReport rep = verify(res, a, Mat::Zero(3, 1));
  CHECK(rep.certificate_ok);
  CHECK_THROWS_AS(synth(Mat(1.5 * Mat::Identity(2, 2)), Mat::Zero(2, 1)),
                  SynthesisInfeasible);
}

TEST_CASE("scalar synthesis beats the open loop and matches a sweep oracle") {
  Mat a(1, 1), b(1, 1);
  a << 0.9;
  b << 1.0;
  SynthOptions opts;
  opts.search_grid = 512;
  opts.verify_grid = 2048;
  const SynthesisResult res = synth(a, b, opts);

  // Open loop: 1 / (1 - 0.9) = 10.
  CHECK(res.verified_hinf < 10.0);
  CHECK(res.closed_loop_rho < 1.0);
  CHECK(res.lmi_min_eig > 0.0);
  CHECK(res.verified_hinf < res.gamma);

  // Sweep oracle over the gain: the achievable stacked norm.
  double best_sweep = std::numeric_limits<double>::infinity();
  for (double v = -1.9; v <= 0.1; v += 0.001) {
    const double acl = 0.9 + v;
    if (std::abs(acl) >= 0.999) continue;
    Mat bw(1, 2);
    bw << 1.0, v;
    TransferFunction tf;
    tf.a = Mat::Constant(1, 1, acl);
    tf.b = bw;
    tf.c = Mat::Identity(1, 1);
    best_sweep = std::min(best_sweep, hinf_norm(tf, 512).norm);
  }
  CHECK(res.verified_hinf >= best_sweep * (1.0 - 1e-6));
  // The certified gain should land in the same ballpark as the sweep optimum.
  CHECK(res.verified_hinf <= 10.0 * best_sweep);
}

TEST_CASE("synthesis improves the stacked gain on most random systems") {
  std::mt19937_64 rng(107);
  int improved = 0, total = 0;
  for (int seed = 0; seed < 12; ++seed) {
    const Mat a = stable_system(4, rng, 0.9);
    const Mat b = random_mat(4, 2, rng);
    SynthOptions opts;
    opts.search_grid = 256;
    opts.verify_grid = 1024;
    opts.bisect_iters = 24;
    try {
      const SynthesisResult res = synth(a, b, opts);
      ++total;
      if (res.verified_hinf < open_loop_stacked(a, b)) ++improved;
      // Soundness of every accepted certificate.
      CHECK(res.closed_loop_rho < 1.0);
      CHECK(res.verified_hinf < res.gamma * (1.0 + 1e-6));
      CHECK(res.lmi_min_eig > 0.0);
      CHECK(res.s_channel_bound == doctest::Approx(res.gamma * sigma_max(res.v)));
    } catch (const SynthesisInfeasible&) {
    }
  }
  CHECK(total >= 10);
  CHECK(improved >= static_cast<int>(0.75 * total));
}

TEST_CASE("tampered certificates are rejected loudly") {
  std::mt19937_64 rng(108);
  const Mat a = stable_system(3, rng, 0.8);
  const Mat b = random_mat(3, 1, rng);
  SynthOptions opts;
  opts.search_grid = 256;
  opts.verify_grid = 1024;
  opts.bisect_iters = 20;
  const SynthesisResult res = synth(a, b, opts);
  CHECK(verify(res, a, b, 1024).certificate_ok);

  SynthesisResult tampered = res;
  tampered.v *= 10.0;
  CHECK_FALSE(verify(tampered, a, b, 1024).certificate_ok);
}

TEST_CASE("apply_rejection reduces to plain forward passes at V = 0") {
  std::mt19937_64 rng(109);
  const LstmNetwork net = random_network({4, 3}, 1, 1, 0, 110);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<Vec>> data;
  for (int s = 0; s < 4; ++s) {
    std::vector<Vec> seq(40);
    for (auto& x : seq) x = Vec::Constant(1, gauss(rng));
    data.push_back(std::move(seq));
  }
  const auto snaps = harvest(net, data);
  std::vector<LayerSurrogate> layers;
  for (const auto& snap : snaps) layers.push_back(fit_dmdc(snap));
  const LinearSurrogate sur = assemble(layers);
  const ReductionResult red = reduce(sur, ReductionPolicy::top_k(6));
  const Mat v_zero = Mat::Zero(1, red.reduced_dim());

  std::vector<Vec> d(40, Vec::Zero(1));
  for (auto& v : d) v(0) = 0.2 * gauss(rng);

  SUBCASE("V = 0 with a shift equals the unmodified shifted run") {
    const Trajectory got = apply_rejection(net, sur, red, v_zero, data[0], d);
    std::vector<Vec> shifted(40);
    for (int t = 0; t < 40; ++t) shifted[t] = data[0][t] + d[t];
    const Trajectory want = forward(net, shifted);
    for (Eigen::Index t = 0; t < 40; ++t) {
      CHECK((got.concat_state(t) - want.concat_state(t)).norm() == 0.0);
      CHECK((got.outputs[t] - want.outputs[t]).norm() == 0.0);
    }
  }
  SUBCASE("V = 0 and zero shift equals the clean run") {
    const std::vector<Vec> zeros(40, Vec::Zero(1));
    const Trajectory got = apply_rejection(net, sur, red, v_zero, data[0], zeros);
    const Trajectory want = forward(net, data[0]);
    for (Eigen::Index t = 0; t < 40; ++t) {
      CHECK((got.concat_state(t) - want.concat_state(t)).norm() == 0.0);
    }
  }
  SUBCASE("destabilizing gains are refused") {
    // A gain that pushes the reduced model outside the unit circle.
    Mat v_bad = Mat::Constant(1, red.reduced_dim(), 100.0);
    if (spectral_radius(red.a_cc + red.b_c * v_bad) >= 1.0) {
      CHECK_THROWS_AS(apply_rejection(net, sur, red, v_bad, data[0], d),
                      UnstableSystem);
    }
  }
}

TEST_CASE("rejection damps the surrogate deviation energy") {
  // Pure surrogate-level check: the synthesized gain must reduce the
  // deviation response to the disturbance it was designed against.
  std::mt19937_64 rng(111);
  int damped = 0, total = 0;
  for (int seed = 0; seed < 6; ++seed) {
    const Mat a = stable_system(6, rng, 0.92);
    const Mat b = random_mat(6, 1, rng);
    SynthOptions opts;
    opts.search_grid = 256;
    opts.verify_grid = 1024;
    opts.bisect_iters = 20;
    try {
      const SynthesisResult res = synth(a, b, opts);
      ++total;
      // Roll the open- and closed-loop deviation systems on the same shift.
      std::normal_distribution<double> gauss(0.0, 1.0);
      Vec open_dev = Vec::Zero(6), closed_dev = Vec::Zero(6);
      double open_energy = 0.0, closed_energy = 0.0;
      for (int t = 0; t < 400; ++t) {
        const double d = gauss(rng);
        open_dev = a * open_dev + b * Vec::Constant(1, d);
        // Closed loop: delta_t = (A + BV) delta_{t-1} + B d_t (s-path absent
        // because the nominal trajectory is the comparison baseline).
        closed_dev = (a + b * res.v) * closed_dev + b * Vec::Constant(1, d);
        open_energy += open_dev.squaredNorm();
        closed_energy += closed_dev.squaredNorm();
      }
      if (closed_energy < open_energy) ++damped;
    } catch (const SynthesisInfeasible&) {
    }
  }
  CHECK(total >= 5);
  CHECK(damped >= total - 1);
}

TEST_CASE("certificate file contains the published fields") {
  std::mt19937_64 rng(112);
  const Mat a = stable_system(2, rng, 0.7);
  const Mat b = random_mat(2, 1, rng);
  SynthOptions opts;
  opts.search_grid = 256;
  opts.verify_grid = 512;
  opts.bisect_iters = 16;
  const SynthesisResult res = synth(a, b, opts);
  ReductionResult red;
  red.t_c = Mat::Identity(2, 2);
  const std::string path = "test_certificate.json";
  save_certificate(res, red, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const char* field : {"gamma", "V", "T_c", "rho_closed", "verified_hinf",
                            "lmi_min_eig"}) {
    CHECK(text.find(field) != std::string::npos);
  }
  std::filesystem::remove(path);
}
