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

#include "klens/dmdc.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

#include "klens/lstm.hpp"

using namespace klens;

namespace {

Mat random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

// Simulate s_t = A0 s_{t-1} + B0 x_t with white-noise inputs.
SnapshotSet simulate(const Mat& a0, const Mat& b0, Eigen::Index t_len,
                     std::mt19937_64& rng) {
  const Eigen::Index n = a0.rows(), m = b0.cols();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat s(n, t_len), xi(n, t_len), x(m, t_len);
  Vec state = Vec::Zero(n);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec u(m);
    for (Eigen::Index k = 0; k < m; ++k) u(k) = gauss(rng);
    s.col(t) = state;
    state = a0 * state + b0 * u;
    xi.col(t) = state;
    x.col(t) = u;
  }
  return make_snapshots(s, xi, x);
}

Mat stable_system(Eigen::Index n, std::mt19937_64& rng, double rho = 0.8) {
  const Mat raw = random_mat(n, n, rng);
  return raw * (rho / spectral_radius(raw));
}

}  // namespace

TEST_CASE("scalar system is identified exactly") {
  std::mt19937_64 rng(31);
  Mat a0(1, 1), b0(1, 1);
  a0 << 0.5;
  b0 << 1.0;
  const SnapshotSet snap = simulate(a0, b0, 50, rng);
  const LayerSurrogate fit = fit_dmdc(snap);
  CHECK(fit.a(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.b(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.training_residual < 1e-12);
}

TEST_CASE("known 2x2 system recovered from 200 excited snapshots") {
  std::mt19937_64 rng(32);
  Mat a0(2, 2), b0(2, 1);
  a0 << 0.7, 0.2, -0.1, 0.5;
  b0 << 1.0, 0.3;
  const SnapshotSet snap = simulate(a0, b0, 200, rng);
  const LayerSurrogate fit = fit_dmdc(snap);
  CHECK((fit.a - a0).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.b - b0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("exact recovery over randomized linear systems") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 16);
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 4);
    const Mat a0 = stable_system(n, rng);
    const Mat b0 = random_mat(n, m, rng);
    const SnapshotSet snap = simulate(a0, b0, std::max<Eigen::Index>(200, 2 * (n + m)), rng);
    const LayerSurrogate fit = fit_dmdc(snap);
    CHECK((fit.a - a0).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((fit.b - b0).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("full-rank truncation coincides with the pseudoinverse path") {
  std::mt19937_64 rng(34);
  const Mat a0 = stable_system(4, rng);
  const Mat b0 = random_mat(4, 2, rng);
  const SnapshotSet snap = simulate(a0, b0, 120, rng);

  const LayerSurrogate exact = fit_dmdc(snap);
  FitOptions opts;
  opts.truncation = TruncationPolicy::ranks(6, 4);  // full: p = n+m, r = n
  const LayerSurrogate projected = fit_dmdc(snap, opts);
  CHECK((exact.a - projected.a).norm() < 1e-8 * std::max(1.0, exact.a.norm()));
  CHECK((exact.b - projected.b).norm() < 1e-8 * std::max(1.0, exact.b.norm()));
  CHECK(projected.rank_p == 6);
  CHECK(projected.rank_r == 4);
}

TEST_CASE("energy truncation keeps the dominant dynamics") {
  std::mt19937_64 rng(35);
  // Strongly anisotropic system: one dominant state direction.
  Mat a0 = Mat::Zero(3, 3);
  a0.diagonal() << 0.9, 0.05, 0.02;
  Mat b0(3, 1);
  b0 << 1.0, 0.01, 0.005;
  const SnapshotSet snap = simulate(a0, b0, 400, rng);
  FitOptions opts;
  opts.truncation = TruncationPolicy::energy_fraction(0.999);
  const LayerSurrogate fit = fit_dmdc(snap, opts);
  CHECK(fit.rank_p >= 1);
  CHECK(fit.training_residual < 0.1);
  // The dominant mode survives the projection.
  CHECK(spectral_radius(fit.a) == doctest::Approx(0.9).epsilon(0.05));
}

TEST_CASE("least-squares stationarity: perturbations never reduce the residual") {
  std::mt19937_64 rng(36);
  const Mat a0 = stable_system(3, rng);
  const Mat b0 = random_mat(3, 2, rng);
  const SnapshotSet snap = simulate(a0, b0, 60, rng);
  // Make the fit nontrivial: corrupt successor states a little.
  SnapshotSet noisy = snap;
  noisy.xi += 0.01 * random_mat(3, 60, rng);
  const LayerSurrogate fit = fit_dmdc(noisy);
  const double base = (noisy.xi - fit.a * noisy.s - fit.b * noisy.x).norm();
  for (int dir = 0; dir < 100; ++dir) {
    const Mat da = 1e-3 * random_mat(3, 3, rng);
    const Mat db = 1e-3 * random_mat(3, 2, rng);
    const double perturbed =
        (noisy.xi - (fit.a + da) * noisy.s - (fit.b + db) * noisy.x).norm();
    CHECK(perturbed >= base - 1e-12);
  }
}

TEST_CASE("tikhonov regularization shrinks the solution") {
  std::mt19937_64 rng(37);
  const Mat a0 = stable_system(3, rng);
  const Mat b0 = random_mat(3, 1, rng);
  const SnapshotSet snap = simulate(a0, b0, 100, rng);
  FitOptions ridge;
  ridge.tikhonov = 10.0;
  const LayerSurrogate plain = fit_dmdc(snap);
  const LayerSurrogate shrunk = fit_dmdc(snap, ridge);
  Mat plain_ab(3, 4), shrunk_ab(3, 4);
  plain_ab << plain.a, plain.b;
  shrunk_ab << shrunk.a, shrunk.b;
  CHECK(shrunk_ab.norm() < plain_ab.norm());
  CHECK(shrunk.tikhonov == 10.0);
}

TEST_CASE("dmdc_modes on diagonal and scalar systems") {
  std::mt19937_64 rng(38);
  SUBCASE("diagonal system eigenvalues come back sorted") {
    Mat a0 = Mat::Zero(2, 2);
    a0.diagonal() << 0.5, 0.9;
    Mat b0(2, 1);
    b0 << 1.0, 1.0;
    const SnapshotSet snap = simulate(a0, b0, 100, rng);
    const LayerSurrogate fit = fit_dmdc(snap);
    const DmdcModes modes = dmdc_modes(fit, snap);
    CHECK(std::abs(modes.eigenvalues(0)) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(std::abs(modes.eigenvalues(1)) == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("scalar system has a single mode at 0.5") {
    Mat a0(1, 1), b0(1, 1);
    a0 << 0.5;
    b0 << 1.0;
    const SnapshotSet snap = simulate(a0, b0, 50, rng);
    const LayerSurrogate fit = fit_dmdc(snap);
    const DmdcModes modes = dmdc_modes(fit, snap);
    CHECK(modes.eigenvalues.size() == 1);
    CHECK(modes.eigenvalues(0).real() == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("random 6-state eigen relation") {
    const Mat a0 = stable_system(6, rng);
    const Mat b0 = random_mat(6, 2, rng);
    const SnapshotSet snap = simulate(a0, b0, 200, rng);
    const LayerSurrogate fit = fit_dmdc(snap);
    const DmdcModes modes = dmdc_modes(fit, snap);
    // Eigenvalues of the projected operator match those of the fitted A.
    Eigen::EigenSolver<Mat> es(fit.a);
    CVec lam = es.eigenvalues();
    std::vector<double> got, want;
    for (Eigen::Index i = 0; i < 6; ++i) {
      got.push_back(std::abs(modes.eigenvalues(i)));
      want.push_back(std::abs(lam(i)));
    }
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("assemble builds the block bidiagonal operator") {
  std::mt19937_64 rng(39);
  SUBCASE("single layer passes through") {
    LayerSurrogate l;
    l.a = random_mat(4, 4, rng);
    l.b = random_mat(4, 1, rng);
    const LinearSurrogate sur = assemble({l});
    CHECK((sur.a - l.a).norm() == 0.0);
    CHECK((sur.b - l.b).norm() == 0.0);
    // C = [0 I] with the identity over the hidden half.
    CHECK(sur.c.rows() == 2);
    CHECK((sur.c.rightCols(2) - Mat::Identity(2, 2)).norm() == 0.0);
    CHECK(sur.c.leftCols(2).norm() == 0.0);
  }
  SUBCASE("two layers place B2 C1 on the sub-diagonal block") {
    LayerSurrogate l1, l2;
    l1.a = random_mat(4, 4, rng);
    l1.b = random_mat(4, 1, rng);
    l2.a = random_mat(4, 4, rng);
    l2.b = random_mat(4, 2, rng);  // layer-2 input = layer-1 hidden (2)
    const LinearSurrogate sur = assemble({l1, l2});
    REQUIRE(sur.a.rows() == 8);
    CHECK((sur.a.block(0, 0, 4, 4) - l1.a).norm() == 0.0);
    CHECK((sur.a.block(4, 4, 4, 4) - l2.a).norm() == 0.0);
    // Hand block product: B2 * [0 I].
    Mat expect = Mat::Zero(4, 4);
    expect.rightCols(2) = l2.b;
    CHECK((sur.a.block(4, 0, 4, 4) - expect).norm() == 0.0);
    CHECK(sur.a.block(0, 4, 4, 4).norm() == 0.0);
    CHECK((sur.b.topRows(4) - l1.b).norm() == 0.0);
    CHECK(sur.b.bottomRows(4).norm() == 0.0);
  }
  SUBCASE("sparsity above the sub-diagonal band for 1-4 layers") {
    for (int layers = 1; layers <= 4; ++layers) {
      std::vector<LayerSurrogate> ls(layers);
      Eigen::Index prev_hid = 1;
      for (int k = 0; k < layers; ++k) {
        const Eigen::Index nh = 2 + k;
        ls[k].a = random_mat(2 * nh, 2 * nh, rng);
        ls[k].b = random_mat(2 * nh, prev_hid, rng);
        prev_hid = nh;
      }
      const LinearSurrogate sur = assemble(ls);
      Eigen::Index row_at = 0;
      for (int i = 0; i < layers; ++i) {
        const Eigen::Index rdim = ls[i].a.rows();
        Eigen::Index col_at = 0;
        for (int j = 0; j < layers; ++j) {
          const Eigen::Index cdim = ls[j].a.rows();
          if (j > i || j < i - 1) {
            CHECK(sur.a.block(row_at, col_at, rdim, cdim).norm() == 0.0);
          }
          col_at += cdim;
        }
        row_at += rdim;
      }
    }
  }
  SUBCASE("chaining mismatch is rejected") {
    LayerSurrogate l1, l2;
    l1.a = random_mat(4, 4, rng);
    l1.b = random_mat(4, 1, rng);
    l2.a = random_mat(4, 4, rng);
    l2.b = random_mat(4, 3, rng);  // should be 2
    CHECK_THROWS_AS(assemble({l1, l2}), InvalidInput);
  }
}

TEST_CASE("surrogate step and rollout") {
  std::mt19937_64 rng(40);
  LayerSurrogate l;
  l.a = Mat::Identity(2, 2);
  l.b = Mat::Zero(2, 1);
  const LinearSurrogate constant = assemble({l});
  Vec s(2);
  s << 1.0, -2.0;
  CHECK((surrogate_step(constant, s, Vec::Zero(1)) - s).norm() == 0.0);

  LayerSurrogate l2;
  l2.a = 0.5 * random_mat(2, 2, rng);
  l2.b = random_mat(2, 1, rng);
  const LinearSurrogate sur = assemble({l2});
  SUBCASE("zero input and state stay zero") {
    const auto states = surrogate_rollout(sur, std::vector<Vec>(5, Vec::Zero(1)),
                                          Vec::Zero(2));
    for (const Vec& st : states) CHECK(st.norm() == 0.0);
  }
  SUBCASE("rollout matches the naive loop") {
    std::vector<Vec> xs(20, Vec::Zero(1));
    for (auto& x : xs) x(0) = std::normal_distribution<double>(0, 1)(rng);
    const auto states = surrogate_rollout(sur, xs, Vec::Zero(2));
    Vec manual = Vec::Zero(2);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      manual = sur.a * manual + sur.b * xs[t];
      CHECK((states[t] - manual).norm() == 0.0);
    }
  }
}

TEST_CASE("fidelity report on exactly linear and zero networks") {
  std::mt19937_64 rng(41);
  SUBCASE("zero-weight network has zero errors") {
    LstmNetwork net = random_network({3}, 1, 1, 0, 1);
    for (auto& l : net.layers) {
      l.w_f.setZero();
      l.w_i.setZero();
      l.w_c.setZero();
      l.w_o.setZero();
      l.u_f.setZero();
      l.u_i.setZero();
      l.u_c.setZero();
      l.u_o.setZero();
    }
    const auto snaps = harvest(net, {std::vector<Vec>(6, Vec::Zero(1))});
    // All-zero states: fit on the degenerate harvest and report zero error.
    const LayerSurrogate fit = fit_dmdc(snaps[0]);
    const LinearSurrogate sur = assemble({fit});
    const FidelityReport rep =
        fidelity_report(sur, net, {std::vector<Vec>(6, Vec::Zero(1))});
    CHECK(rep.free_run_state == 0.0);
    CHECK(rep.one_step_state == 0.0);
  }
  SUBCASE("small random network: one-step error does not exceed free-run error") {
    const LstmNetwork net = random_network({4}, 1, 1, 0, 2);
    std::vector<std::vector<Vec>> data;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < 6; ++s) {
      std::vector<Vec> seq(60);
      for (auto& x : seq) x = Vec::Constant(1, gauss(rng));
      data.push_back(std::move(seq));
    }
    const auto snaps = harvest(net, data);
    const LayerSurrogate fit = fit_dmdc(snaps[0]);
    const LinearSurrogate sur = assemble({fit});
    const FidelityReport rep = fidelity_report(sur, net, {data[0], data[1]});
    CHECK(rep.one_step_state <= rep.free_run_state + 1e-12);
    CHECK(rep.one_step_top_hidden <= rep.free_run_top_hidden + 1e-12);
  }
}

TEST_CASE("surrogate file round trip") {
  std::mt19937_64 rng(42);
  Mat a0 = stable_system(4, rng);
  Mat b0 = random_mat(4, 2, rng);
  const SnapshotSet snap = simulate(a0, b0, 100, rng);
  LayerSurrogate l = fit_dmdc(snap);
  const LinearSurrogate sur = assemble({l});
  const std::string path = "test_surrogate_roundtrip.json";
  save_surrogate(sur, path);
  const LinearSurrogate loaded = load_surrogate(path);
  CHECK((loaded.a - sur.a).norm() == 0.0);
  CHECK((loaded.b - sur.b).norm() == 0.0);
  CHECK((loaded.c - sur.c).norm() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("snapshot validation") {
  Mat s = Mat::Zero(2, 3), xi = Mat::Zero(2, 3), x = Mat::Zero(1, 4);
  CHECK_THROWS_AS(make_snapshots(s, xi, x), InvalidInput);
  CHECK_THROWS_AS(fit_dmdc(make_snapshots(Mat::Zero(2, 1), Mat::Zero(2, 1),
                                          Mat::Zero(1, 1))),
                  InvalidInput);
}
