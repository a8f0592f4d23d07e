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

#include "klens/lstm.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace klens;

namespace {

std::vector<Vec> random_sequence(Eigen::Index len, Eigen::Index dim,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> xs(len);
  for (auto& x : xs) {
    x.resize(dim);
    for (Eigen::Index k = 0; k < dim; ++k) x(k) = gauss(rng);
  }
  return xs;
}

LstmNetwork zero_network(Eigen::Index n_in, Eigen::Index n_hid, Eigen::Index n_out,
                         int tau) {
  LstmNetwork net = random_network({n_hid}, n_in, n_out, tau, 0);
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
  net.head.w.setZero();
  return net;
}

// Scalar-by-scalar evaluation of the cell equations, independent of the
// vectorized implementation.
LayerState scalar_cell_oracle(const LstmLayerWeights& w, const LayerState& prev,
                              const Vec& x) {
  const Eigen::Index nh = w.n_hid();
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  LayerState out{Vec(nh), Vec(nh)};
  for (Eigen::Index i = 0; i < nh; ++i) {
    double zf = w.b_f(i), zi = w.b_i(i), zc = w.b_c(i), zo = w.b_o(i);
    for (Eigen::Index j = 0; j < w.n_in(); ++j) {
      zf += w.w_f(i, j) * x(j);
      zi += w.w_i(i, j) * x(j);
      zc += w.w_c(i, j) * x(j);
      zo += w.w_o(i, j) * x(j);
    }
    for (Eigen::Index j = 0; j < nh; ++j) {
      zf += w.u_f(i, j) * prev.h(j);
      zi += w.u_i(i, j) * prev.h(j);
      zc += w.u_c(i, j) * prev.h(j);
      zo += w.u_o(i, j) * prev.h(j);
    }
    const double f = sig(zf), in = sig(zi), g = std::tanh(zc), o = sig(zo);
    out.c(i) = f * prev.c(i) + in * g;
    out.h(i) = o * std::tanh(out.c(i));
  }
  return out;
}

}  // namespace

TEST_CASE("cell_step with all-zero parameters") {
  LstmNetwork net = zero_network(2, 3, 1, 0);
  const LayerState prev{Vec::Zero(3), Vec::Zero(3)};
  Vec x(2);
  x << 1.0, -2.0;
  const LayerState out = cell_step(net.layers[0], prev, x);
  // sigma(0) = 0.5 and tanh(0) = 0, so c and h stay exactly zero.
  CHECK(out.c.norm() == 0.0);
  CHECK(out.h.norm() == 0.0);
}

TEST_CASE("saturated forget gate preserves the cell state") {
  LstmNetwork net = zero_network(1, 1, 1, 0);
  net.layers[0].b_f(0) = 50.0;  // sigma(50) ~ 1 to machine precision
  const LayerState prev{Vec::Ones(1), Vec::Zero(1)};
  const LayerState out = cell_step(net.layers[0], prev, Vec::Zero(1));
  CHECK(std::abs(out.c(0) - 1.0) < 1e-20);
}

TEST_CASE("cell_step matches the scalar-loop oracle") {
  std::mt19937_64 rng(11);
  const LstmNetwork net = random_network({4}, 3, 1, 0, 123);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LayerState prev{Vec(4), Vec(4)};
  for (Eigen::Index i = 0; i < 4; ++i) {
    prev.c(i) = gauss(rng);
    prev.h(i) = gauss(rng);
  }
  Vec x(3);
  for (Eigen::Index i = 0; i < 3; ++i) x(i) = gauss(rng);

  const LayerState got = cell_step(net.layers[0], prev, x);
  const LayerState want = scalar_cell_oracle(net.layers[0], prev, x);
  CHECK((got.c - want.c).norm() < 1e-14);
  CHECK((got.h - want.h).norm() < 1e-14);
}

TEST_CASE("cell_step rejects dimension mismatch") {
  LstmNetwork net = zero_network(2, 3, 1, 0);
  const LayerState prev{Vec::Zero(3), Vec::Zero(3)};
  CHECK_THROWS_AS(cell_step(net.layers[0], prev, Vec::Zero(5)), InvalidInput);
}

TEST_CASE("forward with zero weights emits the head bias") {
  LstmNetwork net = zero_network(1, 3, 2, 0);
  net.head.b << 0.7, -0.3;
  std::mt19937_64 rng(12);
  const auto xs = random_sequence(5, 1, rng);
  const Trajectory traj = forward(net, xs);
  for (Eigen::Index t = 0; t < traj.length(); ++t) {
    CHECK(traj.states[t][0].h.norm() == 0.0);
    CHECK((traj.outputs[t] - net.head.b).norm() == 0.0);
  }
}

TEST_CASE("tau = 0 applies the head once per step") {
  std::mt19937_64 rng(13);
  const LstmNetwork net = random_network({4}, 2, 3, 0, 321);
  const auto xs = random_sequence(6, 2, rng);
  const Trajectory traj = forward(net, xs);
  CHECK(traj.outputs.size() == xs.size());
  for (Eigen::Index t = 0; t < traj.length(); ++t) {
    const Vec expect = net.head.w * traj.top_hidden(t) + net.head.b;
    CHECK((traj.outputs[t] - expect).norm() == 0.0);
  }
  const Vec q = predict_window(net, xs);
  CHECK(q.size() == 3);
  CHECK((q - traj.outputs.back()).norm() == 0.0);
}

TEST_CASE("re-stepping a 2-layer trajectory reproduces stored states exactly") {
  std::mt19937_64 rng(14);
  const LstmNetwork net = random_network({4, 3}, 2, 1, 2, 99);
  const auto xs = random_sequence(10, 2, rng);
  const Trajectory traj = forward(net, xs);

  LstmState state = zero_state(net);
  for (Eigen::Index t = 0; t < traj.length(); ++t) {
    state[0] = cell_step(net.layers[0], state[0], xs[t]);
    state[1] = cell_step(net.layers[1], state[1], state[0].h);
    CHECK((state[0].c - traj.states[t][0].c).norm() == 0.0);
    CHECK((state[0].h - traj.states[t][0].h).norm() == 0.0);
    CHECK((state[1].c - traj.states[t][1].c).norm() == 0.0);
    CHECK((state[1].h - traj.states[t][1].h).norm() == 0.0);
  }
}

TEST_CASE("determinism: same inputs give identical trajectories") {
  std::mt19937_64 rng(15);
  const LstmNetwork net = random_network({5}, 2, 1, 0, 500);
  const auto xs = random_sequence(20, 2, rng);
  const Trajectory a = forward(net, xs);
  const Trajectory b = forward(net, xs);
  for (Eigen::Index t = 0; t < a.length(); ++t) {
    CHECK((a.concat_state(t) - b.concat_state(t)).norm() == 0.0);
  }
}

TEST_CASE("gate ranges and cell growth bound on random rollouts") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const LstmNetwork net = random_network({6}, 3, 1, 0, 1000 + trial);
    const auto xs = random_sequence(30, 3, rng);
    const Trajectory traj = forward(net, xs);
    for (Eigen::Index t = 0; t < traj.length(); ++t) {
      const Vec& c = traj.states[t][0].c;
      const Vec& h = traj.states[t][0].h;
      // |c_t| <= t + 1 from |f|,|i| < 1 and |candidate| < 1; h in (-1, 1).
      CHECK(c.cwiseAbs().maxCoeff() <= static_cast<double>(t) + 1.0);
      CHECK(h.cwiseAbs().maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("harvest counts columns and never pairs across sequences") {
  std::mt19937_64 rng(17);
  const LstmNetwork net = random_network({3}, 1, 1, 0, 42);

  SUBCASE("one length-2 sequence gives 2 columns") {
    const auto snaps = harvest(net, {random_sequence(2, 1, rng)});
    CHECK(snaps.size() == 1);
    CHECK(snaps[0].count() == 2);
    CHECK(snaps[0].s.col(0).norm() == 0.0);  // zero initial state
  }

  SUBCASE("two sequences of lengths 3 and 5 give 8 columns with a boundary reset") {
    const auto seq_a = random_sequence(3, 1, rng);
    const auto seq_b = random_sequence(5, 1, rng);
    const auto snaps = harvest(net, {seq_a, seq_b});
    CHECK(snaps[0].count() == 8);
    // Column 3 is the start of sequence B: its prev state must be zero, not
    // the final state of sequence A.
    CHECK(snaps[0].s.col(3).norm() == 0.0);
    CHECK(snaps[0].xi.col(2).norm() > 0.0);
    // Every successor column continues the harvested dynamics.
    const Trajectory tb = forward(net, seq_b);
    Vec want(6);
    want << tb.states[0][0].c, tb.states[0][0].h;
    CHECK((snaps[0].xi.col(3) - want).norm() == 0.0);
  }

  SUBCASE("zero-weight network harvests zero states and raw inputs") {
    LstmNetwork zero = zero_network(1, 3, 1, 0);
    const auto seq = random_sequence(4, 1, rng);
    const auto snaps = harvest(zero, {seq});
    CHECK(snaps[0].s.norm() == 0.0);
    CHECK(snaps[0].xi.norm() == 0.0);
    for (Eigen::Index t = 0; t < 4; ++t) {
      CHECK(snaps[0].x(0, t) == seq[t](0));
    }
  }

  SUBCASE("layer 2 sees layer 1 hidden states as inputs") {
    const LstmNetwork deep = random_network({3, 2}, 1, 1, 0, 4242);
    const auto seq = random_sequence(4, 1, rng);
    const auto snaps = harvest(deep, {seq});
    const Trajectory traj = forward(deep, seq);
    for (Eigen::Index t = 0; t < 4; ++t) {
      CHECK((snaps[1].x.col(t) - traj.states[t][0].h).norm() == 0.0);
    }
  }

  CHECK_THROWS_AS(harvest(net, {}), InvalidInput);
}

TEST_CASE("BPTT gradient matches central finite differences") {
  // 1-layer, 3 hidden units, length-5 sequence, every parameter tensor.
  LstmNetwork net = random_network({3}, 2, 2, 1, 77);
  std::mt19937_64 rng(18);
  TrainWindow w;
  w.x = random_sequence(5, 2, rng);
  w.y.resize(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) w.y(i) = gauss(rng);

  const LossGradients analytic = window_loss_gradients(net, w);

  const double eps = 1e-5;
  double max_rel = 0.0;
  auto check_tensor = [&](auto& param, const auto& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      double* p = param.data() + i;
      const double orig = *p;
      *p = orig + eps;
      const double up = window_loss(net, w);
      *p = orig - eps;
      const double dn = window_loss(net, w);
      *p = orig;
      const double fd = (up - dn) / (2 * eps);
      const double g = *(grad.data() + i);
      const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  };
  for (std::size_t n = 0; n < net.layers.size(); ++n) {
    check_tensor(net.layers[n].w_f, analytic.layers[n].w_f);
    check_tensor(net.layers[n].w_i, analytic.layers[n].w_i);
    check_tensor(net.layers[n].w_c, analytic.layers[n].w_c);
    check_tensor(net.layers[n].w_o, analytic.layers[n].w_o);
    check_tensor(net.layers[n].u_f, analytic.layers[n].u_f);
    check_tensor(net.layers[n].u_i, analytic.layers[n].u_i);
    check_tensor(net.layers[n].u_c, analytic.layers[n].u_c);
    check_tensor(net.layers[n].u_o, analytic.layers[n].u_o);
    check_tensor(net.layers[n].b_f, analytic.layers[n].b_f);
    check_tensor(net.layers[n].b_i, analytic.layers[n].b_i);
    check_tensor(net.layers[n].b_c, analytic.layers[n].b_c);
    check_tensor(net.layers[n].b_o, analytic.layers[n].b_o);
  }
  check_tensor(net.head.w, analytic.head.w);
  check_tensor(net.head.b, analytic.head.b);
  CHECK(max_rel < 1e-4);
}

TEST_CASE("gradient check on a 2-layer network") {
  LstmNetwork net = random_network({3, 2}, 1, 1, 2, 78);
  std::mt19937_64 rng(19);
  TrainWindow w;
  w.x = random_sequence(6, 1, rng);
  w.y.resize(3);
  w.y << 0.3, -0.2, 0.9;

  const LossGradients analytic = window_loss_gradients(net, w);
  const double eps = 1e-5;
  // Spot-check one tensor per layer plus the head.
  auto fd_at = [&](double* p) {
    const double orig = *p;
    *p = orig + eps;
    const double up = window_loss(net, w);
    *p = orig - eps;
    const double dn = window_loss(net, w);
    *p = orig;
    return (up - dn) / (2 * eps);
  };
  CHECK(fd_at(net.layers[0].u_c.data()) ==
        doctest::Approx(analytic.layers[0].u_c(0, 0)).epsilon(1e-4));
  CHECK(fd_at(net.layers[1].w_o.data()) ==
        doctest::Approx(analytic.layers[1].w_o(0, 0)).epsilon(1e-4));
  CHECK(fd_at(net.head.w.data()) == doctest::Approx(analytic.head.w(0, 0)).epsilon(1e-4));
}

TEST_CASE("zero learning rate leaves weights unchanged") {
  LstmNetwork net = random_network({3}, 1, 1, 0, 5);
  const Mat w_before = net.layers[0].w_c;
  std::mt19937_64 rng(20);
  std::vector<TrainWindow> windows;
  for (int k = 0; k < 4; ++k) {
    TrainWindow w;
    w.x = random_sequence(5, 1, rng);
    w.y = Vec::Constant(1, 0.5);
    windows.push_back(std::move(w));
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  train(net, windows, cfg);
  CHECK((net.layers[0].w_c - w_before).norm() == 0.0);
}

TEST_CASE("training a tiny net on a constant target converges") {
  LstmNetwork net = random_network({3}, 1, 1, 0, 6);
  std::mt19937_64 rng(21);
  std::vector<TrainWindow> windows;
  for (int k = 0; k < 8; ++k) {
    TrainWindow w;
    w.x = random_sequence(5, 1, rng);
    w.y = Vec::Constant(1, 0.7);
    windows.push_back(std::move(w));
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 8;
  cfg.validation_fraction = 0.0;
  const TrainReport rep = train(net, windows, cfg);
  CHECK(rep.final_train_mse < 0.1 * rep.train_mse.front());
  // Monotone decrease after warmup, measured on 50-epoch block means: Adam
  // has genuine short transients on this tiny problem, the trend must not.
  std::vector<double> blocks;
  for (std::size_t e = 0; e + 50 <= rep.train_mse.size(); e += 50) {
    double mean = 0.0;
    for (std::size_t k = e; k < e + 50; ++k) mean += rep.train_mse[k];
    blocks.push_back(mean / 50.0);
  }
  REQUIRE(blocks.size() == 4);
  for (std::size_t b = 1; b < blocks.size(); ++b) CHECK(blocks[b] < blocks[b - 1]);
}

TEST_CASE("weight file round trip is bitwise exact") {
  const LstmNetwork net = random_network({4, 3}, 2, 2, 3, 71);
  const std::string path = "test_weights_roundtrip.json";
  save_weights(net, path);
  const LstmNetwork loaded = load_weights(path);
  CHECK(loaded.tau == net.tau);
  REQUIRE(loaded.layers.size() == net.layers.size());
  for (std::size_t n = 0; n < net.layers.size(); ++n) {
    CHECK((loaded.layers[n].w_f - net.layers[n].w_f).norm() == 0.0);
    CHECK((loaded.layers[n].u_o - net.layers[n].u_o).norm() == 0.0);
    CHECK((loaded.layers[n].b_c - net.layers[n].b_c).norm() == 0.0);
  }
  CHECK((loaded.head.w - net.head.w).norm() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("weight file with broken layer chaining is rejected") {
  LstmNetwork net = random_network({3, 2}, 1, 1, 0, 72);
  const std::string path = "test_weights_badchain.json";
  save_weights(net, path);
  // Corrupt the chaining by rewriting layer 2's declared input size.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.rfind("\"n_in\": 3");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 9, "\"n_in\": 9");
  std::ofstream out(path);
  out << text;
  out.close();
  CHECK_THROWS_AS(load_weights(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("hand-written minimal weight file parses with expected dimensions") {
  const std::string path = "test_weights_minimal.json";
  std::ofstream out(path);
  out << R"({
    "layers": [{
      "n_in": 1, "n_hid": 1,
      "W_f": [[0.1]], "W_i": [[0.2]], "W_c": [[0.3]], "W_o": [[0.4]],
      "U_f": [[0.5]], "U_i": [[0.6]], "U_c": [[0.7]], "U_o": [[0.8]],
      "b_f": [0.0], "b_i": [0.0], "b_c": [0.0], "b_o": [0.0]
    }],
    "head": {"W": [[2.0]], "b": [0.5]},
    "tau": 0
  })";
  out.close();
  const LstmNetwork net = load_weights(path);
  CHECK(net.layers.size() == 1);
  CHECK(net.n_in() == 1);
  CHECK(net.n_out() == 1);
  CHECK(net.layers[0].w_c(0, 0) == 0.3);
  std::filesystem::remove(path);
}

TEST_CASE("malformed weight file raises ParseError") {
  const std::string path = "test_weights_malformed.json";
  std::ofstream out(path);
  out << "{ not json";
  out.close();
  CHECK_THROWS_AS(load_weights(path), ParseError);
  std::filesystem::remove(path);
}
