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

#ifndef KLENS_LSTM_HPP
#define KLENS_LSTM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "klens/dmdc.hpp"
#include "klens/numerics.hpp"

namespace klens {

/// One layer of gate weights: W_* act on the layer input, U_* on the previous
/// hidden state, b_* are biases. Gate order is forget, input, candidate, output.
struct LstmLayerWeights {
  Mat w_f, w_i, w_c, w_o;  // n_hid x n_in
  Mat u_f, u_i, u_c, u_o;  // n_hid x n_hid
  Vec b_f, b_i, b_c, b_o;  // n_hid

  Eigen::Index n_in() const { return w_f.cols(); }
  Eigen::Index n_hid() const { return w_f.rows(); }
  void validate() const;
};

/// Linear output head applied time-wise to top-layer hidden states.
struct LstmHead {
  Mat w;  // n_out x n_hid_top
  Vec b;  // n_out
};

struct LstmNetwork {
  std::vector<LstmLayerWeights> layers;
  LstmHead head;
  int tau = 0;  // the head is applied to the last tau+1 hidden states

  Eigen::Index n_in() const { return layers.front().n_in(); }
  Eigen::Index n_out() const { return head.w.rows(); }
  Eigen::Index n_layers() const { return static_cast<Eigen::Index>(layers.size()); }
  /// Total concatenated [c; h] dimension across layers.
  Eigen::Index state_dim() const;
  void validate() const;
};

struct LayerState {
  Vec c;
  Vec h;
};

using LstmState = std::vector<LayerState>;

LstmState zero_state(const LstmNetwork& net);

/// One application of the cell equations (sigmoid gates, tanh candidate).
LayerState cell_step(const LstmLayerWeights& w, const LayerState& prev, const Vec& x);

struct Trajectory {
  std::vector<Vec> inputs;
  // states[t][layer] is the layer state after consuming inputs[t].
  std::vector<LstmState> states;
  // Time-wise head outputs, one per step.
  std::vector<Vec> outputs;

  /// Concatenated [c; h] over layers at step t.
  Vec concat_state(Eigen::Index t) const;
  /// Top-layer hidden state at step t.
  const Vec& top_hidden(Eigen::Index t) const;
  Eigen::Index length() const { return static_cast<Eigen::Index>(inputs.size()); }
};

Trajectory forward(const LstmNetwork& net, const std::vector<Vec>& x_seq,
                   const LstmState* s0 = nullptr);

/// Stacked last tau+1 time-wise outputs: the prediction window.
Vec predict_window(const LstmNetwork& net, const std::vector<Vec>& x_seq);
Vec prediction_from_trajectory(const LstmNetwork& net, const Trajectory& traj);

/// Per-layer snapshot harvesting over a dataset of input sequences. Layer 1
/// sees the raw inputs, layer n >= 2 sees layer n-1 hidden states; sequences
/// never pair across their boundaries. Initial state is zero.
std::vector<SnapshotSet> harvest(const LstmNetwork& net,
                                 const std::vector<std::vector<Vec>>& dataset);

struct TrainWindow {
  std::vector<Vec> x;  // input sequence
  Vec y;               // stacked targets for the last tau+1 steps
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-2;
  int batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
};

struct TrainReport {
  std::vector<double> train_mse;  // per epoch
  double final_train_mse = 0.0;
  double final_val_mse = 0.0;
};

/// Full-sequence BPTT with Adam updates. Diverging loss -> TrainingDiverged.
TrainReport train(LstmNetwork& net, const std::vector<TrainWindow>& windows,
                  const TrainConfig& config);

/// Gradients of the window MSE w.r.t. every parameter, flattened in the same
/// order as the internal parameter vector. Exposed for gradient checking.
struct LossGradients {
  std::vector<LstmLayerWeights> layers;
  LstmHead head;
};
double window_loss(const LstmNetwork& net, const TrainWindow& window);
LossGradients window_loss_gradients(const LstmNetwork& net, const TrainWindow& window);

LstmNetwork load_weights(const std::string& path);
void save_weights(const LstmNetwork& net, const std::string& path);

/// Stability-biased generator: weights uniform in [-r, r] with r = 1/sqrt(n_hid),
/// which keeps identified surrogates comfortably inside the unit circle.
LstmNetwork random_network(const std::vector<Eigen::Index>& hidden_sizes,
                           Eigen::Index n_in, Eigen::Index n_out, int tau,
                           std::uint64_t seed);

}  // namespace klens

#endif  // KLENS_LSTM_HPP
