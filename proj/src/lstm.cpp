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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace klens {

namespace {

using json = nlohmann::json;

Vec sigmoid(const Vec& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Vec tanh_vec(const Vec& z) { return z.array().tanh().matrix(); }

}  // namespace

void LstmLayerWeights::validate() const {
  const Eigen::Index nh = w_f.rows();
  const Eigen::Index ni = w_f.cols();
  const Mat* ws[] = {&w_f, &w_i, &w_c, &w_o};
  const Mat* us[] = {&u_f, &u_i, &u_c, &u_o};
  const Vec* bs[] = {&b_f, &b_i, &b_c, &b_o};
  for (const Mat* w : ws) {
    if (w->rows() != nh || w->cols() != ni) throw InvalidInput("layer: W shape mismatch");
    require_finite(*w, "layer W");
  }
  for (const Mat* u : us) {
    if (u->rows() != nh || u->cols() != nh) throw InvalidInput("layer: U shape mismatch");
    require_finite(*u, "layer U");
  }
  for (const Vec* b : bs) {
    if (b->size() != nh) throw InvalidInput("layer: bias size mismatch");
    if (!b->allFinite()) throw InvalidInput("layer: non-finite bias");
  }
}

Eigen::Index LstmNetwork::state_dim() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += 2 * l.n_hid();
  return n;
}

void LstmNetwork::validate() const {
  if (layers.empty()) throw InvalidInput("network: no layers");
  for (std::size_t n = 0; n < layers.size(); ++n) {
    layers[n].validate();
    if (n > 0 && layers[n].n_in() != layers[n - 1].n_hid()) {
      throw InvalidInput("network: layer input size must equal previous hidden size");
    }
  }
  if (head.w.cols() != layers.back().n_hid()) {
    throw InvalidInput("network: head width must match top hidden size");
  }
  if (head.b.size() != head.w.rows()) throw InvalidInput("network: head bias size");
  if (tau < 0) throw InvalidInput("network: tau must be >= 0");
}

LstmState zero_state(const LstmNetwork& net) {
  LstmState s;
  s.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    s.push_back({Vec::Zero(l.n_hid()), Vec::Zero(l.n_hid())});
  }
  return s;
}

LayerState cell_step(const LstmLayerWeights& w, const LayerState& prev, const Vec& x) {
  if (x.size() != w.n_in() || prev.c.size() != w.n_hid() || prev.h.size() != w.n_hid()) {
    throw InvalidInput("cell_step: dimension mismatch");
  }
  const Vec f = sigmoid(w.w_f * x + w.u_f * prev.h + w.b_f);
  const Vec i = sigmoid(w.w_i * x + w.u_i * prev.h + w.b_i);
  const Vec g = tanh_vec(w.w_c * x + w.u_c * prev.h + w.b_c);
  const Vec o = sigmoid(w.w_o * x + w.u_o * prev.h + w.b_o);
  LayerState out;
  out.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  out.h = o.cwiseProduct(tanh_vec(out.c));
  return out;
}

Vec Trajectory::concat_state(Eigen::Index t) const {
  Eigen::Index n = 0;
  for (const auto& ls : states[t]) n += 2 * ls.c.size();
  Vec s(n);
  Eigen::Index at = 0;
  for (const auto& ls : states[t]) {
    s.segment(at, ls.c.size()) = ls.c;
    at += ls.c.size();
    s.segment(at, ls.h.size()) = ls.h;
    at += ls.h.size();
  }
  return s;
}

const Vec& Trajectory::top_hidden(Eigen::Index t) const { return states[t].back().h; }

Trajectory forward(const LstmNetwork& net, const std::vector<Vec>& x_seq,
                   const LstmState* s0) {
  if (x_seq.empty()) throw InvalidInput("forward: empty input sequence");
  net.validate();
  LstmState state = s0 ? *s0 : zero_state(net);
  if (state.size() != net.layers.size()) throw InvalidInput("forward: bad initial state");

  Trajectory traj;
  traj.inputs = x_seq;
  traj.states.reserve(x_seq.size());
  traj.outputs.reserve(x_seq.size());
  for (const Vec& x : x_seq) {
    const Vec* layer_in = &x;
    for (std::size_t n = 0; n < net.layers.size(); ++n) {
      state[n] = cell_step(net.layers[n], state[n], *layer_in);
      layer_in = &state[n].h;
    }
    traj.states.push_back(state);
    traj.outputs.push_back(net.head.w * state.back().h + net.head.b);
  }
  return traj;
}

Vec prediction_from_trajectory(const LstmNetwork& net, const Trajectory& traj) {
  const Eigen::Index window = net.tau + 1;
  const Eigen::Index len = traj.length();
  if (len < window) throw InvalidInput("prediction window longer than sequence");
  Vec q(window * net.n_out());
  for (Eigen::Index k = 0; k < window; ++k) {
    q.segment(k * net.n_out(), net.n_out()) = traj.outputs[len - window + k];
  }
  return q;
}

Vec predict_window(const LstmNetwork& net, const std::vector<Vec>& x_seq) {
  return prediction_from_trajectory(net, forward(net, x_seq));
}

std::vector<SnapshotSet> harvest(const LstmNetwork& net,
                                 const std::vector<std::vector<Vec>>& dataset) {
  if (dataset.empty()) throw InvalidInput("harvest: empty dataset");
  net.validate();

  Eigen::Index total = 0;
  for (const auto& seq : dataset) {
    if (seq.empty()) throw InvalidInput("harvest: empty sequence");
    total += static_cast<Eigen::Index>(seq.size());
  }

  const std::size_t n_layers = net.layers.size();
  std::vector<SnapshotSet> out(n_layers);
  for (std::size_t n = 0; n < n_layers; ++n) {
    const Eigen::Index dim = 2 * net.layers[n].n_hid();
    out[n].s = Mat::Zero(dim, total);
    out[n].xi = Mat::Zero(dim, total);
    out[n].x = Mat::Zero(net.layers[n].n_in(), total);
  }

  Eigen::Index col = 0;
  for (const auto& seq : dataset) {
    const Trajectory traj = forward(net, seq);
    for (Eigen::Index t = 0; t < traj.length(); ++t) {
      for (std::size_t n = 0; n < n_layers; ++n) {
        const Eigen::Index nh = net.layers[n].n_hid();
        Vec prev(2 * nh);
        if (t == 0) {
          prev.setZero();
        } else {
          prev << traj.states[t - 1][n].c, traj.states[t - 1][n].h;
        }
        Vec next(2 * nh);
        next << traj.states[t][n].c, traj.states[t][n].h;
        out[n].s.col(col) = prev;
        out[n].xi.col(col) = next;
        out[n].x.col(col) = (n == 0) ? seq[t] : traj.states[t][n - 1].h;
      }
      ++col;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training: full-sequence BPTT with Adam.

namespace {

struct CellCache {
  Vec x, c_prev, h_prev;
  Vec f, i, g, o, c, h, tanh_c;
};

struct ForwardCache {
  // [t][layer]
  std::vector<std::vector<CellCache>> cells;
  std::vector<Vec> outputs;
};

ForwardCache forward_cached(const LstmNetwork& net, const std::vector<Vec>& x_seq) {
  ForwardCache cache;
  cache.cells.resize(x_seq.size());
  cache.outputs.reserve(x_seq.size());
  LstmState state = zero_state(net);
  for (std::size_t t = 0; t < x_seq.size(); ++t) {
    cache.cells[t].resize(net.layers.size());
    const Vec* layer_in = &x_seq[t];
    for (std::size_t n = 0; n < net.layers.size(); ++n) {
      const auto& w = net.layers[n];
      CellCache& cc = cache.cells[t][n];
      cc.x = *layer_in;
      cc.c_prev = state[n].c;
      cc.h_prev = state[n].h;
      cc.f = sigmoid(w.w_f * cc.x + w.u_f * cc.h_prev + w.b_f);
      cc.i = sigmoid(w.w_i * cc.x + w.u_i * cc.h_prev + w.b_i);
      cc.g = tanh_vec(w.w_c * cc.x + w.u_c * cc.h_prev + w.b_c);
      cc.o = sigmoid(w.w_o * cc.x + w.u_o * cc.h_prev + w.b_o);
      cc.c = cc.f.cwiseProduct(cc.c_prev) + cc.i.cwiseProduct(cc.g);
      cc.tanh_c = tanh_vec(cc.c);
      cc.h = cc.o.cwiseProduct(cc.tanh_c);
      state[n].c = cc.c;
      state[n].h = cc.h;
      layer_in = &state[n].h;
    }
    cache.outputs.push_back(net.head.w * state.back().h + net.head.b);
  }
  return cache;
}

LossGradients zero_gradients(const LstmNetwork& net) {
  LossGradients g;
  g.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    LstmLayerWeights z;
    z.w_f = Mat::Zero(l.n_hid(), l.n_in());
    z.w_i = z.w_f;
    z.w_c = z.w_f;
    z.w_o = z.w_f;
    z.u_f = Mat::Zero(l.n_hid(), l.n_hid());
    z.u_i = z.u_f;
    z.u_c = z.u_f;
    z.u_o = z.u_f;
    z.b_f = Vec::Zero(l.n_hid());
    z.b_i = z.b_f;
    z.b_c = z.b_f;
    z.b_o = z.b_f;
    g.layers.push_back(std::move(z));
  }
  g.head.w = Mat::Zero(net.head.w.rows(), net.head.w.cols());
  g.head.b = Vec::Zero(net.head.b.size());
  return g;
}

template <typename Net, typename F>
void visit_params(Net& net, F&& f) {
  for (auto& l : net.layers) {
    f(l.w_f);
    f(l.w_i);
    f(l.w_c);
    f(l.w_o);
    f(l.u_f);
    f(l.u_i);
    f(l.u_c);
    f(l.u_o);
    f(l.b_f);
    f(l.b_i);
    f(l.b_c);
    f(l.b_o);
  }
  f(net.head.w);
  f(net.head.b);
}

// Accumulates gradients of the window MSE into g; returns the loss.
double backward_window(const LstmNetwork& net, const TrainWindow& window,
                       LossGradients& g) {
  const Eigen::Index n_out = net.n_out();
  const Eigen::Index win = net.tau + 1;
  const Eigen::Index len = static_cast<Eigen::Index>(window.x.size());
  if (len < win) throw InvalidInput("train: sequence shorter than tau+1");
  if (window.y.size() != win * n_out) throw InvalidInput("train: target size mismatch");

  const ForwardCache cache = forward_cached(net, window.x);

  const double inv_size = 1.0 / static_cast<double>(window.y.size());
  double loss = 0.0;

  const std::size_t n_layers = net.layers.size();
  std::vector<Vec> dh_next(n_layers), dc_next(n_layers);
  for (std::size_t n = 0; n < n_layers; ++n) {
    dh_next[n] = Vec::Zero(net.layers[n].n_hid());
    dc_next[n] = Vec::Zero(net.layers[n].n_hid());
  }

  for (Eigen::Index t = len - 1; t >= 0; --t) {
    Vec from_above;  // d(loss)/d(input of the layer above) at this step
    for (std::size_t n = n_layers; n-- > 0;) {
      const CellCache& cc = cache.cells[t][n];
      Vec dh = dh_next[n];
      if (n + 1 == n_layers) {
        const Eigen::Index k = t - (len - win);
        if (k >= 0) {
          const Vec err =
              cache.outputs[t] - window.y.segment(k * n_out, n_out);
          loss += err.squaredNorm() * inv_size;
          const Vec dy = 2.0 * inv_size * err;
          g.head.w += dy * cc.h.transpose();
          g.head.b += dy;
          dh += net.head.w.transpose() * dy;
        }
      } else {
        dh += from_above;
      }

      const Vec dzo =
          dh.cwiseProduct(cc.tanh_c).cwiseProduct(cc.o).cwiseProduct(Vec::Ones(cc.o.size()) - cc.o);
      const Vec dc = dc_next[n] +
                     dh.cwiseProduct(cc.o).cwiseProduct(
                         Vec::Ones(cc.tanh_c.size()) - cc.tanh_c.cwiseProduct(cc.tanh_c));
      const Vec dzf = dc.cwiseProduct(cc.c_prev)
                          .cwiseProduct(cc.f)
                          .cwiseProduct(Vec::Ones(cc.f.size()) - cc.f);
      const Vec dzi = dc.cwiseProduct(cc.g).cwiseProduct(cc.i).cwiseProduct(
          Vec::Ones(cc.i.size()) - cc.i);
      const Vec dzc = dc.cwiseProduct(cc.i).cwiseProduct(
          Vec::Ones(cc.g.size()) - cc.g.cwiseProduct(cc.g));

      auto& gl = g.layers[n];
      gl.w_f += dzf * cc.x.transpose();
      gl.w_i += dzi * cc.x.transpose();
      gl.w_c += dzc * cc.x.transpose();
      gl.w_o += dzo * cc.x.transpose();
      gl.u_f += dzf * cc.h_prev.transpose();
      gl.u_i += dzi * cc.h_prev.transpose();
      gl.u_c += dzc * cc.h_prev.transpose();
      gl.u_o += dzo * cc.h_prev.transpose();
      gl.b_f += dzf;
      gl.b_i += dzi;
      gl.b_c += dzc;
      gl.b_o += dzo;

      const auto& w = net.layers[n];
      dh_next[n] = w.u_f.transpose() * dzf + w.u_i.transpose() * dzi +
                   w.u_c.transpose() * dzc + w.u_o.transpose() * dzo;
      dc_next[n] = dc.cwiseProduct(cc.f);
      if (n > 0) {
        from_above = w.w_f.transpose() * dzf + w.w_i.transpose() * dzi +
                     w.w_c.transpose() * dzc + w.w_o.transpose() * dzo;
      }
    }
  }
  return loss;
}

}  // namespace

double window_loss(const LstmNetwork& net, const TrainWindow& window) {
  const Vec q = predict_window(net, window.x);
  if (q.size() != window.y.size()) throw InvalidInput("window_loss: target size mismatch");
  return (q - window.y).squaredNorm() / static_cast<double>(q.size());
}

LossGradients window_loss_gradients(const LstmNetwork& net, const TrainWindow& window) {
  LossGradients g = zero_gradients(net);
  backward_window(net, window, g);
  return g;
}

TrainReport train(LstmNetwork& net, const std::vector<TrainWindow>& windows,
                  const TrainConfig& config) {
  if (windows.empty()) throw InvalidInput("train: no windows");
  if (config.epochs < 0 || config.batch_size < 1) throw InvalidInput("train: bad config");
  net.validate();

  const std::size_t n_val = std::min(
      windows.size() - 1,
      static_cast<std::size_t>(config.validation_fraction * windows.size()));
  const std::size_t n_train = windows.size() - n_val;

  LossGradients adam_m = zero_gradients(net);
  LossGradients adam_v = zero_gradients(net);
  long adam_t = 0;
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < n_train; at += config.batch_size) {
      const std::size_t stop = std::min(n_train, at + config.batch_size);
      LossGradients g = zero_gradients(net);
      double batch_loss = 0.0;
      for (std::size_t k = at; k < stop; ++k) {
        batch_loss += backward_window(net, windows[order[k]], g);
      }
      const double inv_batch = 1.0 / static_cast<double>(stop - at);
      batch_loss *= inv_batch;
      epoch_loss += batch_loss * static_cast<double>(stop - at);
      if (!std::isfinite(batch_loss)) throw TrainingDiverged("train: loss is not finite");

      double grad_sq = 0.0;
      visit_params(g, [&](auto& p) {
        p *= inv_batch;
        grad_sq += p.squaredNorm();
      });
      const double gnorm = std::sqrt(grad_sq);
      if (config.clip_norm > 0.0 && gnorm > config.clip_norm) {
        const double scale = config.clip_norm / gnorm;
        visit_params(g, [&](auto& p) { p *= scale; });
      }

      ++adam_t;
      const double bc1 = 1.0 - std::pow(beta1, adam_t);
      const double bc2 = 1.0 - std::pow(beta2, adam_t);
      // One fused pass over (param, grad, m, v) per tensor.
      std::size_t li = 0;
      auto adam_step = [&](auto& p, auto& gr, auto& m, auto& v) {
        m = beta1 * m + (1.0 - beta1) * gr;
        v.array() = beta2 * v.array() + (1.0 - beta2) * gr.array().square();
        p.array() -= config.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + adam_eps);
      };
      for (li = 0; li < net.layers.size(); ++li) {
        auto& L = net.layers[li];
        auto& G = g.layers[li];
        auto& M = adam_m.layers[li];
        auto& V = adam_v.layers[li];
        adam_step(L.w_f, G.w_f, M.w_f, V.w_f);
        adam_step(L.w_i, G.w_i, M.w_i, V.w_i);
        adam_step(L.w_c, G.w_c, M.w_c, V.w_c);
        adam_step(L.w_o, G.w_o, M.w_o, V.w_o);
        adam_step(L.u_f, G.u_f, M.u_f, V.u_f);
        adam_step(L.u_i, G.u_i, M.u_i, V.u_i);
        adam_step(L.u_c, G.u_c, M.u_c, V.u_c);
        adam_step(L.u_o, G.u_o, M.u_o, V.u_o);
        adam_step(L.b_f, G.b_f, M.b_f, V.b_f);
        adam_step(L.b_i, G.b_i, M.b_i, V.b_i);
        adam_step(L.b_c, G.b_c, M.b_c, V.b_c);
        adam_step(L.b_o, G.b_o, M.b_o, V.b_o);
      }
      adam_step(net.head.w, g.head.w, adam_m.head.w, adam_v.head.w);
      adam_step(net.head.b, g.head.b, adam_m.head.b, adam_v.head.b);
    }
    report.train_mse.push_back(epoch_loss / static_cast<double>(n_train));
  }

  report.final_train_mse = report.train_mse.empty() ? 0.0 : report.train_mse.back();
  double val = 0.0;
  for (std::size_t k = n_train; k < windows.size(); ++k) {
    val += window_loss(net, windows[k]);
  }
  report.final_val_mse = n_val > 0 ? val / static_cast<double>(n_val) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Weight file I/O.

namespace {

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Mat mat_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                  const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError("weight file: field '" + field + "' expects " +
                     std::to_string(rows) + " rows");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("weight file: field '" + field + "' row " + std::to_string(i) +
                       " expects " + std::to_string(cols) + " columns");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (!row[k].is_number()) {
        throw ParseError("weight file: field '" + field + "' has a non-numeric entry");
      }
      m(i, k) = row[k].get<double>();
    }
  }
  return m;
}

Vec vec_from_json(const json& j, Eigen::Index size, const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ParseError("weight file: field '" + field + "' expects length " +
                     std::to_string(size));
  }
  Vec v(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    if (!j[i].is_number()) {
      throw ParseError("weight file: field '" + field + "' has a non-numeric entry");
    }
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

void save_weights(const LstmNetwork& net, const std::string& path) {
  net.validate();
  json doc;
  doc["layers"] = json::array();
  for (const auto& l : net.layers) {
    json jl;
    jl["n_in"] = l.n_in();
    jl["n_hid"] = l.n_hid();
    jl["W_f"] = mat_to_json(l.w_f);
    jl["W_i"] = mat_to_json(l.w_i);
    jl["W_c"] = mat_to_json(l.w_c);
    jl["W_o"] = mat_to_json(l.w_o);
    jl["U_f"] = mat_to_json(l.u_f);
    jl["U_i"] = mat_to_json(l.u_i);
    jl["U_c"] = mat_to_json(l.u_c);
    jl["U_o"] = mat_to_json(l.u_o);
    jl["b_f"] = vec_to_json(l.b_f);
    jl["b_i"] = vec_to_json(l.b_i);
    jl["b_c"] = vec_to_json(l.b_c);
    jl["b_o"] = vec_to_json(l.b_o);
    doc["layers"].push_back(std::move(jl));
  }
  doc["head"] = {{"W", mat_to_json(net.head.w)}, {"b", vec_to_json(net.head.b)}};
  doc["tau"] = net.tau;

  std::ofstream out(path);
  if (!out) throw ParseError("save_weights: cannot open " + path);
  out << doc.dump(2) << "\n";
}

LstmNetwork load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_weights: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("load_weights: ") + e.what());
  }

  if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty()) {
    throw ParseError("weight file: missing or empty 'layers'");
  }
  LstmNetwork net;
  Eigen::Index prev_hid = -1;
  for (std::size_t n = 0; n < doc["layers"].size(); ++n) {
    const json& jl = doc["layers"][n];
    if (!jl.contains("n_in") || !jl.contains("n_hid")) {
      throw ParseError("weight file: layer " + std::to_string(n) + " missing dims");
    }
    const Eigen::Index ni = jl["n_in"].get<Eigen::Index>();
    const Eigen::Index nh = jl["n_hid"].get<Eigen::Index>();
    if (ni < 1 || nh < 1) {
      throw ParseError("weight file: layer " + std::to_string(n) + " has bad dims");
    }
    if (n > 0 && ni != prev_hid) {
      throw ParseError("weight file: layer " + std::to_string(n) +
                       " n_in does not chain with previous n_hid");
    }
    prev_hid = nh;
    LstmLayerWeights l;
    const std::string tag = "layers[" + std::to_string(n) + "].";
    l.w_f = mat_from_json(jl.at("W_f"), nh, ni, tag + "W_f");
    l.w_i = mat_from_json(jl.at("W_i"), nh, ni, tag + "W_i");
    l.w_c = mat_from_json(jl.at("W_c"), nh, ni, tag + "W_c");
    l.w_o = mat_from_json(jl.at("W_o"), nh, ni, tag + "W_o");
    l.u_f = mat_from_json(jl.at("U_f"), nh, nh, tag + "U_f");
    l.u_i = mat_from_json(jl.at("U_i"), nh, nh, tag + "U_i");
    l.u_c = mat_from_json(jl.at("U_c"), nh, nh, tag + "U_c");
    l.u_o = mat_from_json(jl.at("U_o"), nh, nh, tag + "U_o");
    l.b_f = vec_from_json(jl.at("b_f"), nh, tag + "b_f");
    l.b_i = vec_from_json(jl.at("b_i"), nh, tag + "b_i");
    l.b_c = vec_from_json(jl.at("b_c"), nh, tag + "b_c");
    l.b_o = vec_from_json(jl.at("b_o"), nh, tag + "b_o");
    net.layers.push_back(std::move(l));
  }

  if (!doc.contains("head") || !doc["head"].contains("W") || !doc["head"].contains("b")) {
    throw ParseError("weight file: missing 'head'");
  }
  const json& jw = doc["head"]["W"];
  if (!jw.is_array() || jw.empty()) throw ParseError("weight file: head.W must be 2-d");
  const Eigen::Index n_out = static_cast<Eigen::Index>(jw.size());
  net.head.w = mat_from_json(jw, n_out, prev_hid, "head.W");
  net.head.b = vec_from_json(doc["head"]["b"], n_out, "head.b");
  net.tau = doc.value("tau", 0);

  try {
    net.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("weight file: ") + e.what());
  }
  return net;
}

LstmNetwork random_network(const std::vector<Eigen::Index>& hidden_sizes,
                           Eigen::Index n_in, Eigen::Index n_out, int tau,
                           std::uint64_t seed) {
  if (hidden_sizes.empty()) throw InvalidInput("random_network: no layers");
  std::mt19937_64 rng(seed);
  LstmNetwork net;
  net.tau = tau;
  Eigen::Index in = n_in;
  for (const Eigen::Index nh : hidden_sizes) {
    const double r = 1.0 / std::sqrt(static_cast<double>(nh));
    std::uniform_real_distribution<double> u(-r, r);
    auto rmat = [&](Eigen::Index rows, Eigen::Index cols) {
      Mat m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
      return m;
    };
    LstmLayerWeights l;
    l.w_f = rmat(nh, in);
    l.w_i = rmat(nh, in);
    l.w_c = rmat(nh, in);
    l.w_o = rmat(nh, in);
    l.u_f = rmat(nh, nh);
    l.u_i = rmat(nh, nh);
    l.u_c = rmat(nh, nh);
    l.u_o = rmat(nh, nh);
    l.b_f = Vec::Zero(nh);
    l.b_i = Vec::Zero(nh);
    l.b_c = Vec::Zero(nh);
    l.b_o = Vec::Zero(nh);
    net.layers.push_back(std::move(l));
    in = nh;
  }
  const double rh = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uh(-rh, rh);
  net.head.w.resize(n_out, in);
  for (Eigen::Index i = 0; i < n_out; ++i)
    for (Eigen::Index j = 0; j < in; ++j) net.head.w(i, j) = uh(rng);
  net.head.b = Vec::Zero(n_out);
  return net;
}

}  // namespace klens
