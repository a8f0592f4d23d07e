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

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "klens/lstm.hpp"

namespace klens {

namespace {
using json = nlohmann::json;
}

void SnapshotSet::validate() const {
  if (s.cols() == 0) throw InvalidInput("snapshots: empty set");
  if (xi.rows() != s.rows() || xi.cols() != s.cols() || x.cols() != s.cols()) {
    throw InvalidInput("snapshots: column counts must match across S, Xi, X");
  }
  require_finite(s, "snapshots S");
  require_finite(xi, "snapshots Xi");
  require_finite(x, "snapshots X");
}

SnapshotSet make_snapshots(const Mat& s, const Mat& xi, const Mat& x) {
  SnapshotSet snap{s, xi, x};
  snap.validate();
  return snap;
}

TruncationPolicy TruncationPolicy::energy_fraction(double e) {
  if (e <= 0.0 || e > 1.0) throw InvalidInput("truncation: energy must be in (0, 1]");
  TruncationPolicy p;
  p.kind = Kind::Energy;
  p.energy = e;
  return p;
}

TruncationPolicy TruncationPolicy::ranks(Eigen::Index p_, Eigen::Index r_) {
  if (p_ < 1 || r_ < 1) throw InvalidInput("truncation: ranks must be >= 1");
  TruncationPolicy p;
  p.kind = Kind::Ranks;
  p.p = p_;
  p.r = r_;
  return p;
}

namespace {

Eigen::Index energy_rank(const Vec& s, double energy) {
  const double total = s.squaredNorm();
  if (total <= kAbsFloor) return 1;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    acc += s(k) * s(k);
    if (acc >= energy * total) return k + 1;
  }
  return s.size();
}

double fit_residual(const SnapshotSet& snap, const Mat& a, const Mat& b) {
  const double denom = std::max(snap.xi.norm(), kAbsFloor);
  return (snap.xi - a * snap.s - b * snap.x).norm() / denom;
}

}  // namespace

LayerSurrogate fit_dmdc(const SnapshotSet& snap, const FitOptions& opts) {
  snap.validate();
  const Eigen::Index n = snap.state_dim();
  const Eigen::Index m = snap.input_dim();
  if (snap.count() < 2) throw InvalidInput("fit_dmdc: need at least two snapshots");

  Mat omega(n + m, snap.count());
  omega.topRows(n) = snap.s;
  omega.bottomRows(m) = snap.x;

  LayerSurrogate out;
  out.tikhonov = opts.tikhonov;

  if (opts.truncation.kind == TruncationPolicy::Kind::None) {
    Mat ab;
    if (opts.tikhonov > 0.0) {
      // Ridge form: [A B] = Xi Omega^T (Omega Omega^T + lambda I)^-1.
      const Mat gram =
          omega * omega.transpose() + opts.tikhonov * Mat::Identity(n + m, n + m);
      ab = gram.ldlt().solve(omega * snap.xi.transpose()).transpose();
    } else {
      const SvdResult f = svd(omega);
      const double cutoff = std::max(
          static_cast<double>(std::max(omega.rows(), omega.cols())) *
              std::numeric_limits<double>::epsilon() * f.s(0),
          kAbsFloor);
      if (f.s(f.s.size() - 1) <= cutoff) {
        std::cerr << "fit_dmdc: rank-deficient snapshots, using pseudoinverse solution\n";
      }
      ab = snap.xi * pinv(omega);
    }
    out.a = ab.leftCols(n);
    out.b = ab.rightCols(m);
    out.training_residual = fit_residual(snap, out.a, out.b);
    return out;
  }

  // Truncated path: project through the low-rank bases and lift back.
  const SvdResult fo = svd(omega);
  const SvdResult fx = svd(snap.xi);
  Eigen::Index p, r;
  if (opts.truncation.kind == TruncationPolicy::Kind::Energy) {
    p = energy_rank(fo.s, opts.truncation.energy);
    r = energy_rank(fx.s, opts.truncation.energy);
  } else {
    p = std::min<Eigen::Index>(opts.truncation.p, fo.s.size());
    r = std::min<Eigen::Index>(opts.truncation.r, fx.s.size());
  }

  const Mat u_tilde = fo.u.leftCols(p);
  const Vec s_tilde = fo.s.head(p);
  const Mat v_tilde = fo.v.leftCols(p);
  const Mat u_hat = fx.u.leftCols(r);

  for (Eigen::Index k = 0; k < p; ++k) {
    if (s_tilde(k) <= kAbsFloor) {
      throw NumericalFailure("fit_dmdc: truncation rank exceeds snapshot rank");
    }
  }

  const Mat u1 = u_tilde.topRows(n);     // n x p
  const Mat u2 = u_tilde.bottomRows(m);  // m x p
  const Mat core = snap.xi * v_tilde * s_tilde.cwiseInverse().asDiagonal();  // n x p

  const Mat a_tilde = u_hat.transpose() * core * u1.transpose() * u_hat;  // r x r
  const Mat b_tilde = u_hat.transpose() * core * u2.transpose();          // r x m

  out.a = u_hat * a_tilde * u_hat.transpose();
  out.b = u_hat * b_tilde;
  out.rank_p = p;
  out.rank_r = r;
  out.training_residual = fit_residual(snap, out.a, out.b);
  return out;
}

DmdcModes dmdc_modes(const LayerSurrogate& layer, const SnapshotSet& snap) {
  snap.validate();
  const Eigen::Index n = snap.state_dim();
  const Eigen::Index m = snap.input_dim();

  Mat omega(n + m, snap.count());
  omega.topRows(n) = snap.s;
  omega.bottomRows(m) = snap.x;

  // Recompute the bases at the layer's ranks (full ranks for the exact path).
  const SvdResult fo = svd(omega);
  const SvdResult fx = svd(snap.xi);
  const Eigen::Index p = layer.rank_p > 0 ? layer.rank_p : fo.s.size();
  const Eigen::Index r = layer.rank_r > 0 ? layer.rank_r : fx.s.size();

  Vec s_tilde = fo.s.head(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    s_tilde(k) = s_tilde(k) > kAbsFloor ? s_tilde(k) : kAbsFloor;
  }
  const Mat u1 = fo.u.leftCols(p).topRows(n);
  const Mat v_tilde = fo.v.leftCols(p);
  const Mat u_hat = fx.u.leftCols(r);
  const Mat core = snap.xi * v_tilde * s_tilde.cwiseInverse().asDiagonal();
  const Mat a_tilde = u_hat.transpose() * core * u1.transpose() * u_hat;

  Eigen::EigenSolver<Mat> dec(a_tilde);
  if (dec.info() != Eigen::Success) {
    throw NumericalFailure("dmdc_modes: eigensolver failed");
  }
  CVec lambda = dec.eigenvalues();
  CMat w = dec.eigenvectors();

  std::vector<Eigen::Index> order(lambda.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return std::abs(lambda(i)) > std::abs(lambda(j));
  });

  DmdcModes out;
  out.eigenvalues.resize(lambda.size());
  CMat w_sorted(w.rows(), w.cols());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    out.eigenvalues(k) = lambda(order[k]);
    w_sorted.col(k) = w.col(order[k]);
  }
  out.modes = core.cast<std::complex<double>>() *
              (u1.transpose() * u_hat).cast<std::complex<double>>() * w_sorted;
  return out;
}

Mat LinearSurrogate::layer_hidden_selector(Eigen::Index n_hid) {
  Mat c = Mat::Zero(n_hid, 2 * n_hid);
  c.rightCols(n_hid) = Mat::Identity(n_hid, n_hid);
  return c;
}

LinearSurrogate assemble(const std::vector<LayerSurrogate>& layers) {
  if (layers.empty()) throw InvalidInput("assemble: no layers");
  Eigen::Index n_total = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Eigen::Index dim = layers[k].a.rows();
    if (layers[k].a.cols() != dim || layers[k].b.rows() != dim || dim % 2 != 0) {
      throw InvalidInput("assemble: layer operator shapes inconsistent");
    }
    if (k > 0 && layers[k].b.cols() != layers[k - 1].a.rows() / 2) {
      throw InvalidInput("assemble: layer input width must chain with previous hidden size");
    }
    n_total += dim;
  }

  LinearSurrogate sur;
  sur.layers = layers;
  sur.a = Mat::Zero(n_total, n_total);
  sur.b = Mat::Zero(n_total, layers.front().b.cols());

  Eigen::Index at = 0;
  Eigen::Index prev_at = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Eigen::Index dim = layers[k].a.rows();
    sur.a.block(at, at, dim, dim) = layers[k].a;
    if (k == 0) {
      sur.b.topRows(dim) = layers[k].b;
    } else {
      const Eigen::Index prev_dim = layers[k - 1].a.rows();
      const Mat c_prev = LinearSurrogate::layer_hidden_selector(prev_dim / 2);
      sur.a.block(at, prev_at, dim, prev_dim) = layers[k].b * c_prev;
    }
    prev_at = at;
    at += dim;
  }

  const Eigen::Index top_hid = layers.back().a.rows() / 2;
  sur.c = Mat::Zero(top_hid, n_total);
  sur.c.rightCols(top_hid) = Mat::Identity(top_hid, top_hid);
  return sur;
}

Vec surrogate_step(const LinearSurrogate& sur, const Vec& s_prev, const Vec& x) {
  if (s_prev.size() != sur.state_dim() || x.size() != sur.input_dim()) {
    throw InvalidInput("surrogate_step: dimension mismatch");
  }
  return sur.a * s_prev + sur.b * x;
}

std::vector<Vec> surrogate_rollout(const LinearSurrogate& sur,
                                   const std::vector<Vec>& x_seq, const Vec& s0) {
  std::vector<Vec> states;
  states.reserve(x_seq.size());
  Vec s = s0;
  for (const Vec& x : x_seq) {
    s = surrogate_step(sur, s, x);
    states.push_back(s);
  }
  return states;
}

namespace {

// sqrt(sum ||err||^2 / sum ||truth||^2), with 0/0 -> 0.
double relative_rms(double err_sq, double truth_sq) {
  if (truth_sq <= kAbsFloor) return err_sq <= kAbsFloor ? 0.0 : 1.0;
  return std::sqrt(err_sq / truth_sq);
}

}  // namespace

FidelityReport fidelity_report(const LinearSurrogate& sur, const LstmNetwork& net,
                               const std::vector<std::vector<Vec>>& heldout) {
  if (heldout.empty()) throw InvalidInput("fidelity_report: empty heldout set");
  const std::size_t n_layers = net.layers.size();
  if (sur.layers.size() != n_layers) {
    throw InvalidInput("fidelity_report: layer count mismatch");
  }

  FidelityReport rep;
  rep.tikhonov = sur.layers.front().tikhonov;
  rep.per_layer_one_step.assign(n_layers, 0.0);
  rep.per_layer_free_run.assign(n_layers, 0.0);

  double one_err = 0.0, one_truth = 0.0;
  double free_err = 0.0, free_truth = 0.0;
  double one_top_err = 0.0, free_top_err = 0.0, top_truth = 0.0;
  std::vector<double> layer_one_err(n_layers, 0.0), layer_one_truth(n_layers, 0.0);
  std::vector<double> layer_free_err(n_layers, 0.0), layer_free_truth(n_layers, 0.0);

  for (const auto& seq : heldout) {
    const Trajectory traj = forward(net, seq);
    const Eigen::Index len = traj.length();

    Vec s_free = Vec::Zero(sur.state_dim());
    Vec s_prev_true = Vec::Zero(sur.state_dim());
    // Per-layer free-run states driven by the true inputs of that layer.
    std::vector<Vec> layer_free(n_layers);
    std::vector<Vec> layer_prev_true(n_layers);
    for (std::size_t nl = 0; nl < n_layers; ++nl) {
      layer_free[nl] = Vec::Zero(2 * net.layers[nl].n_hid());
      layer_prev_true[nl] = Vec::Zero(2 * net.layers[nl].n_hid());
    }

    for (Eigen::Index t = 0; t < len; ++t) {
      const Vec s_true = traj.concat_state(t);
      const Vec one_step = sur.a * s_prev_true + sur.b * seq[t];
      s_free = sur.a * s_free + sur.b * seq[t];

      one_err += (one_step - s_true).squaredNorm();
      free_err += (s_free - s_true).squaredNorm();
      one_truth += s_true.squaredNorm();
      free_truth += s_true.squaredNorm();

      const Vec h_true = traj.top_hidden(t);
      one_top_err += (sur.c * one_step - h_true).squaredNorm();
      free_top_err += (sur.c * s_free - h_true).squaredNorm();
      top_truth += h_true.squaredNorm();

      Eigen::Index at = 0;
      for (std::size_t nl = 0; nl < n_layers; ++nl) {
        const Eigen::Index dim = 2 * net.layers[nl].n_hid();
        const Vec u = (nl == 0) ? seq[t] : traj.states[t][nl - 1].h;
        const Vec truth = s_true.segment(at, dim);
        const Vec pred_one = sur.layers[nl].a * layer_prev_true[nl] + sur.layers[nl].b * u;
        layer_free[nl] = sur.layers[nl].a * layer_free[nl] + sur.layers[nl].b * u;
        layer_one_err[nl] += (pred_one - truth).squaredNorm();
        layer_free_err[nl] += (layer_free[nl] - truth).squaredNorm();
        layer_one_truth[nl] += truth.squaredNorm();
        layer_free_truth[nl] += truth.squaredNorm();
        layer_prev_true[nl] = truth;
        at += dim;
      }
      s_prev_true = s_true;
    }
  }

  rep.one_step_state = relative_rms(one_err, one_truth);
  rep.free_run_state = relative_rms(free_err, free_truth);
  rep.one_step_top_hidden = relative_rms(one_top_err, top_truth);
  rep.free_run_top_hidden = relative_rms(free_top_err, top_truth);
  for (std::size_t nl = 0; nl < n_layers; ++nl) {
    rep.per_layer_one_step[nl] = relative_rms(layer_one_err[nl], layer_one_truth[nl]);
    rep.per_layer_free_run[nl] = relative_rms(layer_free_err[nl], layer_free_truth[nl]);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Surrogate file I/O.

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

Mat mat_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ParseError("surrogate file: field '" + field + "' must be a 2-d array");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw ParseError("surrogate file: ragged rows in '" + field + "'");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

}  // namespace

void save_surrogate(const LinearSurrogate& sur, const std::string& path) {
  json doc;
  doc["layers"] = json::array();
  for (const auto& l : sur.layers) {
    json jl;
    jl["A"] = mat_to_json(l.a);
    jl["B"] = mat_to_json(l.b);
    jl["rank_p"] = l.rank_p;
    jl["rank_r"] = l.rank_r;
    jl["residual"] = l.training_residual;
    doc["layers"].push_back(std::move(jl));
  }
  doc["A"] = mat_to_json(sur.a);
  doc["B"] = mat_to_json(sur.b);
  doc["C"] = mat_to_json(sur.c);
  json meta;
  meta["tikhonov"] = sur.layers.empty() ? 0.0 : sur.layers.front().tikhonov;
  doc["meta"] = meta;

  std::ofstream out(path);
  if (!out) throw ParseError("save_surrogate: cannot open " + path);
  out << doc.dump(2) << "\n";
}

LinearSurrogate load_surrogate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_surrogate: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("load_surrogate: ") + e.what());
  }
  if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty()) {
    throw ParseError("surrogate file: missing 'layers'");
  }
  std::vector<LayerSurrogate> layers;
  for (std::size_t k = 0; k < doc["layers"].size(); ++k) {
    const json& jl = doc["layers"][k];
    LayerSurrogate l;
    l.a = mat_from_json(jl.at("A"), "layers.A");
    l.b = mat_from_json(jl.at("B"), "layers.B");
    l.rank_p = jl.value("rank_p", -1);
    l.rank_r = jl.value("rank_r", -1);
    l.training_residual = jl.value("residual", 0.0);
    layers.push_back(std::move(l));
  }
  LinearSurrogate sur = assemble(layers);
  // The assembled blocks are derivable from the layers; trust but verify.
  const Mat a_file = mat_from_json(doc.at("A"), "A");
  if (a_file.rows() != sur.a.rows() ||
      (a_file - sur.a).norm() > 1e-9 * std::max(sur.a.norm(), 1.0)) {
    throw ParseError("surrogate file: stored A disagrees with assembled layers");
  }
  return sur;
}

}  // namespace klens
