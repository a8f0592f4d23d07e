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

#include "klens/ge_bound.hpp"

#include <cmath>

#include "klens/lstm.hpp"

namespace klens {

void BoundInputs::validate() const {
  if (loss_lipschitz < 0.0 || g < 0.0 || hinf < 0.0 || alpha < 0.0 || beta < 0.0) {
    throw InvalidInput("bound inputs must be nonnegative");
  }
  if (tau < 0) throw InvalidInput("bound inputs: tau must be >= 0");
}

double BoundInputs::output_gain() const {
  const double window_factor = tight_window ? 1.0 : std::sqrt(static_cast<double>(tau + 1));
  return g * window_factor * hinf;
}

double corollary1_bound(const BoundInputs& b) {
  b.validate();
  return b.loss_lipschitz * (b.beta + b.output_gain() * b.alpha);
}

double mse_bound(const BoundInputs& b, double sqrt_loss_mean) {
  b.validate();
  if (sqrt_loss_mean < 0.0) throw InvalidInput("mse_bound: sqrt_loss_mean must be >= 0");
  const double change = b.beta + b.output_gain() * b.alpha;
  return 2.0 * sqrt_loss_mean * change + change * change;
}

double estimate_G(const LstmNetwork& net) {
  net.validate();
  return sigma_max(net.head.w);
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "abs" || s == "absolute") return LossKind::AbsoluteError;
  if (s == "mse" || s == "squared") return LossKind::SquaredError;
  if (s == "huber") return LossKind::Huber;
  throw InvalidInput("unknown loss kind: " + s);
}

double window_loss_value(LossKind kind, const Vec& y, const Vec& q, double huber_delta) {
  if (y.size() != q.size()) throw InvalidInput("loss: size mismatch");
  const double r = (y - q).norm();
  switch (kind) {
    case LossKind::AbsoluteError:
      return r;
    case LossKind::SquaredError:
      return r * r;
    case LossKind::Huber:
      return r <= huber_delta ? 0.5 * r * r : huber_delta * (r - 0.5 * huber_delta);
  }
  throw InvalidInput("loss: unknown kind");
}

double estimate_L(LossKind kind, double huber_delta) {
  switch (kind) {
    case LossKind::AbsoluteError:
      return 1.0;
    case LossKind::SquaredError:
      throw Unsupported("squared loss is not globally Lipschitz; use mse_bound");
    case LossKind::Huber:
      if (huber_delta <= 0.0) throw InvalidInput("estimate_L: huber delta must be > 0");
      return huber_delta;
  }
  throw InvalidInput("estimate_L: unknown kind");
}

void WindowDataset::validate() const {
  if (x.empty()) throw InvalidInput("window dataset is empty");
  if (x.size() != y.size() || x.size() != start.size()) {
    throw InvalidInput("window dataset: misaligned fields");
  }
}

GEReport empirical_ge(const LstmNetwork& net, const WindowDataset& ws,
                      const ShiftRealization& shift, LossKind loss, TargetMode mode,
                      const BoundInputs& bi, double huber_delta) {
  ws.validate();
  net.validate();

  const Eigen::Index series_len = static_cast<Eigen::Index>(shift.d.size());
  double clean_sum = 0.0;
  double shifted_sum = 0.0;
  double sqrt_loss_sum = 0.0;

  for (std::size_t w = 0; w < ws.size(); ++w) {
    const auto& xs = ws.x[w];
    const Eigen::Index in_len = static_cast<Eigen::Index>(xs.size());
    const Eigen::Index out_len = ws.y[w].size();
    if (ws.start[w] < 0 || ws.start[w] + in_len > series_len) {
      throw InvalidInput("empirical_ge: shift realization shorter than window span");
    }

    std::vector<Vec> shifted_x(xs.size());
    for (Eigen::Index t = 0; t < in_len; ++t) {
      const Vec& dt = shift.d[ws.start[w] + t];
      if (dt.size() != xs[t].size()) {
        throw InvalidInput("empirical_ge: shift dimension mismatch");
      }
      shifted_x[t] = xs[t] + dt;
    }

    Vec y_hat = ws.y[w];
    if (mode == TargetMode::Autoregressive) {
      if (ws.start[w] + in_len + out_len > series_len) {
        throw InvalidInput("empirical_ge: shift realization does not cover targets");
      }
      for (Eigen::Index k = 0; k < out_len; ++k) {
        const Vec& dt = shift.d[ws.start[w] + in_len + k];
        if (dt.size() != 1) {
          throw Unsupported("autoregressive targets need a scalar series shift");
        }
        y_hat(k) += dt(0);
      }
    }

    const Vec q = predict_window(net, xs);
    const Vec q_hat = predict_window(net, shifted_x);
    const double lc = window_loss_value(loss, ws.y[w], q, huber_delta);
    clean_sum += lc;
    shifted_sum += window_loss_value(loss, y_hat, q_hat, huber_delta);
    sqrt_loss_sum += std::sqrt(lc);
  }

  const double n = static_cast<double>(ws.size());
  GEReport rep;
  rep.clean_loss_mean = clean_sum / n;
  rep.shifted_loss_mean = shifted_sum / n;
  rep.empirical_ge = std::abs(rep.shifted_loss_mean - rep.clean_loss_mean);
  rep.bound = (loss == LossKind::SquaredError) ? mse_bound(bi, sqrt_loss_sum / n)
                                               : corollary1_bound(bi);
  rep.margin = rep.bound - rep.empirical_ge;
  return rep;
}

}  // namespace klens
