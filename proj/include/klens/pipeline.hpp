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

#ifndef KLENS_PIPELINE_HPP
#define KLENS_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "klens/dg_synthesis.hpp"
#include "klens/dmdc.hpp"
#include "klens/ge_bound.hpp"
#include "klens/lstm.hpp"
#include "klens/series.hpp"
#include "klens/shift_gen.hpp"

namespace klens {

struct RunConfig {
  std::string data_csv;
  std::string column = "value";
  std::string model_path;
  std::string surrogate_path;
  std::string out_dir = "out";

  Eigen::Index in_len = 96;
  Eigen::Index out_len = 24;
  SplitRatios split;

  std::vector<double> lambda_grid;  // default: 9 log-spaced in [0.08, 2.55]
  std::vector<ShiftKind> shift_kinds = {ShiftKind::Uniform, ShiftKind::FixedMagnitude,
                                        ShiftKind::Mixture};
  int trials = 10;
  double dg_lambda = 1.0;
  std::uint64_t seed = 42;
  LossKind loss = LossKind::SquaredError;
  TargetMode target_mode = TargetMode::Autoregressive;
  bool tight_window = false;
  int hinf_grid = 4096;

  bool has_train = false;
  std::vector<Eigen::Index> train_layers = {16};
  TrainConfig train_cfg;

  FitOptions fit;
  ReductionPolicy reduction;
  SynthOptions synth_opts;

  /// Parses the JSON config; relative paths resolve against the file's dir.
  static RunConfig load(const std::string& path);
  void validate() const;
};

int cmd_fit_surrogate(const RunConfig& cfg);
int cmd_bound_report(const RunConfig& cfg);
int cmd_dg_apply(const RunConfig& cfg);
int cmd_shift_audit(const RunConfig& cfg);

/// One-sided sign test: P[Bin(n, 1/2) >= positives].
double sign_test_p(int positives, int n);

/// Shared by commands and tests: loads the model (training it first when the
/// config asks for that) and the fitted surrogate.
LstmNetwork ensure_model(const RunConfig& cfg, const WindowSet& ws);
LinearSurrogate ensure_surrogate(const RunConfig& cfg, const LstmNetwork& net,
                                 const WindowSet& ws);

}  // namespace klens

#endif  // KLENS_PIPELINE_HPP
