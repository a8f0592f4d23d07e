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

#ifndef KLENS_SERIES_HPP
#define KLENS_SERIES_HPP

#include <string>
#include <vector>

#include "klens/ge_bound.hpp"
#include "klens/lstm.hpp"
#include "klens/numerics.hpp"

namespace klens {

struct SeriesDataset {
  std::vector<std::string> timestamps;
  Vec values;  // raw units (kW)
  double mean = 0.0;
  double stddev = 0.0;

  Eigen::Index size() const { return values.size(); }
};

/// Parses one numeric column of a headered CSV. Timestamps (first column) must
/// be strictly increasing with a uniform step; missing steps raise GapError.
SeriesDataset ingest(const std::string& csv_path, const std::string& column);
SeriesDataset series_from_values(const Vec& values);

enum class Split { Train, Val, Test };
std::string to_string(Split s);

struct WindowSet {
  Eigen::Index in_len = 96;
  Eigen::Index out_len = 24;
  Mat inputs;   // n_windows x in_len, z-scored by train-split stats
  Mat targets;  // n_windows x out_len
  std::vector<Eigen::Index> starts;
  std::vector<Split> split;
  Eigen::Index hours_train = 0, hours_val = 0, hours_test = 0;
  double norm_mean = 0.0;  // train-split stats used for the z-score
  double norm_std = 1.0;   // this is sigma_data in kW

  Eigen::Index count(Split s) const;
  /// Rows of one split as a ge_bound window dataset (starts are series-level).
  WindowDataset subset(Split s) const;
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

/// Stride-1 windows over the whole series (count = L - in - out + 1), each
/// assigned to the chronological split containing its start index.
WindowSet window(const SeriesDataset& ds, Eigen::Index in_len = 96,
                 Eigen::Index out_len = 24, const SplitRatios& ratios = {});

/// Split-level shift dimensioning: the realization must cover the series.
std::vector<TrainWindow> to_train_windows(const WindowSet& ws, Split s);

}  // namespace klens

#endif  // KLENS_SERIES_HPP
