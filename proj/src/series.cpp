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

#include "klens/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

namespace klens {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Timestamp -> monotone key. Accepts plain numbers or "YYYY-MM-DD HH:MM[:SS]".
bool parse_time_key(const std::string& raw, double* key) {
  const std::string s = trimmed(raw);
  if (s.empty()) return false;
  char* end = nullptr;
  const double num = std::strtod(s.c_str(), &end);
  if (end && *end == '\0') {
    *key = num;
    return true;
  }
  std::tm tm = {};
  int year, mon, day, hour = 0, min = 0, sec = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &year, &mon, &day, &hour, &min,
                  &sec) >= 3) {
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    *key = static_cast<double>(timegm(&tm));
    return true;
  }
  return false;
}

}  // namespace

SeriesDataset ingest(const std::string& csv_path, const std::string& column) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("ingest: cannot open " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("ingest: empty file " + csv_path);
  const std::vector<std::string> header = split_csv_line(line);
  Eigen::Index col = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (trimmed(header[k]) == column) col = static_cast<Eigen::Index>(k);
  }
  if (col < 0) throw ParseError("ingest: column '" + column + "' not in header");

  SeriesDataset ds;
  std::vector<double> values;
  std::vector<double> keys;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trimmed(line).empty() || line[0] == '#') continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) <= col) {
      throw ParseError("ingest: row " + std::to_string(row) + " has too few columns");
    }
    double key;
    if (!parse_time_key(cells[0], &key)) {
      throw ParseError("ingest: row " + std::to_string(row) + " has a bad timestamp '" +
                       cells[0] + "'");
    }
    const std::string cell = trimmed(cells[col]);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || !end || *end != '\0') {
      throw ParseError("ingest: row " + std::to_string(row) + " column '" + column +
                       "' is not numeric: '" + cell + "'");
    }
    ds.timestamps.push_back(trimmed(cells[0]));
    keys.push_back(key);
    values.push_back(v);
  }
  if (values.size() < 2) throw ParseError("ingest: need at least two rows");

  // Strictly increasing, uniform stride; report every missing step.
  std::string gaps;
  double stride = keys[1] - keys[0];
  std::map<double, int> stride_votes;
  for (std::size_t k = 1; k < keys.size(); ++k) ++stride_votes[keys[k] - keys[k - 1]];
  int best = 0;
  for (const auto& [d, n] : stride_votes) {
    if (n > best) {
      best = n;
      stride = d;
    }
  }
  if (stride <= 0.0) throw GapError("ingest: timestamps are not strictly increasing");
  for (std::size_t k = 1; k < keys.size(); ++k) {
    const double d = keys[k] - keys[k - 1];
    if (d <= 0.0) {
      throw GapError("ingest: timestamps not strictly increasing at '" +
                     ds.timestamps[k] + "'");
    }
    if (std::abs(d - stride) > 1e-9 * std::max(1.0, std::abs(stride))) {
      gaps += (gaps.empty() ? "" : ", ") + std::string("after '") +
              ds.timestamps[k - 1] + "'";
    }
  }
  if (!gaps.empty()) throw GapError("ingest: missing timestamps " + gaps);

  ds.values = Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
  ds.mean = ds.values.mean();
  ds.stddev = std::sqrt((ds.values.array() - ds.mean).square().sum() /
                        static_cast<double>(ds.values.size()));
  if (ds.stddev <= kAbsFloor) throw DegenerateData("ingest: constant series");
  return ds;
}

SeriesDataset series_from_values(const Vec& values) {
  if (values.size() < 2) throw InvalidInput("series: need at least two points");
  SeriesDataset ds;
  ds.values = values;
  ds.timestamps.reserve(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    ds.timestamps.push_back(std::to_string(i));
  }
  ds.mean = ds.values.mean();
  ds.stddev = std::sqrt((ds.values.array() - ds.mean).square().sum() /
                        static_cast<double>(ds.values.size()));
  if (ds.stddev <= kAbsFloor) throw DegenerateData("series: constant values");
  return ds;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "unknown";
}

Eigen::Index WindowSet::count(Split s) const {
  Eigen::Index n = 0;
  for (const Split tag : split) {
    if (tag == s) ++n;
  }
  return n;
}

WindowDataset WindowSet::subset(Split s) const {
  WindowDataset out;
  for (std::size_t w = 0; w < split.size(); ++w) {
    if (split[w] != s) continue;
    std::vector<Vec> xs(in_len);
    for (Eigen::Index t = 0; t < in_len; ++t) {
      xs[t] = Vec::Constant(1, inputs(static_cast<Eigen::Index>(w), t));
    }
    out.x.push_back(std::move(xs));
    out.y.push_back(targets.row(static_cast<Eigen::Index>(w)).transpose());
    out.start.push_back(starts[w]);
  }
  return out;
}

WindowSet window(const SeriesDataset& ds, Eigen::Index in_len, Eigen::Index out_len,
                 const SplitRatios& ratios) {
  if (in_len < 1 || out_len < 1) throw InvalidInput("window: lengths must be >= 1");
  const Eigen::Index len = ds.size();
  if (len < in_len + out_len) {
    throw InvalidInput("window: series shorter than in_len + out_len");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw InvalidInput("window: split ratios must sum to 1");
  }

  WindowSet ws;
  ws.in_len = in_len;
  ws.out_len = out_len;
  const Eigen::Index b1 = static_cast<Eigen::Index>(std::llround(ratios.train * len));
  const Eigen::Index b2 =
      static_cast<Eigen::Index>(std::llround((ratios.train + ratios.val) * len));
  ws.hours_train = b1;
  ws.hours_val = b2 - b1;
  ws.hours_test = len - b2;

  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index i = 0; i < b1; ++i) {
    sum += ds.values(i);
    sum_sq += ds.values(i) * ds.values(i);
  }
  if (b1 < 2) throw InvalidInput("window: train split is empty");
  ws.norm_mean = sum / static_cast<double>(b1);
  ws.norm_std =
      std::sqrt(std::max(0.0, sum_sq / static_cast<double>(b1) - ws.norm_mean * ws.norm_mean));
  if (ws.norm_std <= kAbsFloor) throw DegenerateData("window: constant train split");

  const Vec z = (ds.values.array() - ws.norm_mean) / ws.norm_std;

  const Eigen::Index n_windows = len - in_len - out_len + 1;
  ws.inputs.resize(n_windows, in_len);
  ws.targets.resize(n_windows, out_len);
  ws.starts.resize(n_windows);
  ws.split.resize(n_windows);
  for (Eigen::Index s = 0; s < n_windows; ++s) {
    ws.inputs.row(s) = z.segment(s, in_len).transpose();
    ws.targets.row(s) = z.segment(s + in_len, out_len).transpose();
    ws.starts[s] = s;
    ws.split[s] = s < b1 ? Split::Train : (s < b2 ? Split::Val : Split::Test);
  }
  return ws;
}

std::vector<TrainWindow> to_train_windows(const WindowSet& ws, Split s) {
  std::vector<TrainWindow> out;
  for (std::size_t w = 0; w < ws.split.size(); ++w) {
    if (ws.split[w] != s) continue;
    TrainWindow tw;
    tw.x.resize(ws.in_len);
    for (Eigen::Index t = 0; t < ws.in_len; ++t) {
      tw.x[t] = Vec::Constant(1, ws.inputs(static_cast<Eigen::Index>(w), t));
    }
    tw.y = ws.targets.row(static_cast<Eigen::Index>(w)).transpose();
    out.push_back(std::move(tw));
  }
  return out;
}

}  // namespace klens
