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

#ifndef KLENS_SVG_HPP
#define KLENS_SVG_HPP

#include <string>
#include <vector>

namespace klens {

/// Self-contained line chart writer: axes, one polyline per series, legend.
class LineChart {
 public:
  LineChart(std::string title, std::string x_label, std::string y_label);

  void add_series(const std::string& name, const std::vector<double>& xs,
                  const std::vector<double>& ys);
  /// Log-scale toggle for the y axis (applied at render time).
  void set_log_y(bool log_y) { log_y_ = log_y; }

  std::string render() const;
  void write(const std::string& path) const;

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  bool log_y_ = false;
};

}  // namespace klens

#endif  // KLENS_SVG_HPP
