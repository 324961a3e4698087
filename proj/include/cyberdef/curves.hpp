#pragma once

#include <string>
#include <vector>

#include "cyberdef/logs.hpp"

namespace cyberdef::curves {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Series {
  std::string metric;
  std::vector<Point> points;
};

/// Groups rows into windows [k w, (k + 1) w) of the step counter and emits,
/// per metric, (mean step, mean value) over the rows of each window that
/// carry the metric. ConfigError("window") unless window >= 1.
std::vector<Series> downsample(const std::vector<logs::TrainingRow>& rows, long long window);

/// "# metric" header followed by "x y" lines, series separated by a blank line.
std::string format_series(const std::vector<Series>& series);

}  // namespace cyberdef::curves
