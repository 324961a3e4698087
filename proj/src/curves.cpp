#include "cyberdef/curves.hpp"

#include <functional>
#include <map>
#include <optional>

#include "cyberdef/errors.hpp"

namespace cyberdef::curves {

std::vector<Series> downsample(const std::vector<logs::TrainingRow>& rows, long long window) {
  if (window < 1) throw ConfigError("window", "window width must be at least one step");
  using Getter = std::function<std::optional<double>(const logs::TrainingRow&)>;
  const std::vector<std::pair<std::string, Getter>> metrics = {
      {"train_mean", [](const auto& r) { return std::optional<double>(r.train_mean); }},
      {"train_std", [](const auto& r) { return std::optional<double>(r.train_std); }},
      {"policy_loss", [](const auto& r) { return std::optional<double>(r.policy_loss); }},
      {"value_loss", [](const auto& r) { return std::optional<double>(r.value_loss); }},
      {"entropy", [](const auto& r) { return std::optional<double>(r.entropy); }},
      {"eval_mean", [](const auto& r) { return r.eval_mean; }},
      {"eval_std", [](const auto& r) { return r.eval_std; }},
  };
  std::vector<Series> out;
  for (const auto& [name, get] : metrics) {
    Series s{name, {}};
    std::map<long long, std::pair<std::vector<double>, std::vector<double>>> bins;
    for (const auto& r : rows)
      if (auto v = get(r)) {
        auto& bin = bins[r.steps / window];
        bin.first.push_back(static_cast<double>(r.steps));
        bin.second.push_back(*v);
      }
    for (const auto& [_, bin] : bins) {
      double sx = 0.0, sy = 0.0;
      for (double x : bin.first) sx += x;
      for (double y : bin.second) sy += y;
      const double n = static_cast<double>(bin.first.size());
      s.points.push_back({sx / n, sy / n});
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_series(const std::vector<Series>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i > 0) out += "\n";
    out += "# " + series[i].metric + "\n";
    for (const auto& p : series[i].points) out += logs::format_double(p.x) + " " + logs::format_double(p.y) + "\n";
  }
  return out;
}

}  // namespace cyberdef::curves
