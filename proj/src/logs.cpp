#include "cyberdef/logs.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cyberdef/errors.hpp"

namespace cyberdef::logs {

using nlohmann::json;

namespace {

constexpr int kActionLogVersion = 1;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, int line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError("csv_parse", "bad number '" + std::string(s) + "'", line);
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string csv_row(const TrainingRow& r) {
  std::string s = std::to_string(r.steps);
  for (double v : {r.train_mean, r.train_std, r.policy_loss, r.value_loss, r.entropy}) s += "," + format_double(v);
  s += "," + (r.eval_mean ? format_double(*r.eval_mean) : std::string());
  s += "," + (r.eval_std ? format_double(*r.eval_std) : std::string());
  return s;
}

std::vector<TrainingRow> parse_training_csv(std::string_view text) {
  std::vector<TrainingRow> rows;
  int line_no = 0;
  bool header = false;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != kCsvHeader) throw ConfigError("csv_parse", "unexpected header '" + std::string(line) + "'", line_no);
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) throw ConfigError("csv_parse", "expected 8 fields, got " + std::to_string(f.size()), line_no);
    TrainingRow r;
    long long steps = 0;
    auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), steps);
    if (ec != std::errc() || p != f[0].data() + f[0].size() || f[0].empty())
      throw ConfigError("csv_parse", "bad step count '" + std::string(f[0]) + "'", line_no);
    r.steps = steps;
    r.train_mean = parse_double(f[1], line_no);
    r.train_std = parse_double(f[2], line_no);
    r.policy_loss = parse_double(f[3], line_no);
    r.value_loss = parse_double(f[4], line_no);
    r.entropy = parse_double(f[5], line_no);
    if (!f[6].empty()) r.eval_mean = parse_double(f[6], line_no);
    if (!f[7].empty()) r.eval_std = parse_double(f[7], line_no);
    if (!rows.empty() && r.steps <= rows.back().steps)
      throw ConfigError("csv_parse", "step counter must increase", line_no);
    rows.push_back(r);
  }
  if (!header) throw ConfigError("csv_parse", "missing header", 1);
  return rows;
}

ActionLogWriter::ActionLogWriter(std::ostream& out, const Scenario& scenario) : out_(&out) {
  for (const auto& a : scenario.agents) agent_names_.push_back(a.name);
  json h = {{"type", "header"},
            {"format", "cyberdef-action-log"},
            {"version", kActionLogVersion},
            {"fingerprint", scenario_fingerprint(scenario)},
            {"scenario", serialize_scenario(scenario)}};
  *out_ << h.dump() << '\n';
}

void ActionLogWriter::begin_episode(long long episode, std::uint64_t env_seed, std::string_view mode) {
  json r = {{"type", "episode"}, {"episode", episode}, {"seed", env_seed}, {"mode", mode}};
  *out_ << r.dump() << '\n';
}

void ActionLogWriter::step(long long episode, int step, std::span<const BlueAction> joint, std::span<const int> indices,
                           double reward) {
  for (std::size_t i = 0; i < joint.size(); ++i) {
    json r = {{"type", "step"},
              {"episode", episode},
              {"step", step},
              {"agent", agent_names_[i]},
              {"action", to_string(joint[i].kind)},
              {"target", joint[i].target},
              {"index", indices[i]},
              {"reward", reward}};
    *out_ << r.dump() << '\n';
  }
}

void ActionLogWriter::end_episode(long long episode, double total) {
  json r = {{"type", "end"}, {"episode", episode}, {"total", total}};
  *out_ << r.dump() << '\n';
  out_->flush();
}

ActionLog parse_action_log(std::string_view text) {
  ActionLog log;
  bool have_header = false;
  LoggedEpisode* open = nullptr;
  int line_no = 0;
  int last_line = 0;
  const auto fail = [&](const std::string& why) { return ConfigError("action_log_parse", why, line_no); };
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    last_line = line_no;
    json r;
    try {
      r = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("malformed record: ") + e.what());
    }
    try {
      const auto type = r.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw fail("first record must be the header");
        if (r.at("version").get<int>() != kActionLogVersion) throw fail("unsupported action log version");
        log.scenario = load_scenario(r.at("scenario").get<std::string>());
        if (scenario_fingerprint(log.scenario) != r.at("fingerprint").get<std::string>())
          throw fail("scenario fingerprint does not match the embedded scenario");
        have_header = true;
        continue;
      }
      const std::size_t n = log.scenario.agents.size();
      if (type == "episode") {
        if (open) throw fail("episode " + std::to_string(open->episode) + " is not terminated");
        auto& ep = log.episodes.emplace_back();
        ep.episode = r.at("episode").get<long long>();
        ep.env_seed = r.at("seed").get<std::uint64_t>();
        ep.mode = r.at("mode").get<std::string>();
        open = &ep;
      } else if (type == "step") {
        if (!open) throw fail("step record outside an episode");
        if (r.at("episode").get<long long>() != open->episode) throw fail("step record belongs to another episode");
        const int step = r.at("step").get<int>();
        const auto& name = r.at("agent").get_ref<const std::string&>();
        std::size_t agent = n;
        for (std::size_t i = 0; i < n; ++i)
          if (log.scenario.agents[i].name == name) agent = i;
        if (agent == n) throw fail("unknown agent '" + name + "'");
        if (agent == 0) {
          if (step != static_cast<int>(open->rewards.size())) throw fail("step index out of sequence");
          open->joint_actions.emplace_back();
          open->rewards.push_back(r.at("reward").get<double>());
          open->step_lines.push_back(line_no);
        } else if (open->joint_actions.empty() || step != static_cast<int>(open->rewards.size()) - 1 ||
                   open->joint_actions.back().size() != agent) {
          throw fail("agent records out of order");
        } else if (r.at("reward").get<double>() != open->rewards.back()) {
          throw fail("agents disagree on the team reward");
        }
        BlueAction a;
        a.kind = parse_action_kind(r.at("action").get<std::string>());
        a.target = r.at("target").get<int>();
        open->joint_actions.back().push_back(a);
      } else if (type == "end") {
        if (!open || r.at("episode").get<long long>() != open->episode) throw fail("end record without episode");
        if (!open->joint_actions.empty() && open->joint_actions.back().size() != n)
          throw fail("incomplete joint action");
        open->total = r.at("total").get<double>();
        open = nullptr;
      } else {
        throw fail("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw fail(std::string("bad record: ") + e.what());
    } catch (const ConfigError& e) {
      if (e.line() > 0) throw;
      throw fail(e.what());
    }
  }
  line_no = last_line;
  if (!have_header) throw ConfigError("action_log_parse", "empty log", 1);
  if (open) throw fail("log truncated inside episode " + std::to_string(open->episode));
  return log;
}

}  // namespace cyberdef::logs
