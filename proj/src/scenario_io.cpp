#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "cyberdef/errors.hpp"
#include "cyberdef/scenario.hpp"

namespace cyberdef {

namespace {

constexpr int kFormatVersion = 1;

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (int v : values) out += (out.empty() ? "" : " ") + std::to_string(v);
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

int parse_int(std::string_view text, const std::string& key, int line) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("parse_error", "field '" + key + "': expected an integer, got '" + std::string(text) + "'", line);
  return value;
}

double parse_double(std::string_view text, const std::string& key, int line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("parse_error", "field '" + key + "': expected a number, got '" + std::string(text) + "'", line);
  return value;
}

std::vector<int> parse_int_list(std::string_view text, const std::string& key, int line) {
  std::vector<int> out;
  for (auto tok : split_ws(text)) out.push_back(parse_int(tok, key, line));
  return out;
}

struct Section {
  std::string kind;  // "", "reward", "subnet", "agent"
  int id = -1;
  int line = 0;
  std::map<std::string, std::pair<std::string, int>> fields;  // key -> (value, line)
};

const std::set<std::string>& allowed_keys(const std::string& kind) {
  static const std::map<std::string, std::set<std::string>> table = {
      {"",
       {"version", "name", "hosts", "op_server", "pivot_host", "red_entry_subnet", "exploit_success", "horizon",
        "gamma"}},
      {"reward",
       {"opserver_privileged", "host_privileged", "host_user", "restore_cost", "restore_opserver_cost",
        "analyse_unnecessary_cost", "block_cost", "block_justified_discount"}},
      {"subnet", {"hosts"}},
      {"agent", {"name", "visible_hosts", "visible_subnets", "actions"}},
  };
  return table.at(kind);
}

std::vector<Section> tokenize(std::string_view text) {
  std::vector<Section> sections(1);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("parse_error", "unterminated section header", line_no);
      const auto parts = split_ws(line.substr(1, line.size() - 2));
      Section section;
      section.line = line_no;
      if (parts.size() == 1 && parts[0] == "reward") {
        section.kind = "reward";
      } else if (parts.size() == 2 && (parts[0] == "subnet" || parts[0] == "agent")) {
        section.kind = std::string(parts[0]);
        section.id = parse_int(parts[1], section.kind + " id", line_no);
      } else {
        throw ConfigError("unknown_section", "unknown section '" + std::string(line) + "'", line_no);
      }
      sections.push_back(std::move(section));
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("parse_error", "expected 'key = value'", line_no);
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      auto& section = sections.back();
      if (!allowed_keys(section.kind).contains(key))
        throw ConfigError("unknown_key",
                          "unknown key '" + key + "'" + (section.kind.empty() ? "" : " in [" + section.kind + "]"),
                          line_no);
      if (!section.fields.emplace(key, std::make_pair(value, line_no)).second)
        throw ConfigError("duplicate_key", "key '" + key + "' given twice", line_no);
    }
    if (end == text.size()) break;
  }
  return sections;
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream out;
  out << "# cyberdef scenario\n";
  out << "version = " << kFormatVersion << "\n";
  out << "name = " << s.name << "\n";
  out << "hosts = " << s.host_count << "\n";
  out << "op_server = " << s.op_server_host << "\n";
  out << "pivot_host = " << s.pivot_host << "\n";
  out << "red_entry_subnet = " << s.red_entry_subnet << "\n";
  out << "exploit_success = " << format_double(s.exploit_success) << "\n";
  out << "horizon = " << s.horizon << "\n";
  out << "gamma = " << format_double(s.gamma) << "\n";

  const auto& r = s.reward_table;
  out << "\n[reward]\n";
  out << "opserver_privileged = " << format_double(r.opserver_privileged) << "\n";
  out << "host_privileged = " << format_double(r.host_privileged) << "\n";
  out << "host_user = " << format_double(r.host_user) << "\n";
  out << "restore_cost = " << format_double(r.restore_cost) << "\n";
  out << "restore_opserver_cost = " << format_double(r.restore_opserver_cost) << "\n";
  out << "analyse_unnecessary_cost = " << format_double(r.analyse_unnecessary_cost) << "\n";
  out << "block_cost = " << format_double(r.block_cost) << "\n";
  out << "block_justified_discount = " << format_double(r.block_justified_discount) << "\n";

  for (const auto& subnet : s.subnets) {
    out << "\n[subnet " << subnet.id << "]\n";
    out << "hosts = " << join_ints(subnet.hosts) << "\n";
  }
  for (const auto& agent : s.agents) {
    out << "\n[agent " << agent.id << "]\n";
    out << "name = " << agent.name << "\n";
    out << "visible_hosts = " << join_ints(agent.visible_hosts) << "\n";
    out << "visible_subnets = " << join_ints(agent.visible_subnets) << "\n";
    out << "actions =";
    for (const auto& action : agent.action_space) out << " " << to_string(action);
    out << "\n";
  }
  return out.str();
}

Scenario load_scenario(std::string_view text) {
  const auto sections = tokenize(text);
  const auto& top = sections.front();

  const auto get = [](const Section& sec, const std::string& key) -> std::optional<std::pair<std::string, int>> {
    if (auto it = sec.fields.find(key); it != sec.fields.end()) return it->second;
    return std::nullopt;
  };

  const auto version = get(top, "version");
  if (!version) throw ConfigError("version_missing", "missing 'version' key", 1);
  if (parse_int(version->first, "version", version->second) != kFormatVersion)
    throw ConfigError("unsupported_version", "unsupported scenario format version " + version->first, version->second);

  Scenario s;
  if (auto v = get(top, "name")) s.name = v->first;
  if (auto v = get(top, "hosts")) s.host_count = parse_int(v->first, "hosts", v->second);
  if (auto v = get(top, "op_server")) s.op_server_host = parse_int(v->first, "op_server", v->second);
  if (auto v = get(top, "pivot_host")) s.pivot_host = parse_int(v->first, "pivot_host", v->second);
  if (auto v = get(top, "red_entry_subnet")) s.red_entry_subnet = parse_int(v->first, "red_entry_subnet", v->second);
  if (auto v = get(top, "exploit_success")) s.exploit_success = parse_double(v->first, "exploit_success", v->second);
  if (auto v = get(top, "horizon")) s.horizon = parse_int(v->first, "horizon", v->second);
  if (auto v = get(top, "gamma")) s.gamma = parse_double(v->first, "gamma", v->second);

  std::set<int> subnet_ids, agent_ids;
  bool have_reward = false;
  for (std::size_t i = 1; i < sections.size(); ++i) {
    const auto& sec = sections[i];
    if (sec.kind == "reward") {
      if (have_reward) throw ConfigError("duplicate_section", "[reward] given twice", sec.line);
      have_reward = true;
      auto& r = s.reward_table;
      const std::pair<const char*, double*> slots[] = {{"opserver_privileged", &r.opserver_privileged},
                                                       {"host_privileged", &r.host_privileged},
                                                       {"host_user", &r.host_user},
                                                       {"restore_cost", &r.restore_cost},
                                                       {"restore_opserver_cost", &r.restore_opserver_cost},
                                                       {"analyse_unnecessary_cost", &r.analyse_unnecessary_cost},
                                                       {"block_cost", &r.block_cost},
                                                       {"block_justified_discount", &r.block_justified_discount}};
      for (const auto& [key, slot] : slots)
        if (auto v = get(sec, key)) *slot = parse_double(v->first, key, v->second);
    } else if (sec.kind == "subnet") {
      if (!subnet_ids.insert(sec.id).second)
        throw ConfigError("duplicate_section", "[subnet " + std::to_string(sec.id) + "] given twice", sec.line);
      SubnetSpec subnet;
      subnet.id = sec.id;
      if (auto v = get(sec, "hosts")) subnet.hosts = parse_int_list(v->first, "hosts", v->second);
      s.subnets.push_back(std::move(subnet));
    } else if (sec.kind == "agent") {
      if (!agent_ids.insert(sec.id).second)
        throw ConfigError("duplicate_section", "[agent " + std::to_string(sec.id) + "] given twice", sec.line);
      AgentSpec agent;
      agent.id = sec.id;
      if (auto v = get(sec, "name")) agent.name = v->first;
      if (auto v = get(sec, "visible_hosts")) agent.visible_hosts = parse_int_list(v->first, "visible_hosts", v->second);
      if (auto v = get(sec, "visible_subnets"))
        agent.visible_subnets = parse_int_list(v->first, "visible_subnets", v->second);
      if (auto v = get(sec, "actions")) {
        for (auto tok : split_ws(v->first)) {
          try {
            agent.action_space.push_back(parse_action(tok));
          } catch (const ConfigError& e) {
            throw ConfigError(e.rule(), "[agent " + std::to_string(sec.id) + "] " + e.what(), v->second);
          }
        }
      }
      s.agents.push_back(std::move(agent));
    }
  }
  std::sort(s.subnets.begin(), s.subnets.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(s.agents.begin(), s.agents.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  finalize_observation_lengths(s);
  validate_scenario(s);
  return s;
}

std::string scenario_fingerprint(const Scenario& scenario) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_scenario(scenario)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cyberdef
