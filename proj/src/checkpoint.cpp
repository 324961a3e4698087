#include "cyberdef/checkpoint.hpp"

#include <set>

#include <json.hpp>

#include "cyberdef/errors.hpp"

namespace cyberdef::train {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "cyberdef-checkpoint";
constexpr int kVersion = 1;

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("checkpoint_parse", "matrix data does not match its shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)];
  return m;
}

}  // namespace

std::string save_checkpoint(const Learner& l) {
  const auto& c = l.policy.config();
  json params = json::array();
  for (const auto* p : l.policy.parameters().all()) {
    json e = matrix_json(p->value);
    e["name"] = p->name;
    params.push_back(std::move(e));
  }
  json j = {
      {"format", kFormat},
      {"version", kVersion},
      {"fingerprint", scenario_fingerprint(l.scenario)},
      {"scenario", serialize_scenario(l.scenario)},
      {"model",
       {{"d_model", c.d_model},
        {"heads", c.heads},
        {"encoder_blocks", c.encoder_blocks},
        {"decoder_blocks", c.decoder_blocks},
        {"ff_hidden", c.ff_hidden},
        {"head_init_scale", c.head_init_scale}}},
      {"graph",
       {{"n_agents", l.graph.n_agents},
        {"sparsity", l.graph.sparsity},
        {"temperature", l.graph.temperature},
        {"logits", matrix_json(l.graph.logits)}}},
      {"value_norm",
       {{"enabled", l.vnorm.enabled},
        {"beta", l.vnorm.beta},
        {"running_mean", l.vnorm.running_mean},
        {"running_mean_sq", l.vnorm.running_mean_sq},
        {"debias", l.vnorm.debias}}},
      {"parameters", params},
  };
  return j.dump(1);
}

Learner load_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint_parse", e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw ConfigError("checkpoint_parse", "not a checkpoint file");
    if (j.at("version").get<int>() != kVersion)
      throw ConfigError("checkpoint_version", "unsupported checkpoint version " + j.at("version").dump());
    Scenario scenario = load_scenario(j.at("scenario").get<std::string>());
    if (scenario_fingerprint(scenario) != j.at("fingerprint").get<std::string>())
      throw ConfigError("fingerprint_mismatch", "embedded scenario does not match the stored fingerprint");

    const auto& m = j.at("model");
    policy::PolicyConfig cfg;
    cfg.d_model = m.at("d_model").get<int>();
    cfg.heads = m.at("heads").get<int>();
    cfg.encoder_blocks = m.at("encoder_blocks").get<int>();
    cfg.decoder_blocks = m.at("decoder_blocks").get<int>();
    cfg.ff_hidden = m.at("ff_hidden").get<int>();
    cfg.head_init_scale = m.at("head_init_scale").get<double>();
    policy::Policy pol(scenario, cfg, 0);

    std::set<std::string> seen;
    for (const auto& e : j.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      auto* p = pol.parameters().find(name);
      if (!p) throw ConfigError("checkpoint_parse", "unexpected parameter '" + name + "'");
      Matrix value = matrix_from(e);
      if (value.rows() != p->value.rows() || value.cols() != p->value.cols())
        throw ConfigError("checkpoint_parse", "parameter '" + name + "' has the wrong shape");
      if (!value.allFinite()) throw ConfigError("checkpoint_parse", "parameter '" + name + "' is not finite");
      p->value = std::move(value);
      seen.insert(name);
    }
    if (seen.size() != pol.parameters().size()) throw ConfigError("checkpoint_parse", "missing parameters");

    const auto& gj = j.at("graph");
    graph::CommGraph g;
    g.n_agents = gj.at("n_agents").get<int>();
    g.sparsity = gj.at("sparsity").get<double>();
    g.temperature = gj.at("temperature").get<double>();
    g.logits = matrix_from(gj.at("logits"));
    if (g.n_agents != static_cast<int>(scenario.agents.size()) || g.logits.rows() != g.n_agents ||
        g.logits.cols() != g.n_agents || !g.logits.allFinite())
      throw ConfigError("checkpoint_parse", "graph does not match the scenario");

    const auto& vj = j.at("value_norm");
    ValueNormalizer v;
    v.enabled = vj.at("enabled").get<bool>();
    v.beta = vj.at("beta").get<double>();
    v.running_mean = vj.at("running_mean").get<double>();
    v.running_mean_sq = vj.at("running_mean_sq").get<double>();
    v.debias = vj.at("debias").get<double>();
    return Learner(std::move(scenario), std::move(pol), std::move(g), v);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint_parse", e.what());
  }
}

void require_same_scenario(const Learner& learner, const Scenario& scenario) {
  const auto have = scenario_fingerprint(learner.scenario);
  const auto want = scenario_fingerprint(scenario);
  if (have != want)
    throw ConfigError("fingerprint_mismatch",
                      "checkpoint was trained on scenario " + have + " but " + want + " was requested");
}

}  // namespace cyberdef::train
