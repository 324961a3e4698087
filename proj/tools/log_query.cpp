// Lists firewall Block responses to subnet-agent detections in an action log.
// Exit status 0 when at least one episode contains a response, 1 otherwise.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cyberdef/replay.hpp"

using namespace cyberdef;

int main(int argc, char** argv) {
  CLI::App app{"Query an action log for Block responses after detection"};
  std::string path;
  int window = 3;
  app.add_option("--log", path, "Action log (JSON lines)")->required();
  app.add_option("--window", window, "Steps after the detection in which the Block must fall");
  CLI11_PARSE(app, argc, argv);

  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << path << '\n';
    return 2;
  }
  std::ostringstream text;
  text << in.rdbuf();
  try {
    const auto log = logs::parse_action_log(text.str());
    const auto q = replay::query_block_responses(log, window);
    for (const auto& r : q.responses)
      std::cout << "episode " << r.episode << ": " << log.scenario.agents[static_cast<std::size_t>(r.agent)].name
                << " detected at step " << r.detection_step << ", Block:" << r.subnet << " at step " << r.block_step
                << '\n';
    std::cout << q.episodes_with_response << " of " << q.episodes << " episodes contain a response\n";
    return q.episodes_with_response > 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
