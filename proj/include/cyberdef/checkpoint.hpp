#pragma once

#include <string>
#include <string_view>

#include "cyberdef/trainer.hpp"

namespace cyberdef::train {

/// Self-describing JSON: format tag, version, scenario text and fingerprint,
/// model configuration, graph logits, every named parameter and the value
/// normalizer statistics.
std::string save_checkpoint(const Learner& learner);

/// ConfigError("checkpoint_parse") on malformed content,
/// ("checkpoint_version") on an unknown version and ("fingerprint_mismatch")
/// when the embedded scenario does not hash to the stored fingerprint.
Learner load_checkpoint(std::string_view text);

/// ConfigError("fingerprint_mismatch") unless the learner was trained on
/// `scenario`.
void require_same_scenario(const Learner& learner, const Scenario& scenario);

}  // namespace cyberdef::train
