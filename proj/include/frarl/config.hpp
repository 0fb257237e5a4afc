#pragma once

#include <string>

#include "frarl/trainer.hpp"

namespace frarl::config {

/// Key-value text config (`key = value`, '#' comments). Unknown keys are
/// rejected. Keys cover every tunable default; see save_config output for
/// the full list.
trainer::TrainConfig load_config(const std::string& path);

void save_config(const std::string& path, const trainer::TrainConfig& cfg);

/// Applies a single `key=value` override in the same namespace as the file
/// format.
void apply_override(trainer::TrainConfig& cfg, const std::string& key,
                    const std::string& value);

}  // namespace frarl::config
