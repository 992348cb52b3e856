#pragma once

#include <string>

#include "json.hpp"

#include "hybridtrap/config.hpp"

namespace hybridtrap {

/// JSON config schema. Every key carries its unit as a suffix; values are converted to SI on
/// load. Sections: particle, environment, optical, paul, feedback, detector, run, protocol.
/// Missing keys keep their defaults; unknown keys are rejected. The optical section accepts
/// either explicit waists or `frequencies_kHz` (waists then follow from depth and mass).
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// `path` == "default" returns the built-in defaults. Throws ValidationError on parse errors.
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace hybridtrap
