#pragma once

#include <filesystem>
#include <string_view>

#include "labelaudit/corruptor.hpp"
#include "labelaudit/detector_sim.hpp"
#include "labelaudit/scoring.hpp"
#include "labelaudit/synth.hpp"

namespace labelaudit {

// JSON objects whose keys are the field names; missing keys keep defaults,
// unknown keys are rejected so typos do not pass silently.
SynthConfig parse_synth_config(std::string_view text);
CorruptionConfig parse_corruption_config(std::string_view text);
SimulatorConfig parse_simulator_config(std::string_view text);
PipelineConfig parse_pipeline_config(std::string_view text);

template <typename Config>
Config load_config(const std::filesystem::path& path, Config (*parse)(std::string_view));

}  // namespace labelaudit
