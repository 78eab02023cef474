#pragma once

#include <filesystem>

#include <json.hpp>

#include "d2tpt/pipeline.hpp"

namespace d2tpt {

// Every RunConfig field, so a run can be reproduced from its report.
nlohmann::json config_to_json(const RunConfig& config);

// {accuracy, baseline_accuracy, num_samples, per_class, mean_losses,
//  config_echo, seed, ...}. Contains nothing run-dependent beyond the inputs,
// so identical runs serialize to identical bytes.
nlohmann::json report_to_json(const AdaptationReport& report);

void write_report(const AdaptationReport& report, const std::filesystem::path& path);

}  // namespace d2tpt
