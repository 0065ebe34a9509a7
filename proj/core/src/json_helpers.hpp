#pragma once

// Internal JSON converters shared between fitting and dataset I/O. Not
// installed.

#include <json.hpp>

#include "uvtrack/fitting.hpp"

namespace uvtrack::detail {

nlohmann::json vec3_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);

nlohmann::json state_json(const DeformationState& state);
DeformationState state_from_json(const nlohmann::json& j);

nlohmann::json fit_report_json(const FitReport& report, bool include_timing);
FitReport fit_report_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace uvtrack::detail
