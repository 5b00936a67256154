#pragma once

// JSON conversions for the library's interchange types (nlohmann ADL hooks).

#include <filesystem>

#include <json.hpp>

#include "camflow/evaluation.hpp"
#include "camflow/robustfit.hpp"
#include "camflow/synth.hpp"

namespace camflow {

using json = nlohmann::json;

// Homography: [h1, ..., h9], h9 = 1.
void to_json(json& j, const Homography& H);
void from_json(const json& j, Homography& H);

// PointPairs: {"src": [[x, y], ...], "dst": [[x, y], ...]}.
void to_json(json& j, const PointPairs& p);
void from_json(const json& j, PointPairs& p);

void to_json(json& j, const FitConfig& cfg);
void from_json(const json& j, FitConfig& cfg);  // missing keys keep defaults

void to_json(json& j, const FitReport& r);
void to_json(json& j, const MetricReport& r);

void to_json(json& j, const Region& r);
void from_json(const json& j, Region& r);  // "all", {"rect": [...]}, {"halfplanes": [...]}

void to_json(json& j, const SceneSpec& s);
void from_json(const json& j, SceneSpec& s);

/// Reads and parses a JSON file; FormatError on failure.
json read_json_file(const std::filesystem::path& path);
void write_json_file(const json& j, const std::filesystem::path& path);

}  // namespace camflow
