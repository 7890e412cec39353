#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "savid/pipeline.hpp"

namespace savid {

inline constexpr const char* kReportSchema = "savid-report/1";

/// Table, derived AP_corr / RCE (null while cells are missing) and the
/// per-cell failures.
nlohmann::json robustness_to_json(const RobustnessReport& report, const PipelineConfig& config);

/// Inverse of robustness_to_json for the stored fields; derived values are
/// recomputed rather than read back.
RobustnessReport robustness_from_json(const nlohmann::json& doc);

/// One row per (kind, severity) with AP and RCE; blank where unavailable.
std::string rce_curves_csv(const RobustnessReport& report);

/// Writes robustness.json and rce_curves.csv into `dir`, creating it.
void emit_report(const RobustnessReport& report, const PipelineConfig& config, const std::filesystem::path& dir);

/// Shapes, per-frame summary statistics and stage timings of a forward run.
nlohmann::json forward_to_json(const ForwardOutputs& outputs, const PipelineConfig& config);

/// Writes forward.json plus F_I, F_L, F_S and F_KGF of every frame as
/// tensor files into `dir`.
void emit_forward(const ForwardOutputs& outputs, const PipelineConfig& config, const std::filesystem::path& dir);

/// Writes `text` to `path`, throwing ValidationError if the file cannot be
/// written.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace savid
