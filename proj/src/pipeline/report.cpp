#include "savid/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "savid/errors.hpp"
#include "savid/io.hpp"

namespace savid {

namespace {

using nlohmann::json;

const char* asmn_mode_name(AsmnMode m) { return m == AsmnMode::attention ? "attention" : "elementwise"; }

json config_summary(const PipelineConfig& c) {
  return {
      {"channels", c.channels},
      {"heads", c.heads},
      {"window", c.window},
      {"sequence_length", c.sequence_length},
      {"image_size", {c.image_height, c.image_width}},
      {"grid_dims", c.grid_dims},
      {"keypoints", c.keypoints},
      {"model_seed", c.model_seed},
      {"scene_seed", c.scene_seed},
      {"corruption_seed", c.corruption_seed},
      {"num_objects", c.num_objects},
      {"range_m", c.range_m},
      {"asmn_mode", asmn_mode_name(c.asmn_mode)},
      {"asmn_sparsity", c.asmn_sparsity},
      {"kgf_cosine", c.kgf.cosine == CosineMode::paper ? "paper" : "standard"},
      {"kgf_neighbors", c.kgf.neighbors.mode == NeighborMode::window3x3 ? "window3x3" : "knn"},
      {"kgf_k", c.kgf.neighbors.k},
      {"stages", {{"gman", c.use_gman}, {"asmn", c.use_asmn}, {"kgf", c.use_kgf}}},
      {"nms_iou", {c.nms_proposal_iou, c.nms_final_iou}},
      {"ap_iou", c.ap_iou},
      {"ap_mode", c.ap_mode == ApMode::interp101 ? "interp101" : "exact"},
  };
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json tensor_stats(const Tensor& t) {
  double sum = 0.0;
  for (double v : t.data()) sum += v;
  return {{"shape", t.shape()}, {"mean", t.empty() ? 0.0 : sum / static_cast<double>(t.size())}, {"max_abs", max_abs(t)}};
}

}  // namespace

json robustness_to_json(const RobustnessReport& report, const PipelineConfig& config) {
  json doc;
  doc["schema"] = kReportSchema;
  doc["kind"] = "robustness";
  doc["config"] = config_summary(config);
  doc["detections"] = {{"provider", report.provider}, {"paper_method", report.paper_method}};
  if (!report.paper_method) {
    doc["detections"]["note"] = "stand-in detector for exercising the metrics; not the evaluated method";
  }

  const bool clean = !report.clean_failure.has_value();
  doc["ap_cln"] = clean ? json(report.table.ap_cln) : json(nullptr);
  json ap = json::object();
  for (const auto& [key, value] : report.table.ap) ap[std::string(corruption_name(key.kind))][std::to_string(key.severity)] = value;
  doc["ap"] = ap;

  json missing = json::array();
  for (const auto& key : missing_cells(report.table, kCorruptionKinds)) missing.push_back(to_string(key));
  doc["missing"] = missing;
  json failures = json::object();
  if (report.clean_failure) failures["clean"] = *report.clean_failure;
  for (const auto& [key, why] : report.failures) failures[to_string(key)] = why;
  doc["failures"] = failures;

  const bool rce_defined = clean && report.table.ap_cln > 0.0;
  json rce_cells = json::object();
  if (rce_defined) {
    for (const auto& [key, value] : report.table.ap) {
      rce_cells[std::string(corruption_name(key.kind))][std::to_string(key.severity)] = rce(report.table.ap_cln, value);
    }
  }
  doc["rce_cells"] = rce_cells;
  if (missing.empty() && !report.table.ap.empty()) {
    const double corr = ap_corr(report.table, kCorruptionKinds);
    doc["ap_corr"] = corr;
    doc["rce"] = rce_defined ? json(rce(report.table.ap_cln, corr)) : json(nullptr);
  } else {
    doc["ap_corr"] = nullptr;
    doc["rce"] = nullptr;
  }
  return doc;
}

RobustnessReport robustness_from_json(const json& doc) {
  try {
    if (doc.at("schema") != kReportSchema) throw ValidationError("unsupported report schema");
    RobustnessReport report;
    report.provider = doc.at("detections").at("provider").get<std::string>();
    report.paper_method = doc.at("detections").at("paper_method").get<bool>();
    if (!doc.at("ap_cln").is_null()) report.table.ap_cln = doc.at("ap_cln").get<double>();
    for (const auto& [kind, by_severity] : doc.at("ap").items()) {
      for (const auto& [severity, value] : by_severity.items()) {
        report.table.ap[{parse_corruption_kind(kind), std::stoi(severity)}] = value.get<double>();
      }
    }
    for (const auto& [key, why] : doc.at("failures").items()) {
      if (key == "clean") {
        report.clean_failure = why.get<std::string>();
        continue;
      }
      const auto slash = key.find('/');
      if (slash == std::string::npos) throw ValidationError("bad failure key " + key);
      report.failures[{parse_corruption_kind(key.substr(0, slash)), std::stoi(key.substr(slash + 1))}] =
          why.get<std::string>();
    }
    return report;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

std::string rce_curves_csv(const RobustnessReport& report) {
  std::ostringstream out;
  out << "kind,severity,ap,rce\n";
  const bool rce_defined = !report.clean_failure && report.table.ap_cln > 0.0;
  for (CorruptionKind kind : kCorruptionKinds) {
    for (int s = 1; s <= kSeverityLevels; ++s) {
      out << corruption_name(kind) << ',' << s << ',';
      const auto it = report.table.ap.find({kind, s});
      if (it != report.table.ap.end()) {
        out << number(it->second) << ',';
        if (rce_defined) out << number(rce(report.table.ap_cln, it->second));
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw ValidationError("write to " + path.string() + " failed");
}

void emit_report(const RobustnessReport& report, const PipelineConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "robustness.json", robustness_to_json(report, config).dump(2) + "\n");
  write_text_file(dir / "rce_curves.csv", rce_curves_csv(report));
}

json forward_to_json(const ForwardOutputs& outputs, const PipelineConfig& config) {
  json doc;
  doc["schema"] = kReportSchema;
  doc["kind"] = "forward";
  doc["config"] = config_summary(config);
  json frames = json::array();
  for (const FrameOutputs& f : outputs.frames) {
    frames.push_back({
        {"depth_valid", f.depth.valid_count()},
        {"keypoints", f.keypoints.size()},
        {"image_features", tensor_stats(f.image_features)},
        {"lidar_features", tensor_stats(f.lidar_features)},
        {"fused", tensor_stats(f.fused)},
        {"output", tensor_stats(f.output)},
    });
  }
  doc["frames"] = frames;
  doc["lstm_states"] = {{"gman", outputs.gman_states.size()}, {"asmn", outputs.asmn_states.size()}};
  doc["timings_s"] = {{"depth", outputs.timings.depth},
                      {"gman", outputs.timings.gman},
                      {"lidar", outputs.timings.lidar},
                      {"asmn", outputs.timings.asmn},
                      {"kgf", outputs.timings.kgf}};
  return doc;
}

void emit_forward(const ForwardOutputs& outputs, const PipelineConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "forward.json", forward_to_json(outputs, config).dump(2) + "\n");
  for (std::size_t f = 0; f < outputs.frames.size(); ++f) {
    const FrameOutputs& fo = outputs.frames[f];
    const std::string stem = "frame" + std::to_string(f + 1) + "_";
    save_tensor(dir / (stem + "image_features.svtn"), fo.image_features);
    save_tensor(dir / (stem + "lidar_features.svtn"), fo.lidar_features);
    save_tensor(dir / (stem + "fused.svtn"), fo.fused);
    save_tensor(dir / (stem + "kgf.svtn"), fo.output);
  }
}

}  // namespace savid
