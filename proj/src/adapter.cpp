#include "s3t/adapter.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "s3t/fileio.hpp"

namespace s3t {

using nlohmann::json;

std::string to_string(AnnotationSource s) { return s == AnnotationSource::model ? "model" : "human"; }

AnnotationSource annotation_source_from_string(const std::string& s) {
  if (s == "human") return AnnotationSource::human;
  if (s == "model") return AnnotationSource::model;
  throw InvariantError("annotation_source", "expected human or model, got '" + s + "'");
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries) {
  for (const auto& e : entries) add(e);
}

bool DatasetManifest::contains(FrameId id) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [id](const ManifestEntry& e) { return e.frame_id == id; });
}

std::vector<FrameId> DatasetManifest::frame_ids() const {
  std::vector<FrameId> ids;
  ids.reserve(entries_.size());
  for (const auto& e : entries_) ids.push_back(e.frame_id);
  return ids;
}

void DatasetManifest::add(const ManifestEntry& entry) {
  if (contains(entry.frame_id))
    throw std::invalid_argument("duplicate frame_id " + std::to_string(entry.frame_id) +
                                " in manifest");
  entries_.push_back(entry);
}

json to_json(const ManifestEntry& e) {
  return {{"frame_id", e.frame_id},
          {"annotation_source", to_string(e.source)},
          {"iteration_added", e.iteration_added}};
}

ManifestEntry manifest_entry_from_json(const json& j) {
  return {j.at("frame_id").get<FrameId>(),
          annotation_source_from_string(j.at("annotation_source").get<std::string>()),
          j.at("iteration_added").get<int>()};
}

void write_manifest(std::ostream& out, const DatasetManifest& m) {
  for (const auto& e : m.entries()) out << to_json(e).dump() << '\n';
}

DatasetManifest read_manifest(std::istream& in, const std::string& source) {
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.add(manifest_entry_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return m;
}

std::string substitute(std::string templ, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (std::size_t pos = templ.find(token); pos != std::string::npos;
         pos = templ.find(token, pos + value.size()))
      templ.replace(pos, token.size(), value);
  }
  return templ;
}

namespace {

// Runs a shell command, returning its stdout; throws on a non-zero exit.
std::string run_command(const std::string& cmd) {
  std::string out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw AdapterError("cannot start: " + cmd);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status != 0)
    throw AdapterError("command failed (status " + std::to_string(status) + "): " + cmd);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

CommandAdapter::CommandAdapter(CommandTemplates templates) : templates_(std::move(templates)) {
  if (templates_.train.empty() || templates_.infer.empty())
    throw std::invalid_argument("adapter needs both train and infer command templates");
}

ModelHandle CommandAdapter::train(const DatasetManifest& manifest,
                                  const Annotations& annotations) {
  namespace fs = std::filesystem;
  fs::create_directories(templates_.workdir);
  const std::string tag = std::to_string(calls_++);
  const std::string manifest_path = (fs::path(templates_.workdir) / ("train_" + tag + ".jsonl"));
  const std::string annotations_path =
      (fs::path(templates_.workdir) / ("annotations_" + tag + ".jsonl"));

  std::ostringstream m;
  write_manifest(m, manifest);
  write_file_atomic(manifest_path, m.str());
  GroundTruth labels;
  for (const auto& [frame, objs] : annotations) labels.frames[frame] = objs;
  save_ground_truth(annotations_path, labels);

  const std::string out = run_command(substitute(
      templates_.train, {{"train_manifest", manifest_path}, {"annotations", annotations_path}}));
  ModelHandle handle{trim(out), manifest.size()};
  if (handle.id.empty()) handle.id = "model-" + tag;
  return handle;
}

DetectionStream CommandAdapter::infer(const ModelHandle& model, const std::vector<FrameId>& frames) {
  namespace fs = std::filesystem;
  fs::create_directories(templates_.workdir);
  const std::string tag = std::to_string(calls_++);
  const std::string frames_path = (fs::path(templates_.workdir) / ("frames_" + tag + ".txt"));
  const std::string detections_path =
      (fs::path(templates_.workdir) / ("detections_" + tag + ".jsonl"));

  std::ostringstream f;
  for (FrameId id : frames) f << id << '\n';
  write_file_atomic(frames_path, f.str());
  run_command(substitute(templates_.infer, {{"frames_in", frames_path},
                                            {"detections_out", detections_path},
                                            {"model", model.id}}));
  return load_stream(detections_path);
}

}  // namespace s3t
