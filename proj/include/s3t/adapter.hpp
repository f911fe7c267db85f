#pragma once

// Dataset manifests and the train/infer boundary to an external detector.

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3t/detstream.hpp"

namespace s3t {

enum class AnnotationSource { human, model };

std::string to_string(AnnotationSource s);
AnnotationSource annotation_source_from_string(const std::string& s);

struct ManifestEntry {
  FrameId frame_id = 0;
  AnnotationSource source = AnnotationSource::human;
  int iteration_added = 0;
  bool operator==(const ManifestEntry&) const = default;
};

/// Ordered list of frames with annotation provenance; frame ids are distinct.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<ManifestEntry> entries);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(FrameId id) const;
  std::vector<FrameId> frame_ids() const;

  /// Throws std::invalid_argument if the frame is already present.
  void add(const ManifestEntry& entry);

  bool operator==(const DatasetManifest&) const = default;

 private:
  std::vector<ManifestEntry> entries_;
};

nlohmann::json to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const nlohmann::json& j);
void write_manifest(std::ostream& out, const DatasetManifest& m);
DatasetManifest read_manifest(std::istream& in, const std::string& source = "<manifest>");

/// Labels for training frames.
using Annotations = std::map<FrameId, std::vector<GtObject>>;

struct ModelHandle {
  std::string id;
  std::size_t train_size = 0;
  bool operator==(const ModelHandle&) const = default;
};

class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The detector being refined. infer() must be deterministic for a given
/// model handle and frame.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;
  virtual ModelHandle train(const DatasetManifest& manifest, const Annotations& annotations) = 0;
  virtual DetectionStream infer(const ModelHandle& model, const std::vector<FrameId>& frames) = 0;
};

/// Runs configured shell commands. Placeholders substituted in the
/// templates: {train_manifest}, {annotations}, {frames_in}, {detections_out},
/// {model}. The train command prints the model id on stdout; the infer
/// command writes a detection stream to {detections_out}.
struct CommandTemplates {
  std::string train;
  std::string infer;
  std::string workdir = ".";
};

class CommandAdapter : public DetectorAdapter {
 public:
  explicit CommandAdapter(CommandTemplates templates);
  ModelHandle train(const DatasetManifest& manifest, const Annotations& annotations) override;
  DetectionStream infer(const ModelHandle& model, const std::vector<FrameId>& frames) override;

 private:
  CommandTemplates templates_;
  int calls_ = 0;
};

std::string substitute(std::string templ, const std::map<std::string, std::string>& values);

}  // namespace s3t
