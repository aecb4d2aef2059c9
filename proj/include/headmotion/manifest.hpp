#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "headmotion/rigid_motion.hpp"

namespace headmotion::io {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view text);

/// Which label a model is trained on or evaluated against.
enum class Target { MotionScore, Drift, Breathing, Noisy };

std::string_view to_string(Target t);
Target parse_target(std::string_view text);

struct BandScores {
  double drift = 0.0;
  double breathing = 0.0;
  double noisy = 0.0;
};

struct ManifestEntry {
  std::string volume;  // as written in the manifest
  std::optional<std::string> log;
  std::optional<rigid::SequenceWindow> window;
  std::optional<double> motion_score;
  std::optional<BandScores> bands;
  std::map<std::string, double> covariates;
  Split split = Split::Train;
};

/// Ordered entries with unique volume paths. `base_dir` resolves relative paths.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<ManifestEntry> entries,
                           std::filesystem::path base_dir = {});

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void add(ManifestEntry entry);

  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  std::filesystem::path resolve(const std::string& path) const;

  std::vector<const ManifestEntry*> split(Split s) const;

 private:
  std::vector<ManifestEntry> entries_;
  std::filesystem::path base_dir_;
};

/// CSV with header
/// `volume,log,window_start,window_end,clock_offset,motion_score,drift,breathing,noisy,age,split`.
/// Empty fields mean absent. Relative paths resolve against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Label for `target`: the stored value when present, otherwise recomputed from the
/// entry's tracking log and window. Throws MissingLabel when neither is available.
double resolve_label(const DatasetManifest& manifest, const ManifestEntry& entry, Target target);

}  // namespace headmotion::io
