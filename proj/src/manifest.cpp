#include "headmotion/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "headmotion/bandsplit.hpp"
#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"
#include "headmotion/volume_io.hpp"

namespace headmotion::io {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  text = detail::trim(text);
  if (text == "train") return Split::Train;
  if (text == "validation") return Split::Validation;
  if (text == "test") return Split::Test;
  throw Error(ErrorKind::UnknownSplit, "unknown split '" + std::string(text) + "'");
}

std::string_view to_string(Target t) {
  switch (t) {
    case Target::MotionScore: return "motion_score";
    case Target::Drift: return "drift";
    case Target::Breathing: return "breathing";
    case Target::Noisy: return "noisy";
  }
  return "motion_score";
}

Target parse_target(std::string_view text) {
  if (text == "motion_score") return Target::MotionScore;
  if (text == "drift") return Target::Drift;
  if (text == "breathing") return Target::Breathing;
  if (text == "noisy") return Target::Noisy;
  throw Error(ErrorKind::Config, "unknown target '" + std::string(text) + "'");
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries, std::filesystem::path base_dir)
    : base_dir_(std::move(base_dir)) {
  for (auto& e : entries) add(std::move(e));
}

void DatasetManifest::add(ManifestEntry entry) {
  for (const auto& e : entries_) {
    if (e.volume == entry.volume) {
      throw Error(ErrorKind::DuplicatePath, "volume path listed twice: " + entry.volume);
    }
  }
  entries_.push_back(std::move(entry));
}

std::filesystem::path DatasetManifest::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

std::vector<const ManifestEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries_) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

namespace {

constexpr std::string_view kHeader =
    "volume,log,window_start,window_end,clock_offset,motion_score,drift,breathing,noisy,age,split";

std::optional<double> optional_number(std::string_view field, std::size_t row, const char* name) {
  field = detail::trim(field);
  if (field.empty()) return std::nullopt;
  const auto v = detail::parse_double(field);
  if (!v || !std::isfinite(*v)) {
    throw Error(ErrorKind::Parse, std::string("manifest row ") + std::to_string(row) + ": " + name +
                                      " is not a number");
  }
  return v;
}

std::string opt(const std::optional<double>& v) { return v ? detail::format_double(*v) : ""; }

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kHeader) {
    throw Error(ErrorKind::Parse, path.string() + ": header must be '" + std::string(kHeader) + "'");
  }
  DatasetManifest manifest({}, path.parent_path());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 11) {
      throw Error(ErrorKind::Parse, "manifest row " + std::to_string(row) + " has " +
                                        std::to_string(f.size()) + " fields, expected 11");
    }
    ManifestEntry e;
    e.volume = std::string(detail::trim(f[0]));
    if (e.volume.empty()) throw Error(ErrorKind::Parse, "manifest row " + std::to_string(row) + ": empty volume");
    if (const auto log = detail::trim(f[1]); !log.empty()) e.log = std::string(log);
    const auto start = optional_number(f[2], row, "window_start");
    const auto end = optional_number(f[3], row, "window_end");
    const auto offset = optional_number(f[4], row, "clock_offset");
    if (start.has_value() != end.has_value()) {
      throw Error(ErrorKind::Parse, "manifest row " + std::to_string(row) +
                                        ": window_start and window_end must both be present");
    }
    if (start) e.window = rigid::SequenceWindow(*start, *end, offset.value_or(0.0));
    e.motion_score = optional_number(f[5], row, "motion_score");
    const auto drift = optional_number(f[6], row, "drift");
    const auto breathing = optional_number(f[7], row, "breathing");
    const auto noisy = optional_number(f[8], row, "noisy");
    if (drift || breathing || noisy) {
      if (!(drift && breathing && noisy)) {
        throw Error(ErrorKind::Parse, "manifest row " + std::to_string(row) +
                                          ": band scores must be all present or all absent");
      }
      e.bands = BandScores{*drift, *breathing, *noisy};
    }
    if (const auto age = optional_number(f[9], row, "age")) e.covariates["age"] = *age;
    e.split = parse_split(f[10]);
    manifest.add(std::move(e));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << kHeader << '\n';
  for (const auto& e : manifest.entries()) {
    std::optional<double> start, end, offset, drift, breathing, noisy, age;
    if (e.window) {
      start = e.window->start;
      end = e.window->end;
      offset = e.window->clock_offset;
    }
    if (e.bands) {
      drift = e.bands->drift;
      breathing = e.bands->breathing;
      noisy = e.bands->noisy;
    }
    if (auto it = e.covariates.find("age"); it != e.covariates.end()) age = it->second;
    out << e.volume << ',' << e.log.value_or("") << ',' << opt(start) << ',' << opt(end) << ','
        << opt(offset) << ',' << opt(e.motion_score) << ',' << opt(drift) << ',' << opt(breathing)
        << ',' << opt(noisy) << ',' << opt(age) << ',' << to_string(e.split) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

double resolve_label(const DatasetManifest& manifest, const ManifestEntry& entry, Target target) {
  if (target == Target::MotionScore && entry.motion_score) return *entry.motion_score;
  if (target != Target::MotionScore && entry.bands) {
    switch (target) {
      case Target::Drift: return entry.bands->drift;
      case Target::Breathing: return entry.bands->breathing;
      default: return entry.bands->noisy;
    }
  }
  if (!entry.log) {
    throw Error(ErrorKind::MissingLabel, entry.volume + ": no " + std::string(to_string(target)) +
                                             " label and no tracking log");
  }
  const auto traj = read_tracking_log(manifest.resolve(*entry.log));
  rigid::SequenceWindow window;
  if (entry.window) {
    window = *entry.window;
  } else {
    window = rigid::SequenceWindow(traj.samples().front().time, traj.samples().back().time);
  }
  if (target == Target::MotionScore) return rigid::sequence_motion_score(traj, window).value;
  const auto bands = bands::trajectory_band_targets(traj, bands::BandSpec{}, window);
  switch (target) {
    case Target::Drift: return bands.drift.value;
    case Target::Breathing: return bands.breathing.value;
    default: return bands.noisy.value;
  }
}

}  // namespace headmotion::io
