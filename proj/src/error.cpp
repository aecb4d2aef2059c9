#include "headmotion/error.hpp"

namespace headmotion {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidTransform: return "invalid-transform";
    case ErrorKind::DegenerateInterval: return "degenerate-interval";
    case ErrorKind::EmptyWindow: return "empty-window";
    case ErrorKind::IrregularSampling: return "irregular-sampling";
    case ErrorKind::FilterDesign: return "filter-design";
    case ErrorKind::InsufficientLength: return "insufficient-length";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::UnsupportedDatatype: return "unsupported-datatype";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::InvalidVolume: return "invalid-volume";
    case ErrorKind::NonMonotonic: return "non-monotonic";
    case ErrorKind::NonRigidRow: return "non-rigid-row";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DuplicatePath: return "duplicate-path";
    case ErrorKind::UnknownSplit: return "unknown-split";
    case ErrorKind::MissingLabel: return "missing-label";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::InfiniteLoss: return "infinite-loss";
    case ErrorKind::Config: return "config";
    case ErrorKind::MissingCache: return "missing-cache";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::ScheduleMismatch: return "schedule-mismatch";
    case ErrorKind::ConstantInput: return "constant-input";
    case ErrorKind::NoEdges: return "no-edges";
    case ErrorKind::SingleClass: return "single-class";
    case ErrorKind::MissingCovariate: return "missing-covariate";
    case ErrorKind::MissingRows: return "missing-rows";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace headmotion

#include <iostream>
#include <mutex>

#include "headmotion/log.hpp"

namespace headmotion {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  auto previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

void log_warning(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace headmotion
