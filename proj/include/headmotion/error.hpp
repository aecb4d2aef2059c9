#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace headmotion {

/// Machine-readable reason attached to every rejection raised by the library.
enum class ErrorKind {
  InvalidTransform,
  DegenerateInterval,
  EmptyWindow,
  IrregularSampling,
  FilterDesign,
  InsufficientLength,
  BadMagic,
  UnsupportedDatatype,
  Truncated,
  InvalidVolume,
  NonMonotonic,
  NonRigidRow,
  Parse,
  DuplicatePath,
  UnknownSplit,
  MissingLabel,
  ShapeMismatch,
  DegenerateInput,
  NonFinite,
  InfiniteLoss,
  Config,
  MissingCache,
  EmptySplit,
  Integrity,
  ScheduleMismatch,
  ConstantInput,
  NoEdges,
  SingleClass,
  MissingCovariate,
  MissingRows,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace headmotion
