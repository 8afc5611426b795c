#pragma once

#include <stdexcept>
#include <string>

namespace prunegraph {

enum class ErrorKind {
  Parse,
  Schema,
  Integrity,
  Io,
  ShapeMismatch,
  TruncatedBlob,
  Runtime,
  NonFinite,
  DeclarationConflict,
  Unmappable,
  MissingInterfaces,
  MissingWeights,
  SizeCap,
  InvalidArgument,
  Internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace prunegraph
