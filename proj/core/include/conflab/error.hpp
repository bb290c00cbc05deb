#pragma once

#include <stdexcept>
#include <string>

namespace conflab {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  Input,         // malformed arguments, violated preconditions
  Format,        // unreadable or inconsistent files
  Geometry,      // ill-posed geometric request (antipodal midpoint, ...)
  Numeric,       // non-convergence, bracket failure, contraction violation
  Integration,   // quadrature produced too many non-finite samples
  Resource,      // point/memory budgets exceeded
  Construction,  // graph construction failure (disconnected, ...)
  Unsupported,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CONFLAB_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

CONFLAB_DEFINE_ERROR(InputError, Input)
CONFLAB_DEFINE_ERROR(FormatError, Format)
CONFLAB_DEFINE_ERROR(GeometryError, Geometry)
CONFLAB_DEFINE_ERROR(NumericError, Numeric)
CONFLAB_DEFINE_ERROR(IntegrationError, Integration)
CONFLAB_DEFINE_ERROR(ResourceError, Resource)
CONFLAB_DEFINE_ERROR(ConstructionError, Construction)
CONFLAB_DEFINE_ERROR(UnsupportedError, Unsupported)

#undef CONFLAB_DEFINE_ERROR

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Input: return "input";
    case ErrorKind::Format: return "format";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Integration: return "integration";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::Construction: return "construction";
    case ErrorKind::Unsupported: return "unsupported";
  }
  return "unknown";
}

}  // namespace conflab
