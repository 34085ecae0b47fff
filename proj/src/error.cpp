#include "ucoassoc/error.hpp"

namespace ucoassoc {

std::string_view error_class_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kSolver: return "solver";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kState: return "state";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kSamplingExhausted: return "sampling_exhausted";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace ucoassoc
