#include "etl/common.hpp"

namespace etl {

const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::invalid_shape: return "invalid-shape";
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::config: return "config";
    case ErrorCategory::training_diverged: return "training-diverged";
    case ErrorCategory::pairing: return "pairing";
    case ErrorCategory::split: return "split";
    case ErrorCategory::evaluation: return "evaluation";
    case ErrorCategory::analysis: return "analysis";
    case ErrorCategory::generation: return "generation";
  }
  return "unknown";
}

}  // namespace etl
