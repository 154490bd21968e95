#include "brpsync/common.hpp"

#include <cmath>

namespace brpsync {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::degenerate_fim: return "degenerate_fim";
    case ErrorCode::invalid_regime: return "invalid_regime";
    case ErrorCode::no_root: return "no_root";
    case ErrorCode::undefined_angle: return "undefined_angle";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

double wrap_angle(double x) {
  double r = std::remainder(x, kTwoPi);  // [-pi, pi]
  if (r >= kPi) r -= kTwoPi;
  return r;
}

}  // namespace brpsync
