#pragma once

#include <stdexcept>
#include <string>

namespace darkfringe {

/// Invalid or inconsistent scenario configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Adaptive quadrature hit its order cap without meeting the tolerance.
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Analysis that cannot produce a meaningful result (e.g. every bin masked).
struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace darkfringe
