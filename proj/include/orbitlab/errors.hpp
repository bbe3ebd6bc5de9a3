#pragma once

#include <stdexcept>
#include <string>

namespace orbitlab {

/// Base for every error thrown by the library.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failures; the CLI maps these to exit code 3.
struct numerical_error : error {
  using error::error;
};

/// NAN-bar decomposition requested on (or too close to) the d = 0 set.
struct degenerate_coordinate : numerical_error {
  using numerical_error::numerical_error;
};

/// Norm budget too large for exact 64-bit entries.
struct budget_overflow : numerical_error {
  using numerical_error::numerical_error;
};

/// Gauss reduction did not terminate.
struct non_convergence : numerical_error {
  using numerical_error::numerical_error;
};

/// Gamma_T intersected with the filter is empty.
struct empty_budget : error {
  using error::error;
};

/// Not enough trace points for an exponent fit.
struct insufficient_data : error {
  using error::error;
};

/// Invalid parameters; the CLI maps these to exit code 2.
struct config_error : error {
  using error::error;
};

}  // namespace orbitlab
