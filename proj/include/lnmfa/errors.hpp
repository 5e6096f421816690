#pragma once

#include <stdexcept>
#include <string>

namespace lnmfa {

/// Numerical failure (non-SPD matrix, impossible ELBO, ...). Carries context
/// about the computation that failed.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// A mixture component collapsed below the minimum effective size.
struct DegenerateComponentError : std::runtime_error {
  explicit DegenerateComponentError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace lnmfa
