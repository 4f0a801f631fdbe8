#pragma once

#include <stdexcept>
#include <string>

namespace avgspde {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// The requested operation has no implementation for this model family.
struct UnsupportedOperation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Not enough usable data to produce an estimate (e.g. a fit with too few points).
struct EstimationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or hypothesis-violating experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace avgspde
