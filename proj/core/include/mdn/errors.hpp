#pragma once

#include <stdexcept>
#include <string>

namespace mdn {

// Malformed or inconsistent input data (files, manifests, field values).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric breakdown: non-finite loss, divergence, failed line search where fatal.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mdn
