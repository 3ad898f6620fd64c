#pragma once

#include <stdexcept>
#include <string>

namespace fusionkit {

// Malformed or unsupported input data (file contents, headers, records).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical / domain failures: unanchored systems, solver breakdown,
// divergence, empty overlaps.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fusionkit
