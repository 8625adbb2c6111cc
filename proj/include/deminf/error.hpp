#pragma once

#include <stdexcept>
#include <string>

namespace deminf {

/// Training divergence or a non-finite intermediate. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input files (JSONL, config, CSV).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deminf
