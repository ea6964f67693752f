#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace texton {

using Index = std::int64_t;
using Shape = std::vector<Index>;

// Shape or dimensionality violations (channel mismatch, bad extents).
class ShapeError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad run configuration (unknown key, incompatible selection/aggregator).
class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File read/write failures; message carries the path.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (loss, gradients).
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace texton
