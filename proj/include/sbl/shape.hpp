#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sbl/errors.hpp"

namespace sbl {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline void check_shape_valid(const Shape& s, const char* what) {
  for (int64_t d : s)
    if (d <= 0)
      throw DimensionError(std::string(what) + ": non-positive extent in shape " + shape_str(s));
}

// Resolves a possibly negative axis; axis == rank-1 is the innermost.
inline int resolve_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  return a;
}

}  // namespace sbl
