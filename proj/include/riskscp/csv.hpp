#pragma once

#include <Eigen/Core>
#include <fmt/format.h>

#include <ostream>
#include <string_view>

namespace riskscp::csv {

/// Shortest representation that round-trips to the same double.
inline void put(std::ostream& out, double value) { out << fmt::format("{}", value); }

inline void header(std::ostream& out, std::string_view fixed, std::string_view prefix, int count) {
  out << fixed;
  for (int c = 0; c < count; ++c) out << ',' << prefix << c;
  out << '\n';
}

template <typename Row>
void values(std::ostream& out, const Row& row) {
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    out << ',';
    put(out, row(c));
  }
}

}  // namespace riskscp::csv
