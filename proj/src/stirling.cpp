#include "metalda/stirling.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "metalda/error.hpp"

namespace metalda {

namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace

StirlingTable::StirlingTable(std::size_t max_m) : max_m_(max_m) {
  rows_.push_back({0.0});  // S(0, 0) = 1
}

void StirlingTable::ensure(std::size_t m) {
  if (m > max_m_) {
    throw Error("Stirling table limited to m <= " + std::to_string(max_m_) + ", asked for " +
                std::to_string(m));
  }
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  while (rows_.size() <= m) {
    const std::size_t n = rows_.size();  // building row n from row n - 1
    const auto& prev = rows_.back();
    const double log_nm1 = std::log(static_cast<double>(n - 1));
    std::vector<double> row(n + 1, ninf);
    // S(n, t) = S(n-1, t-1) + (n-1) S(n-1, t)
    for (std::size_t t = 1; t <= n; ++t) {
      const double carry = prev[t - 1];
      const double stay = t <= n - 1 ? log_nm1 + prev[t] : ninf;
      row[t] = log_add(carry, stay);
    }
    rows_.push_back(std::move(row));
  }
}

}  // namespace metalda
