#pragma once

#include <cstddef>
#include <vector>

namespace metalda {

// Lower-triangular table of log S(m, t), unsigned Stirling numbers of the
// first kind, grown on demand up to max_m rows. log S(m, 0) = -inf for m > 0.
class StirlingTable {
 public:
  explicit StirlingTable(std::size_t max_m = 10000);

  std::size_t max_m() const { return max_m_; }
  std::size_t rows() const { return rows_.size(); }

  // Extends the table through row m. Throws Error if m > max_m.
  void ensure(std::size_t m);

  // Requires m < rows() and t <= m.
  double log_s(std::size_t m, std::size_t t) const { return rows_[m][t]; }

 private:
  std::size_t max_m_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace metalda
