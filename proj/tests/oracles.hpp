#pragma once

// Reference computations used by the tests. Each one is deliberately naive
// and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Exhaustive search over transport plans whose entries are integer multiples
// of `unit`, for integer marginals r_units / c_units (equal totals). Branches
// whose partial cost already exceeds the best complete plan are cut; the
// returned value is the exact minimum over the grid.
inline double grid_transport_min(const Eigen::MatrixXd& cost, std::vector<int> r_units, std::vector<int> c_units,
                                 double unit) {
  const int nr = static_cast<int>(r_units.size());
  const int nc = static_cast<int>(c_units.size());
  double best = std::numeric_limits<double>::infinity();
  struct Search {
    const Eigen::MatrixXd& cost;
    std::vector<int>& rows;
    std::vector<int>& cols;
    int nr, nc;
    double unit;
    double& best;
    void go(int cell, double acc) {
      if (acc >= best + 1e-15) return;
      if (cell == nr * nc) {
        best = std::min(best, acc);
        return;
      }
      const int i = cell / nc, j = cell % nc;
      const bool last_col = j == nc - 1;
      const bool last_row = i == nr - 1;
      int lo = 0, hi = std::min(rows[i], cols[j]);
      if (last_col) lo = rows[i];  // row must be filled by its final cell
      if (last_row) lo = std::max(lo, cols[j]);
      if (lo > hi) return;
      if (last_col && rows[i] > hi) return;
      for (int v = lo; v <= hi; ++v) {
        if (last_col && v != rows[i]) continue;
        if (last_row && v != cols[j]) continue;
        rows[i] -= v;
        cols[j] -= v;
        go(cell + 1, acc + v * unit * cost(i, j));
        rows[i] += v;
        cols[j] += v;
      }
    }
  } s{cost, r_units, c_units, nr, nc, unit, best};
  s.go(0, 0.0);
  return best;
}

// W1 between two weighted point sets on the real line as the integral of
// |F(t) - G(t)|.
inline double wasserstein_1d(const std::vector<double>& xs, const std::vector<double>& ps,
                             const std::vector<double>& ys, const std::vector<double>& qs) {
  std::vector<std::pair<double, double>> ev;  // (position, signed mass)
  for (std::size_t i = 0; i < xs.size(); ++i) ev.emplace_back(xs[i], ps[i]);
  for (std::size_t j = 0; j < ys.size(); ++j) ev.emplace_back(ys[j], -qs[j]);
  std::sort(ev.begin(), ev.end());
  double diff = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    diff += ev[k].second;
    total += std::abs(diff) * (ev[k + 1].first - ev[k].first);
  }
  return total;
}

}  // namespace oracle
