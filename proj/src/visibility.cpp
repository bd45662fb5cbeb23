#include "attdicnn/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace attdicnn::vg {

namespace {

void check_finite(const std::vector<double>& series) {
  for (std::size_t i = 0; i < series.size(); ++i)
    if (!std::isfinite(series[i]))
      throw std::invalid_argument("non-finite sample at index " + std::to_string(i));
}

// Sample k blocks the pair (i, j) when it does not lie strictly below the
// segment between them.
bool blocks(const std::vector<double>& s, std::size_t i, std::size_t j, std::size_t k) {
  double ti = static_cast<double>(i), tj = static_cast<double>(j),
         tk = static_cast<double>(k);
  return s[k] >= s[j] + (s[i] - s[j]) * (tj - tk) / (tj - ti);
}

void sort_edges(VisibilityGraph& g) {
  std::sort(g.edges.begin(), g.edges.end());
}

}  // namespace

VisibilityGraph build_nvg_naive(const std::vector<double>& series) {
  check_finite(series);
  VisibilityGraph g;
  g.n_vertices = series.size();
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    for (std::size_t j = i + 1; j < series.size(); ++j) {
      bool visible = true;
      for (std::size_t k = i + 1; k < j && visible; ++k)
        visible = !blocks(series, i, j, k);
      if (visible) g.edges.emplace_back(i, j);
    }
  }
  sort_edges(g);
  return g;
}

VisibilityGraph build_nvg_fast(const std::vector<double>& series) {
  check_finite(series);
  VisibilityGraph g;
  g.n_vertices = series.size();
  if (series.size() < 2) return g;

  // Explicit work stack; a monotone series would otherwise recurse n deep.
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, series.size() - 1}};
  while (!stack.empty()) {
    auto [lo, hi] = stack.back();
    stack.pop_back();
    if (lo >= hi) continue;

    // leftmost maximum inside [lo, hi]
    std::size_t m = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i)
      if (series[i] > series[m]) m = i;

    // Scan left of m. Looking from the maximum, a point is visible iff its
    // slope beats every slope encountered since m (ties block, matching the
    // strict inequality of the segment test).
    if (m > lo) {
      double max_slope = -std::numeric_limits<double>::infinity();
      for (std::size_t i = m; i-- > lo;) {
        double slope = (series[i] - series[m]) / (static_cast<double>(m) - i);
        if (slope > max_slope) {
          g.edges.emplace_back(i, m);
          max_slope = slope;
        }
      }
    }
    // Scan right of m symmetrically.
    if (m < hi) {
      double max_slope = -std::numeric_limits<double>::infinity();
      for (std::size_t j = m + 1; j <= hi; ++j) {
        double slope = (series[j] - series[m]) / (static_cast<double>(j) - m);
        if (slope > max_slope) {
          g.edges.emplace_back(m, j);
          max_slope = slope;
        }
      }
    }
    if (m > lo + 1) stack.emplace_back(lo, m - 1);
    if (m + 1 < hi) stack.emplace_back(m + 1, hi);
  }
  sort_edges(g);
  return g;
}

std::vector<std::size_t> degree_sequence(const VisibilityGraph& graph) {
  std::vector<std::size_t> deg(graph.n_vertices, 0);
  for (const auto& [i, j] : graph.edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

std::string edge_list_text(const VisibilityGraph& graph) {
  std::string out;
  for (const auto& [i, j] : graph.edges) {
    out += std::to_string(i);
    out += ' ';
    out += std::to_string(j);
    out += '\n';
  }
  return out;
}

}  // namespace attdicnn::vg
