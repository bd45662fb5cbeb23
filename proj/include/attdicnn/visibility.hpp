#ifndef ATTDICNN_VISIBILITY_HPP
#define ATTDICNN_VISIBILITY_HPP

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace attdicnn::vg {

// Natural visibility graph over an ordered series: vertex x is the sample at
// time index x, and (i, j) is an edge iff every strictly intermediate sample
// lies strictly below the segment joining the two endpoints. Consecutive
// samples are always mutually visible, so the graph is connected.
struct VisibilityGraph {
  std::size_t n_vertices = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, unique, sorted
};

// Quadratic reference construction: checks the segment condition directly for
// every pair. Semantic ground truth for the fast path.
VisibilityGraph build_nvg_naive(const std::vector<double>& series);

// Divide and conquer on the maximum element. No edge can cross a maximal
// sample, so the maximum is linked to the points visible on each side and the
// halves are solved independently. Identical edge set to the naive builder.
VisibilityGraph build_nvg_fast(const std::vector<double>& series);

std::vector<std::size_t> degree_sequence(const VisibilityGraph& graph);

// Debug export: one "i j" pair per line.
std::string edge_list_text(const VisibilityGraph& graph);

}  // namespace attdicnn::vg

#endif
