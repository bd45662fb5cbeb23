#ifndef ATTDICNN_LAYOUT_HPP
#define ATTDICNN_LAYOUT_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "attdicnn/visibility.hpp"

namespace attdicnn::layout {

struct LayoutConfig {
  double spring_length = 1.0;   // L: display length per unit graph distance
  double spring_constant = 1.0; // K: stiffness numerator, k_ij = K / d_ij^2
  double tolerance = 1e-4;      // stop when max node gradient norm < tolerance
  std::size_t max_iterations = 0;  // 0 = 200 * n
  std::uint64_t seed = 13;         // jitter determinism for coincident nodes
};

// Unit-weight all-pairs shortest paths, flat row-major n x n.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<std::int32_t> d;

  std::int32_t operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
  std::int32_t& operator()(std::size_t i, std::size_t j) { return d[i * n + j]; }
};

struct LayoutResult {
  std::vector<std::array<double, 2>> positions;
  double energy = 0.0;
  std::size_t iterations_used = 0;
  bool converged = false;
  DistanceMatrix distances;
};

struct RenderOptions {
  int side = 128;
  int margin = 4;
  bool draw_nodes = true;
};

// Rasterized layout; pixel values are v/255 with v the 8-bit PGM level.
struct FdlImage {
  static constexpr int kSide = 128;
  int side = kSide;
  std::vector<float> pixels;  // side * side, row-major, in [0, 1]
  int label = 0;

  float at(int row, int col) const { return pixels[row * side + col]; }
};

// BFS from every vertex; throws on disconnected input (the visibility chain
// guarantees connectivity upstream).
DistanceMatrix bfs_apsp(const vg::VisibilityGraph& graph);

// Spring energy  E = sum_{i<j} 1/2 * K/d_ij^2 * (|P_i - P_j| - L*d_ij)^2.
double layout_energy(const std::vector<std::array<double, 2>>& positions,
                     const DistanceMatrix& distances, double spring_length,
                     double spring_constant);

// Analytic partials of the spring energy per node. Coincident nodes are
// separated by a deterministic seeded epsilon before evaluation.
std::vector<std::array<double, 2>> energy_gradient(
    const std::vector<std::array<double, 2>>& positions,
    const DistanceMatrix& distances, double spring_length, double spring_constant,
    std::uint64_t seed = 13);

// Kamada-Kawai minimization: deterministic circular start, then repeatedly
// move the node with the largest gradient by a safeguarded 2-D Newton step
// (step-halving descent fallback); only energy-decreasing steps are accepted.
// energy_trace, when given, receives the initial energy and every accepted
// iterate's energy.
LayoutResult kamada_kawai(const vg::VisibilityGraph& graph, const LayoutConfig& config,
                          std::vector<double>* energy_trace = nullptr);

// Min-max normalize positions into the image square (aspect preserved, fixed
// margin), draw edges as 1-pixel dark lines with integer stepping, darken
// node pixels. Edges are the unit-distance pairs of the result's matrix.
FdlImage rasterize(const LayoutResult& result, const RenderOptions& options = {});

std::string positions_csv(const LayoutResult& result);

void write_pgm(std::ostream& out, const FdlImage& image);
void write_pgm_file(const std::string& path, const FdlImage& image);
FdlImage read_pgm(std::istream& in);
FdlImage read_pgm_file(const std::string& path);

}  // namespace attdicnn::layout

#endif
