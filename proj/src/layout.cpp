#include "attdicnn/layout.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace attdicnn::layout {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCoincidentEps = 1e-12;

// Deterministic displacement direction for a coincident pair. Golden-ratio
// angle hashing keeps the jitter stable across runs with the same seed.
std::array<double, 2> jitter_direction(std::size_t i, std::size_t j, std::size_t n,
                                       std::uint64_t seed) {
  double t = 0.6180339887498949 *
             static_cast<double>(i * n + j + static_cast<std::size_t>(seed % 8191));
  double angle = 2.0 * kPi * (t - std::floor(t));
  return {std::cos(angle), std::sin(angle)};
}

struct PairSprings {
  double length;     // l_ij = L * d_ij
  double stiffness;  // k_ij = K / d_ij^2
};

inline PairSprings springs(std::int32_t d, double spring_length, double spring_constant) {
  double dd = static_cast<double>(d);
  return {spring_length * dd, spring_constant / (dd * dd)};
}

std::vector<std::vector<std::uint32_t>> adjacency(const vg::VisibilityGraph& g) {
  std::vector<std::vector<std::uint32_t>> adj(g.n_vertices);
  for (const auto& [i, j] : g.edges) {
    adj[i].push_back(static_cast<std::uint32_t>(j));
    adj[j].push_back(static_cast<std::uint32_t>(i));
  }
  return adj;
}

}  // namespace

DistanceMatrix bfs_apsp(const vg::VisibilityGraph& graph) {
  std::size_t n = graph.n_vertices;
  DistanceMatrix dist;
  dist.n = n;
  dist.d.assign(n * n, -1);
  auto adj = adjacency(graph);

  std::vector<std::uint32_t> queue(n);
  for (std::size_t src = 0; src < n; ++src) {
    std::int32_t* row = dist.d.data() + src * n;
    row[src] = 0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = static_cast<std::uint32_t>(src);
    while (head < tail) {
      std::uint32_t u = queue[head++];
      std::int32_t du = row[u];
      for (std::uint32_t v : adj[u]) {
        if (row[v] < 0) {
          row[v] = du + 1;
          queue[tail++] = v;
        }
      }
    }
    if (tail != n)
      throw std::invalid_argument("graph is disconnected: vertex " +
                                  std::to_string(src) + " reaches only " +
                                  std::to_string(tail) + " of " + std::to_string(n));
  }
  return dist;
}

double layout_energy(const std::vector<std::array<double, 2>>& positions,
                     const DistanceMatrix& distances, double spring_length,
                     double spring_constant) {
  std::size_t n = positions.size();
  double energy = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      auto [l, k] = springs(distances(i, j), spring_length, spring_constant);
      double dx = positions[i][0] - positions[j][0];
      double dy = positions[i][1] - positions[j][1];
      double stretch = std::sqrt(dx * dx + dy * dy) - l;
      energy += 0.5 * k * stretch * stretch;
    }
  }
  return energy;
}

std::vector<std::array<double, 2>> energy_gradient(
    const std::vector<std::array<double, 2>>& positions,
    const DistanceMatrix& distances, double spring_length, double spring_constant,
    std::uint64_t seed) {
  std::size_t n = positions.size();
  std::vector<std::array<double, 2>> grad(n, {0.0, 0.0});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      auto [l, k] = springs(distances(i, j), spring_length, spring_constant);
      double dx = positions[i][0] - positions[j][0];
      double dy = positions[i][1] - positions[j][1];
      double r = std::sqrt(dx * dx + dy * dy);
      if (r < kCoincidentEps) {
        auto dir = jitter_direction(i, j, n, seed);
        dx = 1e-9 * spring_length * dir[0];
        dy = 1e-9 * spring_length * dir[1];
        r = std::sqrt(dx * dx + dy * dy);
      }
      double c = k * (r - l) / r;
      grad[i][0] += c * dx;
      grad[i][1] += c * dy;
      grad[j][0] -= c * dx;
      grad[j][1] -= c * dy;
    }
  }
  return grad;
}

namespace {

// Gradient and energy contributions of a single node against all others;
// O(n) pieces the optimizer uses to keep its bookkeeping incremental.
struct NodeTerms {
  double gx = 0.0, gy = 0.0;  // gradient of E wrt the node
  double energy = 0.0;        // sum of this node's pair energies
};

NodeTerms node_terms(std::size_t m, const std::vector<std::array<double, 2>>& pos,
                     const DistanceMatrix& dist, double L, double K,
                     std::uint64_t seed) {
  NodeTerms t;
  std::size_t n = pos.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == m) continue;
    auto [l, k] = springs(dist(m, j), L, K);
    double dx = pos[m][0] - pos[j][0];
    double dy = pos[m][1] - pos[j][1];
    double r = std::sqrt(dx * dx + dy * dy);
    if (r < kCoincidentEps) {
      auto dir = jitter_direction(std::min(m, j), std::max(m, j), n, seed);
      dx = 1e-9 * L * dir[0];
      dy = 1e-9 * L * dir[1];
      r = std::sqrt(dx * dx + dy * dy);
    }
    double stretch = r - l;
    double c = k * stretch / r;
    t.gx += c * dx;
    t.gy += c * dy;
    t.energy += 0.5 * k * stretch * stretch;
  }
  return t;
}

}  // namespace

LayoutResult kamada_kawai(const vg::VisibilityGraph& graph, const LayoutConfig& config,
                          std::vector<double>* energy_trace) {
  std::size_t n = graph.n_vertices;
  if (n == 0) throw std::invalid_argument("cannot lay out an empty graph");
  if (config.spring_length <= 0.0 || config.spring_constant <= 0.0 ||
      config.tolerance <= 0.0)
    throw std::invalid_argument("layout parameters must be positive");

  const double L = config.spring_length;
  const double K = config.spring_constant;

  LayoutResult result;
  result.distances = bfs_apsp(graph);
  result.positions.resize(n);

  // Deterministic circular start, radius n*L/(2*pi).
  double radius = static_cast<double>(n) * L / (2.0 * kPi);
  for (std::size_t i = 0; i < n; ++i) {
    double angle = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
    result.positions[i] = {radius * std::cos(angle), radius * std::sin(angle)};
  }

  if (n == 1) {
    result.positions[0] = {0.0, 0.0};
    result.energy = 0.0;
    result.converged = true;
    if (energy_trace) energy_trace->push_back(0.0);
    return result;
  }

  auto& pos = result.positions;
  const auto& dist = result.distances;

  auto grad = energy_gradient(pos, dist, L, K, config.seed);
  double energy = layout_energy(pos, dist, L, K);
  if (energy_trace) energy_trace->push_back(energy);

  std::size_t cap = config.max_iterations ? config.max_iterations : 200 * n;
  std::size_t iterations = 0;
  bool converged = false;

  while (true) {
    std::size_t m = 0;
    double worst = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double g2 = grad[i][0] * grad[i][0] + grad[i][1] * grad[i][1];
      if (g2 > worst) {
        worst = g2;
        m = i;
      }
    }
    if (std::sqrt(worst) < config.tolerance) {
      converged = true;
      break;
    }
    if (iterations >= cap) break;
    ++iterations;

    // 2x2 Hessian of E restricted to node m.
    double hxx = 0.0, hxy = 0.0, hyy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == m) continue;
      auto [l, k] = springs(dist(m, j), L, K);
      double dx = pos[m][0] - pos[j][0];
      double dy = pos[m][1] - pos[j][1];
      double r2 = dx * dx + dy * dy;
      if (r2 < kCoincidentEps * kCoincidentEps) {
        auto dir = jitter_direction(std::min(m, j), std::max(m, j), n, config.seed);
        dx = 1e-9 * L * dir[0];
        dy = 1e-9 * L * dir[1];
        r2 = dx * dx + dy * dy;
      }
      double r = std::sqrt(r2);
      double r3 = r2 * r;
      hxx += k * (1.0 - l * dy * dy / r3);
      hxy += k * l * dx * dy / r3;
      hyy += k * (1.0 - l * dx * dx / r3);
    }

    double gx = grad[m][0], gy = grad[m][1];
    double det = hxx * hyy - hxy * hxy;
    double step_x, step_y;
    bool have_newton = std::abs(det) > 1e-30 && std::isfinite(det);
    if (have_newton) {
      step_x = -(hyy * gx - hxy * gy) / det;
      step_y = -(hxx * gy - hxy * gx) / det;
      // Newton can point uphill near saddle points; insist on a descent
      // direction before trying it.
      if (step_x * gx + step_y * gy >= 0.0) have_newton = false;
    }

    NodeTerms before = node_terms(m, pos, dist, L, K, config.seed);
    std::array<double, 2> old_pos = pos[m];
    bool accepted = false;
    double accepted_delta = 0.0;
    NodeTerms after{};

    auto try_direction = [&](double dx, double dy) {
      double sx = dx, sy = dy;
      for (int halving = 0; halving < 40 && !accepted; ++halving) {
        pos[m] = {old_pos[0] + sx, old_pos[1] + sy};
        NodeTerms cand = node_terms(m, pos, dist, L, K, config.seed);
        double delta = cand.energy - before.energy;
        if (delta < 0.0) {
          accepted = true;
          accepted_delta = delta;
          after = cand;
          return;
        }
        sx *= 0.5;
        sy *= 0.5;
      }
      pos[m] = old_pos;
    };

    if (have_newton) try_direction(step_x, step_y);
    if (!accepted) {
      double gnorm = std::sqrt(gx * gx + gy * gy);
      try_direction(-gx / gnorm * L, -gy / gnorm * L);
    }
    if (!accepted) break;  // the worst node cannot be improved

    // Incremental bookkeeping: pair terms with m changed, others are intact.
    for (std::size_t j = 0; j < n; ++j) {
      if (j == m) continue;
      auto [l, k] = springs(dist(m, j), L, K);
      auto contribution = [&](const std::array<double, 2>& pm) {
        double dx = pm[0] - pos[j][0];
        double dy = pm[1] - pos[j][1];
        double r = std::sqrt(dx * dx + dy * dy);
        if (r < kCoincidentEps) {
          auto dir =
              jitter_direction(std::min(m, j), std::max(m, j), n, config.seed);
          dx = 1e-9 * L * dir[0];
          dy = 1e-9 * L * dir[1];
          r = std::sqrt(dx * dx + dy * dy);
        }
        double c = k * (r - l) / r;
        return std::array<double, 2>{c * dx, c * dy};
      };
      auto old_c = contribution(old_pos);
      auto new_c = contribution(pos[m]);
      grad[j][0] += old_c[0] - new_c[0];
      grad[j][1] += old_c[1] - new_c[1];
    }
    grad[m] = {after.gx, after.gy};

    energy += accepted_delta;
    if (energy_trace) energy_trace->push_back(energy);
  }

  result.energy = layout_energy(pos, dist, L, K);
  result.iterations_used = iterations;
  result.converged = converged;
  return result;
}

FdlImage rasterize(const LayoutResult& result, const RenderOptions& options) {
  const int side = options.side;
  const int margin = options.margin;
  std::size_t n = result.positions.size();

  FdlImage image;
  image.side = side;
  image.pixels.assign(static_cast<std::size_t>(side) * side, 1.0f);

  if (n == 0) return image;

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& p : result.positions) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  double range_x = max_x - min_x;
  double range_y = max_y - min_y;
  double range = std::max(range_x, range_y);

  double usable = static_cast<double>(side - 1 - 2 * margin);
  std::vector<std::array<int, 2>> pix(n);
  if (range <= 0.0) {
    for (auto& p : pix) p = {side / 2, side / 2};
  } else {
    double scale = usable / range;
    double off_x = (usable - scale * range_x) / 2.0;
    double off_y = (usable - scale * range_y) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      int cx = margin + static_cast<int>(std::llround(off_x + (result.positions[i][0] - min_x) * scale));
      int cy = margin + static_cast<int>(std::llround(off_y + (result.positions[i][1] - min_y) * scale));
      pix[i] = {cx, cy};
    }
  }

  auto put = [&](int x, int y) {
    if (x >= 0 && x < side && y >= 0 && y < side)
      image.pixels[static_cast<std::size_t>(y) * side + x] = 0.0f;
  };

  // Bresenham segments for every unit-graph-distance pair.
  auto draw_line = [&](std::array<int, 2> a, std::array<int, 2> b) {
    int x0 = a[0], y0 = a[1], x1 = b[0], y1 = b[1];
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  };

  const DistanceMatrix& dist = result.distances;
  if (dist.n == n) {
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (dist(i, j) == 1) draw_line(pix[i], pix[j]);
  }
  if (options.draw_nodes)
    for (const auto& p : pix) put(p[0], p[1]);

  return image;
}

std::string positions_csv(const LayoutResult& result) {
  std::string out = "index,x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < result.positions.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, result.positions[i][0],
                  result.positions[i][1]);
    out += buf;
  }
  return out;
}

void write_pgm(std::ostream& out, const FdlImage& image) {
  out << "P5\n" << image.side << " " << image.side << "\n255\n";
  std::vector<unsigned char> row(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    float v = image.pixels[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    row[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
}

void write_pgm_file(const std::string& path, const FdlImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_pgm(out, image);
  if (!out) throw std::runtime_error("failed writing " + path);
}

FdlImage read_pgm(std::istream& in) {
  auto next_token = [&in]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };

  if (next_token() != "P5") throw std::runtime_error("not a binary PGM (P5) stream");
  int width = std::stoi(next_token());
  int height = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (width <= 0 || height <= 0 || width != height)
    throw std::runtime_error("unsupported PGM dimensions");
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval");

  FdlImage image;
  image.side = width;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("truncated PGM payload");
  image.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    image.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  return image;
}

FdlImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_pgm(in);
}

}  // namespace attdicnn::layout
