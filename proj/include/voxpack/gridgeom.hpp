#pragma once

// 2D raster geometry used by candidate generation: Minkowski erosion of a
// feasibility mask, altitude-similar region growing, outer contour tracing,
// closed-contour Ramer-Douglas-Peucker simplification and per-vertex
// normal-cone analysis, plus a brute-force tightness oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace voxpack {

struct Cell {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(const Cell&, const Cell&) = default;
  // Raster order: row (y) first, then column.
  friend constexpr auto operator<=>(const Cell& a, const Cell& b) {
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend constexpr bool operator==(const Point2&, const Point2&) = default;
};

/// Row-major boolean raster. Cell (x, y) lives at index y * width + x.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int width, int height, bool value = false)
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("BinaryGrid: dimensions must be positive");
    }
    bits_.assign(static_cast<std::size_t>(width) * height, value ? 1 : 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return bits_.empty(); }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  // Out-of-bounds reads are false.
  bool get(int x, int y) const { return in_bounds(x, y) && at(x, y); }
  void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
  }

  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Per-cell landing altitude. Cell (i, j) stands for container column
/// (i * stride, j * stride).
struct AltitudeMap {
  static constexpr int kInfeasible = std::numeric_limits<int>::max();

  int width = 0;
  int height = 0;
  int stride = 1;
  std::vector<int> values;

  AltitudeMap() = default;
  AltitudeMap(int w, int h, int s = 1)
      : width(w), height(h), stride(s),
        values(static_cast<std::size_t>(w) * h, kInfeasible) {}

  int at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  int& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  bool feasible(int x, int y) const { return at(x, y) != kInfeasible; }
};

struct RegionLabeling {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // 0 = unlabeled
  int region_count = 0;

  int at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  bool has(int x, int y, int label) const {
    return x >= 0 && y >= 0 && x < width && y < height && at(x, y) == label;
  }
  BinaryGrid mask(int label) const {
    BinaryGrid g(width, height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) g.set(x, y, at(x, y) == label);
    return g;
  }
};

/// Counter-clockwise polygon in cell coordinates (x right, y up).
struct Polygon {
  std::vector<Point2> vertices;
  // Set when the input contour was too short to form a polygon.
  bool degenerate = false;
};

struct VertexAnalysis {
  std::size_t index = 0;
  double interior_angle = 0.0;
  double tightness = 0.0;
  bool is_convex = false;
};

// ---------------------------------------------------------------------------
// Erosion

/// Anchors (AABB min corner of the footprint's true cells) at which every
/// footprint cell lands on a true mask cell. Output has the mask's size.
inline BinaryGrid erode_feasible(const BinaryGrid& container_mask,
                                 const BinaryGrid& object_footprint) {
  std::vector<Cell> offsets;
  int min_x = std::numeric_limits<int>::max();
  int min_y = std::numeric_limits<int>::max();
  int max_x = -1;
  int max_y = -1;
  for (int y = 0; y < object_footprint.height(); ++y) {
    for (int x = 0; x < object_footprint.width(); ++x) {
      if (!object_footprint.at(x, y)) continue;
      offsets.push_back({x, y});
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (offsets.empty()) {
    throw std::invalid_argument("erode_feasible: empty footprint");
  }
  const int span_x = max_x - min_x + 1;
  const int span_y = max_y - min_y + 1;
  const int w = container_mask.width();
  const int h = container_mask.height();
  BinaryGrid out(w, h);
  if (span_x > w || span_y > h) return out;

  // Intersection of the mask translated by each footprint offset.
  const int ax = w - span_x + 1;
  const int ay = h - span_y + 1;
  std::vector<std::uint8_t> acc(static_cast<std::size_t>(ax) * ay, 1);
  for (const Cell& o : offsets) {
    const int dx = o.x - min_x;
    const int dy = o.y - min_y;
    for (int y = 0; y < ay; ++y) {
      std::uint8_t* row = acc.data() + static_cast<std::size_t>(y) * ax;
      for (int x = 0; x < ax; ++x) {
        row[x] &= static_cast<std::uint8_t>(container_mask.at(x + dx, y + dy));
      }
    }
  }
  for (int y = 0; y < ay; ++y)
    for (int x = 0; x < ax; ++x)
      if (acc[static_cast<std::size_t>(y) * ax + x]) out.set(x, y, true);
  return out;
}

// ---------------------------------------------------------------------------
// Region growing

inline bool altitude_similar(int a, int b, int delta_z) {
  const long long d = static_cast<long long>(a) - b;
  return (d < 0 ? -d : d) <= delta_z;
}

/// 4-connected components of feasible cells; neighbours join when their
/// altitudes differ by at most delta_z. Labels follow raster discovery order.
inline RegionLabeling connected_regions(const AltitudeMap& alt, int delta_z) {
  if (delta_z < 0) {
    throw std::invalid_argument("connected_regions: delta_z must be >= 0");
  }
  RegionLabeling out;
  out.width = alt.width;
  out.height = alt.height;
  out.labels.assign(alt.values.size(), 0);

  constexpr std::array<Cell, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  std::vector<Cell> stack;
  for (int y = 0; y < alt.height; ++y) {
    for (int x = 0; x < alt.width; ++x) {
      if (!alt.feasible(x, y) || out.at(x, y) != 0) continue;
      const int label = ++out.region_count;
      out.labels[static_cast<std::size_t>(y) * alt.width + x] = label;
      stack.assign(1, Cell{x, y});
      while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        const int zc = alt.at(c.x, c.y);
        for (const Cell& d : kNeighbors) {
          const int nx = c.x + d.x;
          const int ny = c.y + d.y;
          if (nx < 0 || ny < 0 || nx >= alt.width || ny >= alt.height) continue;
          if (!alt.feasible(nx, ny) || out.at(nx, ny) != 0) continue;
          if (!altitude_similar(zc, alt.at(nx, ny), delta_z)) continue;
          out.labels[static_cast<std::size_t>(ny) * alt.width + nx] = label;
          stack.push_back({nx, ny});
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contour tracing

namespace detail {

// Counter-clockwise ring of the 8-neighbourhood, starting east.
inline constexpr std::array<Cell, 8> kRing{{{1, 0},
                                            {1, 1},
                                            {0, 1},
                                            {-1, 1},
                                            {-1, 0},
                                            {-1, -1},
                                            {0, -1},
                                            {1, -1}}};

inline int ring_index(Cell d) {
  for (int k = 0; k < 8; ++k)
    if (kRing[k] == d) return k;
  return -1;
}

}  // namespace detail

/// Outer border of one labelled component (Suzuki-Abe border following,
/// 8-connected), counter-clockwise, starting at the component's first cell in
/// raster order. Cells on one-cell-wide necks appear once per pass.
inline std::vector<Cell> trace_contour(const RegionLabeling& region, int label) {
  if (label <= 0 || label > region.region_count) {
    throw std::invalid_argument("trace_contour: unknown label");
  }
  Cell start{-1, -1};
  for (int y = 0; y < region.height && start.x < 0; ++y)
    for (int x = 0; x < region.width; ++x)
      if (region.at(x, y) == label) {
        start = {x, y};
        break;
      }
  if (start.x < 0) {
    throw std::invalid_argument("trace_contour: label has no cells");
  }
  auto inside = [&](Cell c) { return region.has(c.x, c.y, label); };
  auto add = [](Cell a, Cell d) { return Cell{a.x + d.x, a.y + d.y}; };

  // The west neighbour of the first raster cell is always background. Sweep
  // clockwise from it to find the last cell of the border.
  int k0 = 4;
  Cell last{-1, -1};
  for (int i = 1; i <= 8; ++i) {
    const int k = (k0 - i + 8) % 8;
    const Cell n = add(start, detail::kRing[k]);
    if (inside(n)) {
      last = n;
      break;
    }
  }
  if (last.x < 0) return {start};

  std::vector<Cell> contour;
  Cell prev = last;
  Cell cur = start;
  for (;;) {
    const int back = detail::ring_index({prev.x - cur.x, prev.y - cur.y});
    Cell next = cur;
    for (int i = 1; i <= 8; ++i) {
      const Cell n = add(cur, detail::kRing[(back + i) % 8]);
      if (inside(n)) {
        next = n;
        break;
      }
    }
    contour.push_back(cur);
    if (next == start && cur == last) break;
    prev = cur;
    cur = next;
  }
  return contour;
}

// ---------------------------------------------------------------------------
// Polyline simplification

inline double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double wx = p.x - a.x;
  const double wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  if (len2 == 0.0) return std::hypot(wx, wy);
  const double t = std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0);
  return std::hypot(wx - t * vx, wy - t * vy);
}

namespace detail {

// Marks the retained indices of the open arc first..last (cyclic, inclusive).
inline void rdp_arc(const std::vector<Point2>& pts, std::size_t first,
                    std::size_t length, double epsilon,
                    std::vector<std::uint8_t>& keep) {
  const std::size_t n = pts.size();
  std::vector<std::pair<std::size_t, std::size_t>> work{{0, length}};
  while (!work.empty()) {
    const auto [lo, hi] = work.back();
    work.pop_back();
    if (hi <= lo + 1) continue;
    const Point2 a = pts[(first + lo) % n];
    const Point2 b = pts[(first + hi) % n];
    double best = -1.0;
    std::size_t best_k = lo;
    for (std::size_t k = lo + 1; k < hi; ++k) {
      const double d = point_segment_distance(pts[(first + k) % n], a, b);
      if (d > best) {
        best = d;
        best_k = k;
      }
    }
    if (best > epsilon) {
      keep[(first + best_k) % n] = 1;
      work.emplace_back(lo, best_k);
      work.emplace_back(best_k, hi);
    }
  }
}

}  // namespace detail

/// Ramer-Douglas-Peucker on a closed contour: split at the diameter pair,
/// simplify both arcs. Retained vertices are contour points, in contour order.
inline Polygon simplify_rdp(const std::vector<Cell>& contour, double epsilon) {
  if (epsilon < 0.0) {
    throw std::invalid_argument("simplify_rdp: epsilon must be >= 0");
  }
  Polygon out;
  std::vector<Point2> pts;
  pts.reserve(contour.size());
  for (const Cell& c : contour) pts.push_back({double(c.x), double(c.y)});
  if (pts.size() < 3) {
    out.vertices = pts;
    out.degenerate = true;
    return out;
  }

  const std::size_t n = pts.size();
  std::size_t ia = 0;
  std::size_t ib = 0;
  long long best = -1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const long long dx = contour[i].x - contour[j].x;
      const long long dy = contour[i].y - contour[j].y;
      if (dx * dx + dy * dy > best) {
        best = dx * dx + dy * dy;
        ia = i;
        ib = j;
      }
    }
  }
  std::vector<std::uint8_t> keep(n, 0);
  keep[ia] = 1;
  keep[ib] = 1;
  detail::rdp_arc(pts, ia, ib - ia, epsilon, keep);
  detail::rdp_arc(pts, ib, n - ib + ia, epsilon, keep);

  for (std::size_t i = 0; i < n; ++i)
    if (keep[i] && (out.vertices.empty() || out.vertices.back() != pts[i]))
      out.vertices.push_back(pts[i]);
  while (out.vertices.size() > 1 && out.vertices.front() == out.vertices.back())
    out.vertices.pop_back();
  out.degenerate = out.vertices.size() < 3;
  return out;
}

// ---------------------------------------------------------------------------
// Vertex analysis

/// Interior angle, normal-cone spanning angle and convexity per vertex of a
/// counter-clockwise polygon.
inline std::vector<VertexAnalysis> analyze_vertices(const Polygon& poly) {
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  std::vector<VertexAnalysis> out;
  if (n < 3) return out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = v[(i + n - 1) % n];
    const Point2 b = v[i];
    const Point2 c = v[(i + 1) % n];
    const double e1x = b.x - a.x;
    const double e1y = b.y - a.y;
    const double e2x = c.x - b.x;
    const double e2y = c.y - b.y;
    // Signed exterior turn in (-pi, pi]; a spike reverses by +pi.
    double turn = std::atan2(e1x * e2y - e1y * e2x, e1x * e2x + e1y * e2y);
    if (turn <= -std::numbers::pi) turn = std::numbers::pi;
    VertexAnalysis va;
    va.index = i;
    va.interior_angle = std::numbers::pi - turn;
    va.is_convex = va.interior_angle < std::numbers::pi;
    va.tightness = va.is_convex ? std::numbers::pi - va.interior_angle : 0.0;
    out.push_back(va);
  }
  return out;
}

inline double signed_area(const Polygon& poly) {
  const auto& v = poly.vertices;
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& p = v[i];
    const Point2& q = v[(i + 1) % v.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

// ---------------------------------------------------------------------------
// Tightness oracle

/// Empirical normal-cone spanning angle at p: the fraction of n_dirs sampled
/// directions d with d.p >= d.q for every region cell q in the closed disk of
/// the given radius around p, scaled to radians.
inline double tightness_oracle(const BinaryGrid& region_cells, Cell p,
                               double radius, int n_dirs) {
  if (radius < 2.0) throw std::invalid_argument("tightness_oracle: radius < 2");
  if (n_dirs < 90) throw std::invalid_argument("tightness_oracle: n_dirs < 90");
  if (!region_cells.get(p.x, p.y)) {
    throw std::invalid_argument("tightness_oracle: p outside region");
  }
  const int r = static_cast<int>(std::floor(radius));
  const double r2 = radius * radius;
  std::vector<Point2> rel;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if ((dx || dy) && dx * dx + dy * dy <= r2 + 1e-9 &&
          region_cells.get(p.x + dx, p.y + dy))
        rel.push_back({double(dx), double(dy)});

  constexpr double kTieTolerance = 1e-9;
  int count = 0;
  for (int k = 0; k < n_dirs; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / n_dirs;
    const double cx = std::cos(phi);
    const double cy = std::sin(phi);
    bool extreme = true;
    for (const Point2& q : rel) {
      if (cx * q.x + cy * q.y > kTieTolerance) {
        extreme = false;
        break;
      }
    }
    count += extreme ? 1 : 0;
  }
  return 2.0 * std::numbers::pi * count / n_dirs;
}

}  // namespace voxpack
