#include "voxpack/gridgeom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace voxpack {
namespace {

using testing::deg;
constexpr double kPi = std::numbers::pi;

BinaryGrid grid_from_rows(const std::vector<std::string>& rows) {
  // rows[0] is y = 0.
  BinaryGrid g(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) g.set(x, y, rows[y][x] == '#');
  return g;
}

RegionLabeling single_label(const BinaryGrid& g) {
  RegionLabeling r;
  r.width = g.width();
  r.height = g.height();
  r.labels.assign(std::size_t(g.width()) * g.height(), 0);
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      if (g.at(x, y)) r.labels[std::size_t(y) * g.width() + x] = 1;
  r.region_count = 1;
  return r;
}

// --- erode_feasible --------------------------------------------------------

TEST(ErodeFeasible, FullRectangle) {
  const BinaryGrid out = erode_feasible(BinaryGrid(3, 3, true), BinaryGrid(2, 2, true));
  EXPECT_EQ(out, grid_from_rows({"##.", "##.", "..."}));
}

TEST(ErodeFeasible, UnitFootprintIsIdentity) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const BinaryGrid mask = testing::random_grid(rng, 9, 6, 0.6);
    EXPECT_EQ(erode_feasible(mask, BinaryGrid(1, 1, true)), mask);
  }
}

TEST(ErodeFeasible, FootprintOffsetInsideItsGridIsIgnored) {
  // The reference corner is the true-cell AABB corner, not the grid origin.
  BinaryGrid fp(4, 4);
  fp.set(2, 1, true);
  fp.set(3, 1, true);
  const BinaryGrid out = erode_feasible(BinaryGrid(3, 2, true), fp);
  EXPECT_EQ(out, grid_from_rows({"##.", "##."}));
}

TEST(ErodeFeasible, LargerFootprintGivesEmptyGrid) {
  const BinaryGrid out = erode_feasible(BinaryGrid(3, 3, true), BinaryGrid(4, 1, true));
  EXPECT_EQ(out.count(), 0u);
  EXPECT_EQ(out.width(), 3);
}

TEST(ErodeFeasible, EmptyFootprintRejected) {
  EXPECT_THROW(erode_feasible(BinaryGrid(3, 3, true), BinaryGrid(2, 2, false)),
               std::invalid_argument);
}

TEST(ErodeFeasible, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> mask_dim(1, 24), fp_dim(1, 5);
  for (int t = 0; t < 50; ++t) {
    const BinaryGrid mask =
        testing::random_grid(rng, mask_dim(rng), mask_dim(rng), 0.85);
    BinaryGrid fp = testing::random_grid(rng, fp_dim(rng), fp_dim(rng), 0.6);
    fp.set(0, 0, true);
    EXPECT_EQ(erode_feasible(mask, fp), testing::brute_force_erosion(mask, fp))
        << "instance " << t;
  }
}

// --- connected_regions -----------------------------------------------------

TEST(ConnectedRegions, UniformPlateauIsOneRegion) {
  AltitudeMap alt(5, 4);
  std::fill(alt.values.begin(), alt.values.end(), 3);
  const RegionLabeling r = connected_regions(alt, 0);
  EXPECT_EQ(r.region_count, 1);
  for (int v : r.labels) EXPECT_EQ(v, 1);
}

TEST(ConnectedRegions, TwoPlateausSplit) {
  AltitudeMap alt(6, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 6; ++x) alt.at(x, y) = x < 3 ? 0 : 5;
  const RegionLabeling r = connected_regions(alt, 1);
  EXPECT_EQ(r.region_count, 2);
  EXPECT_EQ(r.at(0, 0), 1);
  EXPECT_EQ(r.at(5, 2), 2);
}

TEST(ConnectedRegions, AllInfeasible) {
  const RegionLabeling r = connected_regions(AltitudeMap(4, 4), 1);
  EXPECT_EQ(r.region_count, 0);
}

TEST(ConnectedRegions, NegativeToleranceRejected) {
  EXPECT_THROW(connected_regions(AltitudeMap(2, 2), -1), std::invalid_argument);
}

// Labels are exactly the connected components of the graph whose edges join
// 4-adjacent feasible cells passing the altitude predicate. The predicate is
// not transitive, so adjacent cells of one region may still differ by more
// than delta_z when a chain of similar steps links them.
TEST(ConnectedRegions, RandomMapsMatchSimilarityGraphComponents) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> z(0, 4);
  std::bernoulli_distribution infeasible(0.2);
  for (int t = 0; t < 30; ++t) {
    AltitudeMap alt(12, 9);
    for (int& v : alt.values) v = infeasible(rng) ? AltitudeMap::kInfeasible : z(rng);
    const int dz = t % 3;
    const RegionLabeling r = connected_regions(alt, dz);

    // Union-find over predicate edges, independent of the flood fill.
    std::vector<int> parent(alt.values.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    auto idx = [&](int x, int y) { return y * alt.width + x; };
    for (int y = 0; y < alt.height; ++y)
      for (int x = 0; x < alt.width; ++x) {
        if (!alt.feasible(x, y)) continue;
        if (x + 1 < alt.width && alt.feasible(x + 1, y) &&
            std::abs(alt.at(x, y) - alt.at(x + 1, y)) <= dz)
          parent[find(idx(x, y))] = find(idx(x + 1, y));
        if (y + 1 < alt.height && alt.feasible(x, y + 1) &&
            std::abs(alt.at(x, y) - alt.at(x, y + 1)) <= dz)
          parent[find(idx(x, y))] = find(idx(x, y + 1));
      }
    std::set<int> roots;
    for (int a = 0; a < int(alt.values.size()); ++a) {
      const int xa = a % alt.width, ya = a / alt.width;
      EXPECT_EQ(r.at(xa, ya) == 0, !alt.feasible(xa, ya));
      if (!alt.feasible(xa, ya)) continue;
      roots.insert(find(a));
      for (int b = a + 1; b < int(alt.values.size()); ++b) {
        const int xb = b % alt.width, yb = b / alt.width;
        if (!alt.feasible(xb, yb)) continue;
        EXPECT_EQ(find(a) == find(b), r.at(xa, ya) == r.at(xb, yb));
      }
    }
    EXPECT_EQ(int(roots.size()), r.region_count);
    // Raster discovery order: first occurrences appear in increasing order.
    int next = 1;
    for (int l : r.labels) {
      if (l == next) ++next;
      EXPECT_LT(l, next);
    }
  }
}

// --- trace_contour ---------------------------------------------------------

TEST(TraceContour, SingleCell) {
  const auto c = trace_contour(single_label(grid_from_rows({"...", ".#.", "..."})), 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (Cell{1, 1}));
}

TEST(TraceContour, SquareRingCounterClockwise) {
  const auto c = trace_contour(single_label(grid_from_rows({"###", "###", "###"})), 1);
  const std::vector<Cell> expected{{0, 0}, {1, 0}, {2, 0}, {2, 1},
                                   {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  EXPECT_EQ(c, expected);
}

TEST(TraceContour, UnknownLabelRejected) {
  const auto r = single_label(grid_from_rows({"##"}));
  EXPECT_THROW(trace_contour(r, 2), std::invalid_argument);
  EXPECT_THROW(trace_contour(r, 0), std::invalid_argument);
}

TEST(TraceContour, CellSetMatchesExteriorBoundaryOfRandomPolygons) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 25; ++t) {
    const auto poly = testing::random_lattice_polygon(rng);
    const Cell ext = testing::extent(poly);
    const BinaryGrid g = testing::rasterize(poly, ext.x + 3, ext.y + 3);
    const auto contour = trace_contour(single_label(g), 1);
    std::vector<Cell> cells(contour);
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    EXPECT_EQ(cells, testing::exterior_boundary_cells(g)) << "polygon " << t;
    for (const Cell& c : contour) {
      EXPECT_TRUE(g.at(c.x, c.y));
      bool touches_outside = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          touches_outside = touches_outside || !g.get(c.x + dx, c.y + dy);
      EXPECT_TRUE(touches_outside);
    }
    EXPECT_GT(signed_area(simplify_rdp(contour, 0.0)), 0.0);
  }
}

TEST(TraceContour, RandomBlobsIncludingHolesAndNecks) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 40; ++t) {
    const BinaryGrid g = testing::random_grid(rng, 14, 11, 0.62);
    AltitudeMap alt(14, 11);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 14; ++x)
        if (g.at(x, y)) alt.at(x, y) = 0;
    const RegionLabeling r = connected_regions(alt, 0);
    for (int label = 1; label <= r.region_count; ++label) {
      const auto contour = trace_contour(r, label);
      std::vector<Cell> cells(contour);
      std::sort(cells.begin(), cells.end());
      cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
      EXPECT_EQ(cells, testing::exterior_boundary_cells(r.mask(label)));
    }
  }
}

// --- simplify_rdp ----------------------------------------------------------

std::vector<Cell> rectangle_contour(int w, int h) {
  BinaryGrid g(w, h, true);
  return trace_contour(single_label(g), 1);
}

TEST(SimplifyRdp, RectangleCollapsesToCorners) {
  const Polygon p = simplify_rdp(rectangle_contour(7, 4), 1.0);
  ASSERT_FALSE(p.degenerate);
  const std::vector<Point2> expected{{0, 0}, {6, 0}, {6, 3}, {0, 3}};
  EXPECT_EQ(p.vertices, expected);
}

TEST(SimplifyRdp, ZeroEpsilonKeepsEveryDirectionChange) {
  const auto contour =
      trace_contour(single_label(grid_from_rows({"####", "####", "##..", "##.."})), 1);
  const Polygon p = simplify_rdp(contour, 0.0);
  // Direction changes of the L-shaped outline; the inner corner cell has no
  // background 4-neighbour, so the trace cuts it diagonally.
  const std::vector<Point2> expected{{0, 0}, {3, 0}, {3, 1}, {2, 1},
                                     {1, 2}, {1, 3}, {0, 3}};
  std::set<std::pair<double, double>> got, want;
  for (auto v : p.vertices) got.insert({v.x, v.y});
  for (auto v : expected) want.insert({v.x, v.y});
  EXPECT_EQ(got, want);
}

TEST(SimplifyRdp, StaircaseCollapsesToDiagonal) {
  // Closed contour: x axis, a 4-connected 45 degree staircase, y axis.
  std::vector<Cell> contour;
  for (int x = 0; x <= 9; ++x) contour.push_back({x, 0});
  for (int k = 0; k < 9; ++k) {
    contour.push_back({9 - k, k + 1});
    contour.push_back({8 - k, k + 1});
  }
  for (int y = 8; y >= 1; --y) contour.push_back({0, y});
  const Polygon p = simplify_rdp(contour, 1.0);
  const std::vector<Point2> expected{{0, 0}, {9, 0}, {0, 9}};
  ASSERT_EQ(p.vertices, expected);
  for (const Cell& c : contour) {
    const Point2 q{double(c.x), double(c.y)};
    const double d = std::min({point_segment_distance(q, {0, 0}, {9, 0}),
                               point_segment_distance(q, {9, 0}, {0, 9}),
                               point_segment_distance(q, {0, 9}, {0, 0})});
    EXPECT_LE(d, 1.0);
  }
}

TEST(SimplifyRdp, RasterDiagonalTraceIsAlreadyStraight) {
  BinaryGrid g(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) g.set(x, y, x + y <= 9);
  const auto contour = trace_contour(single_label(g), 1);
  const Polygon p = simplify_rdp(contour, 1.0);
  ASSERT_EQ(p.vertices.size(), 3u);
  const std::vector<Point2> expected{{0, 0}, {9, 0}, {0, 9}};
  EXPECT_EQ(p.vertices, expected);
}

double distance_to_closed_polyline(Point2 q, const Polygon& p) {
  double best = 1e300;
  for (std::size_t i = 0; i < p.vertices.size(); ++i)
    best = std::min(best, point_segment_distance(
                              q, p.vertices[i], p.vertices[(i + 1) % p.vertices.size()]));
  return best;
}

TEST(SimplifyRdp, DroppedPointsStayWithinEpsilonAndVerticesAreContourPoints) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    const auto poly = testing::random_lattice_polygon(rng);
    const Cell ext = testing::extent(poly);
    const BinaryGrid g = testing::rasterize(poly, ext.x + 3, ext.y + 3);
    const auto contour = trace_contour(single_label(g), 1);
    for (double eps : {0.0, 0.5, 1.0, 2.0}) {
      const Polygon p = simplify_rdp(contour, eps);
      EXPECT_LE(p.vertices.size(), contour.size());
      std::size_t cursor = 0;
      for (const Point2& v : p.vertices) {
        // Retained vertices appear in the contour, in order.
        while (cursor < contour.size() &&
               !(contour[cursor].x == v.x && contour[cursor].y == v.y))
          ++cursor;
        EXPECT_LT(cursor, contour.size());
      }
      for (const Cell& c : contour)
        EXPECT_LE(distance_to_closed_polyline({double(c.x), double(c.y)}, p), eps + 1e-9);
    }
  }
}

TEST(SimplifyRdp, ShortContourIsDegenerate) {
  EXPECT_TRUE(simplify_rdp({{0, 0}, {1, 0}}, 1.0).degenerate);
  EXPECT_THROW(simplify_rdp({{0, 0}, {1, 0}, {1, 1}}, -1.0), std::invalid_argument);
}

// --- analyze_vertices ------------------------------------------------------

TEST(AnalyzeVertices, UnitSquare) {
  Polygon sq{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  for (const auto& v : analyze_vertices(sq)) {
    EXPECT_NEAR(v.interior_angle, kPi / 2, 1e-12);
    EXPECT_NEAR(v.tightness, kPi / 2, 1e-12);
    EXPECT_TRUE(v.is_convex);
  }
}

TEST(AnalyzeVertices, LShapedHexagon) {
  Polygon l{{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}};
  const auto va = analyze_vertices(l);
  ASSERT_EQ(va.size(), 6u);
  int convex = 0;
  for (const auto& v : va) {
    if (v.is_convex) {
      ++convex;
      EXPECT_NEAR(v.tightness, kPi / 2, 1e-12);
    } else {
      EXPECT_EQ(v.index, 3u);
      EXPECT_NEAR(v.interior_angle, 3 * kPi / 2, 1e-12);
      EXPECT_EQ(v.tightness, 0.0);
    }
  }
  EXPECT_EQ(convex, 5);
}

TEST(AnalyzeVertices, EquilateralTriangle) {
  Polygon t{{{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}}};
  for (const auto& v : analyze_vertices(t)) {
    EXPECT_NEAR(v.interior_angle, kPi / 3, 1e-12);
    EXPECT_NEAR(v.tightness, 2 * kPi / 3, 1e-12);
  }
}

TEST(AnalyzeVertices, TurningAnglesSumToFullCircle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Polygon p = testing::to_polygon(testing::random_lattice_polygon(rng));
    double sum = 0.0;
    for (const auto& v : analyze_vertices(p)) {
      EXPECT_GT(v.interior_angle, 0.0);
      EXPECT_LT(v.interior_angle, 2 * kPi);
      EXPECT_EQ(v.is_convex, v.interior_angle < kPi);
      sum += kPi - v.interior_angle;
    }
    EXPECT_NEAR(sum, 2 * kPi, 1e-9);
  }
}

// --- tightness_oracle ------------------------------------------------------

TEST(TightnessOracle, SquareCorner) {
  BinaryGrid g(12, 12, true);
  const double tau = tightness_oracle(g, {0, 0}, 5.0, 360);
  EXPECT_NEAR(tau, kPi / 2, 2 * (2 * kPi / 360) + 1e-12);
}

TEST(TightnessOracle, StraightEdgeMidpoint) {
  BinaryGrid g(20, 12, true);
  EXPECT_LE(tightness_oracle(g, {10, 0}, 5.0, 360), 2 * (2 * kPi / 360) + 1e-12);
}

TEST(TightnessOracle, InteriorPointIsZero) {
  BinaryGrid g(20, 20, true);
  EXPECT_EQ(tightness_oracle(g, {10, 10}, 5.0, 360), 0.0);
}

TEST(TightnessOracle, Preconditions) {
  BinaryGrid g(4, 4, true);
  g.set(3, 3, false);
  EXPECT_THROW(tightness_oracle(g, {3, 3}, 5.0, 360), std::invalid_argument);
  EXPECT_THROW(tightness_oracle(g, {0, 0}, 1.5, 360), std::invalid_argument);
  EXPECT_THROW(tightness_oracle(g, {0, 0}, 5.0, 60), std::invalid_argument);
}

// Convex vertices are the local maximisers of the empirical normal cone.
TEST(TightnessOracle, ConvexVerticesMatchNormalConeAngle) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto lp = testing::random_lattice_polygon(rng);
    const Cell ext = testing::extent(lp);
    const BinaryGrid g = testing::rasterize(lp, ext.x + 3, ext.y + 3);
    const auto va = analyze_vertices(testing::to_polygon(lp));
    for (const auto& v : va) {
      const double tau = tightness_oracle(g, lp.vertices[v.index], 5.0, 360);
      if (v.is_convex) {
        EXPECT_NEAR(tau, kPi - v.interior_angle, deg(6));
      } else {
        EXPECT_LE(tau, deg(6));
      }
    }
    for (const Cell& p : testing::edge_interior_points(lp, 5.0))
      EXPECT_LE(tightness_oracle(g, p, 5.0, 360), deg(6));
  }
}

}  // namespace
}  // namespace voxpack
