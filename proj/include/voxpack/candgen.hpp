#pragma once

// Candidate placements at convex vertices of altitude-similar feasible
// regions: per spin, sample landing altitudes on the stride grid, grow
// regions, trace and simplify their contours, keep the convex vertices.

#include <algorithm>
#include <cstddef>
#include <numbers>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "voxpack/gridgeom.hpp"
#include "voxpack/packenv.hpp"

namespace voxpack {

inline constexpr double kDefaultRdpEpsilon = 1.0;

struct PlacementCandidate {
  int spin = 0;
  int lx = 0;
  int ly = 0;
  int lz = 0;
  int region = 0;  // region label within its spin
  double tightness = 0.0;

  ActionTuple action() const { return {spin, lx, ly, lz}; }
  auto sort_key() const { return std::make_tuple(lz, ly, lx, spin); }
  friend bool operator==(const PlacementCandidate&, const PlacementCandidate&) = default;
};

struct CandidateSet {
  std::vector<PlacementCandidate> candidates;
  bool truncated = false;

  bool empty() const { return candidates.empty(); }
  std::size_t size() const { return candidates.size(); }
  const PlacementCandidate& operator[](std::size_t i) const { return candidates[i]; }
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Landing altitudes on the stride lattice: lattice cell (i, j) is the
/// container column (i * stride, j * stride).
inline AltitudeMap altitude_map(const HeightMap& h, const FootprintMaps& fp,
                                int stride, int sz) {
  const int w = (h.sx() - 1) / stride + 1;
  const int d = (h.sy() - 1) / stride + 1;
  AltitudeMap alt(w, d, stride);
  // Anchors whose footprint stays inside the container walls.
  const BinaryGrid inside = erode_feasible(BinaryGrid(h.sx(), h.sy(), true), fp.mask);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < w; ++i) {
      const int lx = i * stride;
      const int ly = j * stride;
      if (!inside.at(lx, ly)) continue;
      alt.at(i, j) = landing_altitude(h, fp, lx, ly, sz);
    }
  }
  return alt;
}

/// Per-spin intermediate results, kept for the debug dump.
struct SpinAnalysis {
  int spin = 0;
  AltitudeMap altitude;
  RegionLabeling regions;
  std::vector<std::vector<Cell>> contours;  // index = label - 1
  std::vector<Polygon> polygons;
};

struct CandidateDebug {
  std::vector<SpinAnalysis> spins;
};

/// Spins whose footprints differ from every earlier spin's.
inline std::vector<int> distinct_spins(const PreparedItem& item) {
  std::vector<int> out;
  for (int k = 0; k < kSpinCount; ++k) {
    bool dup = false;
    for (int j : out) dup = dup || item.footprints[j] == item.footprints[k];
    if (!dup) out.push_back(k);
  }
  return out;
}

namespace detail {

inline void region_candidates(const SpinAnalysis& sa, int label,
                              std::vector<PlacementCandidate>& out) {
  const int stride = sa.altitude.stride;
  const auto& contour = sa.contours[label - 1];
  const Polygon& poly = sa.polygons[label - 1];
  auto emit = [&](Cell c, double tau) {
    out.push_back({sa.spin, c.x * stride, c.y * stride, sa.altitude.at(c.x, c.y),
                   label, tau});
  };

  std::vector<Cell> distinct = contour;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    // A one- or two-cell region: its first raster cell.
    emit(distinct.front(), std::numbers::pi);
    return;
  }
  if (poly.vertices.size() < 3) {
    // A straight sliver: both ends are tips with a half-plane normal cone.
    for (const Point2& v : poly.vertices)
      emit({static_cast<int>(v.x), static_cast<int>(v.y)}, std::numbers::pi);
    return;
  }
  for (const VertexAnalysis& va : analyze_vertices(poly)) {
    if (!va.is_convex) continue;
    const Point2& v = poly.vertices[va.index];
    emit({static_cast<int>(v.x), static_cast<int>(v.y)}, va.tightness);
  }
}

}  // namespace detail

/// Full candidate pipeline for one decision. Candidates are sorted by
/// (l_z, l_y, l_x, spin) and truncated to spec.max_candidates.
inline CandidateSet generate_candidates(const PackingState& state,
                                        const PreparedItem& item,
                                        const ContainerSpec& spec,
                                        CandidateDebug* debug = nullptr,
                                        double rdp_epsilon = kDefaultRdpEpsilon) {
  std::vector<PlacementCandidate> all;
  for (int spin : distinct_spins(item)) {
    SpinAnalysis sa;
    sa.spin = spin;
    sa.altitude = altitude_map(state.heightmap, item.footprints[spin],
                               spec.grid_stride, spec.sz);
    sa.regions = connected_regions(sa.altitude, spec.delta_z);
    for (int label = 1; label <= sa.regions.region_count; ++label) {
      sa.contours.push_back(trace_contour(sa.regions, label));
      sa.polygons.push_back(simplify_rdp(sa.contours.back(), rdp_epsilon));
    }
    for (int label = 1; label <= sa.regions.region_count; ++label) {
      detail::region_candidates(sa, label, all);
    }
    if (debug) debug->spins.push_back(std::move(sa));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.sort_key() < b.sort_key();
  });
  // A vertex revisited along a one-cell neck yields the same placement twice.
  all.erase(std::unique(all.begin(), all.end(),
                        [](const auto& a, const auto& b) {
                          return a.sort_key() == b.sort_key();
                        }),
            all.end());

  CandidateSet out;
  if (all.size() > static_cast<std::size_t>(spec.max_candidates)) {
    all.resize(spec.max_candidates);
    out.truncated = true;
  }
  out.candidates = std::move(all);
  return out;
}

inline nlohmann::json candidates_to_json(const CandidateSet& cs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cs.candidates) {
    arr.push_back({{"spin", c.spin}, {"lx", c.lx}, {"ly", c.ly}, {"lz", c.lz},
                   {"region", c.region}, {"tightness", c.tightness}});
  }
  return {{"candidates", std::move(arr)}, {"truncated", cs.truncated}};
}

/// Regions, contours, polygons and candidates of one decision.
inline nlohmann::json debug_to_json(const CandidateDebug& dbg, const CandidateSet& cs) {
  nlohmann::json spins = nlohmann::json::array();
  for (const auto& sa : dbg.spins) {
    nlohmann::json alt = nlohmann::json::array();
    for (int v : sa.altitude.values) {
      alt.push_back(v == AltitudeMap::kInfeasible ? nlohmann::json(nullptr)
                                                  : nlohmann::json(v));
    }
    nlohmann::json regions = nlohmann::json::array();
    for (std::size_t r = 0; r < sa.contours.size(); ++r) {
      nlohmann::json contour = nlohmann::json::array();
      for (const Cell& c : sa.contours[r]) contour.push_back({c.x, c.y});
      nlohmann::json poly = nlohmann::json::array();
      for (const Point2& p : sa.polygons[r].vertices) poly.push_back({p.x, p.y});
      regions.push_back({{"label", r + 1},
                         {"contour", std::move(contour)},
                         {"polygon", std::move(poly)}});
    }
    spins.push_back({{"spin", sa.spin},
                     {"stride", sa.altitude.stride},
                     {"width", sa.altitude.width},
                     {"height", sa.altitude.height},
                     {"altitude", std::move(alt)},
                     {"labels", sa.regions.labels},
                     {"regions", std::move(regions)}});
  }
  nlohmann::json out = candidates_to_json(cs);
  out["spins"] = std::move(spins);
  return out;
}

}  // namespace voxpack
