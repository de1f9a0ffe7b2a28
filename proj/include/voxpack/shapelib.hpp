#pragma once

// Voxel shapes: the 24 axis-aligned rotations, planar-stable pose detection,
// rotation-symmetric pose deduplication, per-column footprint maps, the
// shape/problem JSON formats and the seeded problem emitter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "voxpack/gridgeom.hpp"

namespace voxpack {

struct Voxel {
  int x = 0;
  int y = 0;
  int z = 0;
  friend constexpr bool operator==(const Voxel&, const Voxel&) = default;
};

/// Occupancy grid of a rigid object, trimmed to its bounding box.
class VoxelShape {
 public:
  VoxelShape() = default;

  /// Builds a trimmed shape from occupied voxel coordinates (any offset).
  VoxelShape(std::string name, const std::vector<Voxel>& voxels,
             double cell_cm = 1.0)
      : name_(std::move(name)), cell_cm_(cell_cm) {
    if (voxels.empty()) {
      throw std::invalid_argument("VoxelShape: no occupied voxels");
    }
    int lo[3] = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                 std::numeric_limits<int>::max()};
    int hi[3] = {std::numeric_limits<int>::min(), std::numeric_limits<int>::min(),
                 std::numeric_limits<int>::min()};
    for (const Voxel& v : voxels) {
      const int c[3] = {v.x, v.y, v.z};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    }
    nx_ = hi[0] - lo[0] + 1;
    ny_ = hi[1] - lo[1] + 1;
    nz_ = hi[2] - lo[2] + 1;
    occ_.assign(static_cast<std::size_t>(nx_) * ny_ * nz_, 0);
    for (const Voxel& v : voxels) {
      auto& bit = occ_[index(v.x - lo[0], v.y - lo[1], v.z - lo[2])];
      if (!bit) ++volume_;
      bit = 1;
    }
  }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }
  double cell_cm() const { return cell_cm_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  long long volume() const { return volume_; }
  long long aabb_volume() const {
    return static_cast<long long>(nx_) * ny_ * nz_;
  }

  bool at(int x, int y, int z) const { return occ_[index(x, y, z)] != 0; }
  bool get(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx_ && y < ny_ && z < nz_ &&
           at(x, y, z);
  }

  /// Occupied voxels in canonical (z, y, x) lexicographic order.
  std::vector<Voxel> voxels() const {
    std::vector<Voxel> out;
    out.reserve(static_cast<std::size_t>(volume_));
    for (int z = 0; z < nz_; ++z)
      for (int y = 0; y < ny_; ++y)
        for (int x = 0; x < nx_; ++x)
          if (at(x, y, z)) out.push_back({x, y, z});
    return out;
  }

  const std::vector<std::uint8_t>& occupancy() const { return occ_; }

  /// Same geometry; name and cell size are not compared.
  bool same_occupancy(const VoxelShape& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ && occ_ == o.occ_;
  }

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny_ + y) * nx_ + x;
  }

  std::string name_;
  double cell_cm_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  int nz_ = 0;
  long long volume_ = 0;
  std::vector<std::uint8_t> occ_;
};

// ---------------------------------------------------------------------------
// Rotations

inline constexpr int kOrientationCount = 24;
inline constexpr int kSpinCount = 4;

/// Signed permutation matrix, row-major.
using Rotation = std::array<int, 9>;

namespace detail {

inline std::array<Rotation, kOrientationCount> make_rotations() {
  std::array<Rotation, kOrientationCount> out{};
  std::array<int, 3> perm{0, 1, 2};
  int n = 0;
  do {
    for (int signs = 0; signs < 8; ++signs) {
      Rotation r{};
      for (int row = 0; row < 3; ++row) {
        r[row * 3 + perm[row]] = (signs >> row) & 1 ? -1 : 1;
      }
      const int det = r[0] * (r[4] * r[8] - r[5] * r[7]) -
                      r[1] * (r[3] * r[8] - r[5] * r[6]) +
                      r[2] * (r[3] * r[7] - r[4] * r[6]);
      if (det == 1) out[n++] = r;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

inline Rotation multiply(const Rotation& a, const Rotation& b) {
  Rotation c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

}  // namespace detail

/// The proper rotations of the cube; index 0 is the identity.
inline const std::array<Rotation, kOrientationCount>& rotations() {
  static const auto table = detail::make_rotations();
  return table;
}

inline int rotation_index(const Rotation& r) {
  const auto& t = rotations();
  for (int i = 0; i < kOrientationCount; ++i)
    if (t[i] == r) return i;
  throw std::logic_error("rotation_index: not a cube rotation");
}

inline int inverse_orientation(int orientation) {
  const Rotation& r = rotations().at(orientation);
  Rotation t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i * 3 + j] = r[j * 3 + i];
  return rotation_index(t);
}

/// Rotation applying `first`, then `second`.
inline int compose_orientation(int first, int second) {
  return rotation_index(
      detail::multiply(rotations().at(second), rotations().at(first)));
}

/// Quarter turns counter-clockwise about +z.
inline int spin_orientation(int spin) {
  static const std::array<int, kSpinCount> table = [] {
    std::array<int, kSpinCount> t{};
    Rotation r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    const Rotation quarter{0, -1, 0, 1, 0, 0, 0, 0, 1};
    for (int k = 0; k < kSpinCount; ++k) {
      t[k] = rotation_index(r);
      r = detail::multiply(quarter, r);
    }
    return t;
  }();
  return table.at(((spin % kSpinCount) + kSpinCount) % kSpinCount);
}

/// Orientation obtained by applying `orientation` and then `spin` quarter
/// turns about the vertical axis.
inline int oriented_with_spin(int orientation, int spin) {
  return compose_orientation(orientation, spin_orientation(spin));
}

inline VoxelShape rotate24(const VoxelShape& shape, int orientation) {
  if (orientation < 0 || orientation >= kOrientationCount) {
    throw std::invalid_argument("rotate24: orientation index out of range");
  }
  const Rotation& r = rotations()[orientation];
  std::vector<Voxel> out;
  out.reserve(static_cast<std::size_t>(shape.volume()));
  for (const Voxel& v : shape.voxels()) {
    out.push_back({r[0] * v.x + r[1] * v.y + r[2] * v.z,
                   r[3] * v.x + r[4] * v.y + r[5] * v.z,
                   r[6] * v.x + r[7] * v.y + r[8] * v.z});
  }
  return VoxelShape(shape.name(), out, shape.cell_cm());
}

/// Replaces every voxel by a factor^3 block (changes the resolution).
inline VoxelShape scaled(const VoxelShape& shape, int factor) {
  if (factor < 1) throw std::invalid_argument("scaled: factor must be >= 1");
  if (factor == 1) return shape;
  std::vector<Voxel> out;
  out.reserve(static_cast<std::size_t>(shape.volume()) * factor * factor * factor);
  for (const Voxel& v : shape.voxels())
    for (int dz = 0; dz < factor; ++dz)
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          out.push_back({v.x * factor + dx, v.y * factor + dy, v.z * factor + dz});
  return VoxelShape(shape.name(), out, shape.cell_cm() / factor);
}

/// Integer voxel-to-heightmap resolution factor, e.g. 6 cm cubes on a 1 cm
/// heightmap -> 6.
inline int resolution_factor(double cell_cm, double grid_cm) {
  const double f = cell_cm / grid_cm;
  const long r = std::lround(f);
  if (r < 1 || std::abs(f - static_cast<double>(r)) > 1e-6) {
    throw std::invalid_argument(
        "resolution_factor: shape cell size must be an integer multiple of "
        "the heightmap cell size");
  }
  return static_cast<int>(r);
}

// ---------------------------------------------------------------------------
// Poses

struct Pose {
  int orientation = 0;
  bool stable = false;
  friend constexpr bool operator==(const Pose&, const Pose&) = default;
};

/// True iff the centre of mass projects strictly inside the convex hull of
/// the bottom-layer cell squares.
inline bool is_planar_stable(const VoxelShape& s) {
  // Work in integer units scaled by 2 * volume so the COM is exact.
  const long long n = s.volume();
  long long sum_x = 0;
  long long sum_y = 0;
  for (const Voxel& v : s.voxels()) {
    sum_x += 2 * v.x + 1;
    sum_y += 2 * v.y + 1;
  }
  struct P {
    long long x, y;
    auto operator<=>(const P&) const = default;
  };
  std::vector<P> corners;
  for (int y = 0; y < s.ny(); ++y)
    for (int x = 0; x < s.nx(); ++x)
      if (s.at(x, y, 0))
        for (int dy = 0; dy <= 1; ++dy)
          for (int dx = 0; dx <= 1; ++dx) corners.push_back({x + dx, y + dy});
  std::sort(corners.begin(), corners.end());
  corners.erase(std::unique(corners.begin(), corners.end()), corners.end());

  auto cross = [](P o, P a, P b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  // Andrew's monotone chain, counter-clockwise, collinear points dropped.
  std::vector<P> hull(2 * corners.size());
  std::size_t k = 0;
  for (const P& p : corners) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = corners.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], corners[i]) <= 0) --k;
    hull[k++] = corners[i];
  }
  hull.resize(k - 1);

  const P com{sum_x, sum_y};
  const long long scale = 2 * n;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const P a{hull[i].x * scale, hull[i].y * scale};
    const P b{hull[(i + 1) % hull.size()].x * scale,
              hull[(i + 1) % hull.size()].y * scale};
    if (cross(a, b, com) <= 0) return false;
  }
  return true;
}

/// Stable orientations among the 24 rotations, in orientation-index order.
inline std::vector<Pose> stable_poses(const VoxelShape& shape) {
  std::vector<Pose> out;
  for (int o = 0; o < kOrientationCount; ++o)
    if (is_planar_stable(rotate24(shape, o))) out.push_back({o, true});
  return out;
}

namespace detail {

// Ordering key for choosing a pose's representative vertical spin: prefer
// s_x <= s_y, then m_x <= m_y, then the smaller occupancy.
inline auto spin_key(const VoxelShape& s) {
  long long mx = 0;
  long long my = 0;
  for (const Voxel& v : s.voxels()) {
    mx += v.x;
    my += v.y;
  }
  return std::make_tuple(s.nx() > s.ny(), mx > my, s.nx(), s.ny(), s.nz(),
                         s.occupancy());
}

}  // namespace detail

/// Orientation of the pose's representative among its four vertical spins.
inline int canonical_spin_orientation(const VoxelShape& shape, int orientation) {
  int best = oriented_with_spin(orientation, 0);
  auto best_key = detail::spin_key(rotate24(shape, best));
  for (int spin = 1; spin < kSpinCount; ++spin) {
    const int o = oriented_with_spin(orientation, spin);
    auto key = detail::spin_key(rotate24(shape, o));
    if (key < best_key) {
      best_key = std::move(key);
      best = o;
    }
  }
  return best;
}

/// Drops poses whose canonical occupancy is within XOR ratio c of an earlier
/// kept pose. Returned poses carry their canonical orientation.
inline std::vector<Pose> dedup_poses(const std::vector<Pose>& poses,
                                     const VoxelShape& shape, double c) {
  if (c < 0.0 || c >= 1.0) {
    throw std::invalid_argument("dedup_poses: c must lie in [0, 1)");
  }
  std::vector<Pose> canon;
  std::vector<VoxelShape> shapes;
  int dx = 0;
  int dy = 0;
  int dz = 0;
  for (const Pose& p : poses) {
    const int o = canonical_spin_orientation(shape, p.orientation);
    canon.push_back({o, p.stable});
    shapes.push_back(rotate24(shape, o));
    dx = std::max(dx, shapes.back().nx());
    dy = std::max(dy, shapes.back().ny());
    dz = std::max(dz, shapes.back().nz());
  }
  auto voxelize = [&](const VoxelShape& s) {
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(dx) * dy * dz, 0);
    for (const Voxel& v : s.voxels())
      grid[(static_cast<std::size_t>(v.z) * dy + v.y) * dx + v.x] = 1;
    return grid;
  };

  std::vector<Pose> kept;
  std::vector<std::vector<std::uint8_t>> labels;
  for (std::size_t i = 0; i < canon.size(); ++i) {
    auto lp = voxelize(shapes[i]);
    const double denom = static_cast<double>(shapes[i].volume());
    bool redundant = false;
    for (const auto& l : labels) {
      std::size_t diff = 0;
      for (std::size_t k = 0; k < l.size(); ++k) diff += (l[k] ^ lp[k]);
      if (static_cast<double>(diff) / denom <= c) {
        redundant = true;
        break;
      }
    }
    if (!redundant) {
      kept.push_back(canon[i]);
      labels.push_back(std::move(lp));
    }
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Footprints

/// Top-down column profile of an oriented shape.
struct FootprintMaps {
  BinaryGrid mask;
  std::vector<int> bottom;  // min occupied z per column (valid where mask)
  std::vector<int> top;     // max occupied z + 1 per column
  int height = 0;
  long long volume = 0;

  int width() const { return mask.width(); }
  int depth() const { return mask.height(); }
  int bottom_at(int x, int y) const {
    return bottom[static_cast<std::size_t>(y) * mask.width() + x];
  }
  int top_at(int x, int y) const {
    return top[static_cast<std::size_t>(y) * mask.width() + x];
  }
  friend bool operator==(const FootprintMaps&, const FootprintMaps&) = default;
};

inline FootprintMaps footprint_of(const VoxelShape& s) {
  FootprintMaps fp;
  fp.mask = BinaryGrid(s.nx(), s.ny());
  fp.bottom.assign(static_cast<std::size_t>(s.nx()) * s.ny(), 0);
  fp.top.assign(static_cast<std::size_t>(s.nx()) * s.ny(), 0);
  fp.height = s.nz();
  fp.volume = s.volume();
  for (int y = 0; y < s.ny(); ++y) {
    for (int x = 0; x < s.nx(); ++x) {
      int lo = -1;
      int hi = -1;
      for (int z = 0; z < s.nz(); ++z) {
        if (!s.at(x, y, z)) continue;
        if (lo < 0) lo = z;
        hi = z;
      }
      if (lo < 0) continue;
      const std::size_t i = static_cast<std::size_t>(y) * s.nx() + x;
      fp.mask.set(x, y, true);
      fp.bottom[i] = lo;
      fp.top[i] = hi + 1;
    }
  }
  return fp;
}

inline FootprintMaps footprint_maps(const VoxelShape& shape, const Pose& pose,
                                    int spin) {
  return footprint_of(rotate24(shape, oriented_with_spin(pose.orientation, spin)));
}

/// Height of the centre of mass above the shape's bottom, in cells.
inline double com_height(const VoxelShape& s) {
  long long sum = 0;
  for (const Voxel& v : s.voxels()) sum += 2 * v.z + 1;
  return static_cast<double>(sum) / (2.0 * static_cast<double>(s.volume()));
}

// ---------------------------------------------------------------------------
// Built-in shapes

/// Eight polycubes of at most four unit cubes, 6 cm per cube.
inline std::vector<VoxelShape> gen_polycubes() {
  constexpr double kCubeCm = 6.0;
  return {
      VoxelShape("monocube", {{0, 0, 0}}, kCubeCm),
      VoxelShape("domino", {{0, 0, 0}, {1, 0, 0}}, kCubeCm),
      VoxelShape("tricube_i", {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, kCubeCm),
      VoxelShape("tricube_l", {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, kCubeCm),
      VoxelShape("tetracube_l", {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}},
                 kCubeCm),
      VoxelShape("tetracube_t", {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1, 1, 0}},
                 kCubeCm),
      VoxelShape("tetracube_s", {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {2, 1, 0}},
                 kCubeCm),
      VoxelShape("tetracube_o", {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}},
                 kCubeCm),
  };
}

// ---------------------------------------------------------------------------
// Datasets and problems

inline constexpr double kDefaultDedupTolerance = 0.05;

struct DatasetEntry {
  VoxelShape shape;
  std::vector<Pose> poses;
};
using Dataset = std::vector<DatasetEntry>;

/// Stable poses with rotation-symmetric duplicates removed.
inline DatasetEntry prepare_entry(VoxelShape shape,
                                  double c = kDefaultDedupTolerance) {
  auto poses = dedup_poses(stable_poses(shape), shape, c);
  return {std::move(shape), std::move(poses)};
}

/// Rescales every shape to the heightmap resolution; poses carry over.
inline Dataset at_resolution(const Dataset& ds, double grid_cm) {
  Dataset out;
  out.reserve(ds.size());
  for (const auto& e : ds) {
    out.push_back(
        {scaled(e.shape, resolution_factor(e.shape.cell_cm(), grid_cm)), e.poses});
  }
  return out;
}

inline Dataset polycube_dataset(double c = kDefaultDedupTolerance) {
  Dataset ds;
  for (auto& s : gen_polycubes()) ds.push_back(prepare_entry(std::move(s), c));
  return ds;
}

struct ContainerDims {
  int sx = 0;
  int sy = 0;
  int sz = 0;
  long long volume() const { return static_cast<long long>(sx) * sy * sz; }
  friend constexpr bool operator==(const ContainerDims&, const ContainerDims&) = default;
};

struct ProblemItem {
  int shape = 0;
  int orientation = 0;
  int spin = 0;
  friend constexpr bool operator==(const ProblemItem&, const ProblemItem&) = default;
};

struct ProblemSequence {
  ContainerDims container;
  std::uint64_t seed = 0;
  std::vector<ProblemItem> items;
  friend bool operator==(const ProblemSequence&, const ProblemSequence&) = default;
};

/// Unbiased draw from [0, n).
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t bound = n;
  // Values below 2^64 mod n would bias the low residues.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

inline double uniform_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool fits_container(const VoxelShape& s, const ContainerDims& c) {
  if (s.nz() > c.sz) return false;
  return (s.nx() <= c.sx && s.ny() <= c.sy) || (s.ny() <= c.sx && s.nx() <= c.sy);
}

/// Draws (shape, pose, spin) uniformly with replacement until the drawn
/// volume first exceeds the container volume. Shapes must already be at the
/// container's resolution.
inline ProblemSequence emit_problem(const Dataset& dataset,
                                    const ContainerDims& container,
                                    std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("emit_problem: empty dataset");
  for (const auto& e : dataset) {
    if (e.poses.empty()) {
      throw std::invalid_argument("emit_problem: shape '" + e.shape.name() +
                                  "' has no poses");
    }
    bool fits = false;
    for (const Pose& p : e.poses)
      fits = fits || fits_container(rotate24(e.shape, p.orientation), container);
    if (!fits) {
      throw std::invalid_argument("emit_problem: shape '" + e.shape.name() +
                                  "' does not fit the container in any pose");
    }
  }
  ProblemSequence seq;
  seq.container = container;
  seq.seed = seed;
  std::mt19937_64 rng(seed);
  long long total = 0;
  while (total <= container.volume()) {
    ProblemItem item;
    item.shape = static_cast<int>(uniform_index(rng, dataset.size()));
    const auto& e = dataset[item.shape];
    item.orientation = e.poses[uniform_index(rng, e.poses.size())].orientation;
    item.spin = static_cast<int>(uniform_index(rng, kSpinCount));
    seq.items.push_back(item);
    total += e.shape.volume();
  }
  return seq;
}

// ---------------------------------------------------------------------------
// JSON formats

inline nlohmann::json shape_to_json(const VoxelShape& s) {
  nlohmann::json vox = nlohmann::json::array();
  for (const Voxel& v : s.voxels()) vox.push_back({v.x, v.y, v.z});
  return {{"name", s.name()},
          {"dims", {s.nx(), s.ny(), s.nz()}},
          {"cell_cm", s.cell_cm()},
          {"voxels", std::move(vox)}};
}

inline VoxelShape shape_from_json(const nlohmann::json& j) {
  std::vector<Voxel> vox;
  for (const auto& v : j.at("voxels")) {
    vox.push_back({v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>()});
  }
  VoxelShape s(j.at("name").get<std::string>(), vox,
               j.at("cell_cm").get<double>());
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    if (d.at(0).get<int>() != s.nx() || d.at(1).get<int>() != s.ny() ||
        d.at(2).get<int>() != s.nz()) {
      throw std::invalid_argument("shape '" + s.name() +
                                  "': dims do not match the trimmed voxels");
    }
  }
  return s;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json problem_to_json(const ProblemSequence& p) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : p.items) {
    items.push_back({{"shape", it.shape}, {"pose", it.orientation}, {"spin", it.spin}});
  }
  return {{"container", {p.container.sx, p.container.sy, p.container.sz}},
          {"seed", p.seed},
          {"items", std::move(items)}};
}

inline ProblemSequence problem_from_json(const nlohmann::json& j) {
  ProblemSequence p;
  const auto& c = j.at("container");
  p.container = {c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()};
  p.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& it : j.at("items")) {
    p.items.push_back({it.at("shape").get<int>(), it.at("pose").get<int>(),
                       it.at("spin").get<int>()});
  }
  return p;
}

}  // namespace voxpack
