#pragma once

// Online packing environment on a container heightmap. Objects are dropped
// vertically and rest at their landing altitude; cavities under overhangs
// become unreachable.

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxpack/gridgeom.hpp"
#include "voxpack/shapelib.hpp"

namespace voxpack {

inline constexpr int kInfeasible = AltitudeMap::kInfeasible;

/// Container and candidate-generation parameters. Sizes are in heightmap
/// cells; grid_cm is the edge length of one cell.
struct ContainerSpec {
  int sx = 32;
  int sy = 32;
  int sz = 30;
  double grid_cm = 1.0;   // heightmap resolution
  int grid_stride = 2;    // sampling stride of candidate grid points
  int delta_z = 1;        // region altitude tolerance, cells
  int max_candidates = 500;

  ContainerDims dims() const { return {sx, sy, sz}; }
  long long volume() const { return dims().volume(); }
  // Reward weight: makes the undiscounted return equal the final utility.
  double reward_weight() const { return 1.0 / static_cast<double>(volume()); }

  void validate() const {
    if (sx < 1 || sy < 1 || sz < 1 || grid_cm <= 0.0 || grid_stride < 1 ||
        delta_z < 0 || max_candidates < 1) {
      throw std::invalid_argument("ContainerSpec: invalid parameters");
    }
  }
};

/// 32 x 32 x 30 cm container at 1 cm resolution.
inline ContainerSpec blockout_spec() { return {}; }

/// 32 x 32 x 30 cm container at 2 cm resolution (16 x 16 x 15 cells). The
/// 2 cm candidate spacing of the full-size setup becomes a stride of 1.
inline ContainerSpec desk_spec() {
  ContainerSpec s;
  s.sx = 16;
  s.sy = 16;
  s.sz = 15;
  s.grid_cm = 2.0;
  s.grid_stride = 1;
  s.delta_z = 1;
  return s;
}

class HeightMap {
 public:
  HeightMap() = default;
  HeightMap(int sx, int sy) : sx_(sx), sy_(sy), h_(std::size_t(sx) * sy, 0) {}

  int sx() const { return sx_; }
  int sy() const { return sy_; }
  int at(int x, int y) const { return h_[std::size_t(y) * sx_ + x]; }
  void set(int x, int y, int v) { h_[std::size_t(y) * sx_ + x] = v; }
  const std::vector<int>& values() const { return h_; }

  friend bool operator==(const HeightMap&, const HeightMap&) = default;

 private:
  int sx_ = 0;
  int sy_ = 0;
  std::vector<int> h_;
};

/// One arriving object with its four vertical spins precomputed.
struct PreparedItem {
  int shape = 0;
  int orientation = 0;  // pose orientation, before spins
  int initial_spin = 0;
  long long volume = 0;
  std::array<FootprintMaps, kSpinCount> footprints;
  std::array<double, kSpinCount> com_z{};
  std::array<long long, kSpinCount> aabb_volume{};

  /// Orientation index of the object under action spin `spin`.
  int oriented(int spin) const {
    return oriented_with_spin(orientation, initial_spin + spin);
  }
};

inline PreparedItem prepare_item(const Dataset& dataset, const ProblemItem& it) {
  if (it.shape < 0 || std::size_t(it.shape) >= dataset.size()) {
    throw std::invalid_argument("prepare_item: shape id out of range");
  }
  PreparedItem p;
  p.shape = it.shape;
  p.orientation = it.orientation;
  p.initial_spin = it.spin;
  const VoxelShape& base = dataset[it.shape].shape;
  p.volume = base.volume();
  for (int k = 0; k < kSpinCount; ++k) {
    const VoxelShape s = rotate24(base, p.oriented(k));
    p.footprints[k] = footprint_of(s);
    p.com_z[k] = com_height(s);
    p.aabb_volume[k] = s.aabb_volume();
  }
  return p;
}

struct ActionTuple {
  int spin = 0;
  int lx = 0;
  int ly = 0;
  int lz = 0;
  friend constexpr bool operator==(const ActionTuple&, const ActionTuple&) = default;
};

struct Placement {
  int shape = 0;
  int orientation = 0;  // final orientation, spin included
  int spin = 0;
  int lx = 0;
  int ly = 0;
  int lz = 0;
  long long volume = 0;
  long long aabb_volume = 0;
  friend constexpr bool operator==(const Placement&, const Placement&) = default;
};

struct PackingState {
  HeightMap heightmap;
  std::vector<Placement> placements;
  long long packed_volume = 0;
  int step = 0;
  bool done = false;

  PackingState() = default;
  explicit PackingState(const ContainerSpec& spec)
      : heightmap(spec.sx, spec.sy) {}
  friend bool operator==(const PackingState&, const PackingState&) = default;
};

/// Rest altitude of the footprint dropped at (lx, ly), or kInfeasible when
/// it leaves the container horizontally or sticks out of the top.
inline int landing_altitude(const HeightMap& h, const FootprintMaps& fp, int lx,
                            int ly, int sz) {
  if (lx < 0 || ly < 0 || lx + fp.width() > h.sx() || ly + fp.depth() > h.sy()) {
    return kInfeasible;
  }
  int lz = 0;
  for (int j = 0; j < fp.depth(); ++j)
    for (int i = 0; i < fp.width(); ++i)
      if (fp.mask.at(i, j))
        lz = std::max(lz, h.at(lx + i, ly + j) - fp.bottom_at(i, j));
  if (lz + fp.height > sz) return kInfeasible;
  return lz;
}

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
};

/// Drops the item with `action`. A placement whose altitude is infeasible or
/// disagrees with the drop rule ends the episode without reward.
inline StepOutcome place(PackingState& state, const PreparedItem& item,
                         const ActionTuple& action, const ContainerSpec& spec) {
  if (state.done) throw std::logic_error("place: episode already finished");
  if (action.spin < 0 || action.spin >= kSpinCount) {
    throw std::invalid_argument("place: spin out of range");
  }
  const FootprintMaps& fp = item.footprints[action.spin];
  const int lz = landing_altitude(state.heightmap, fp, action.lx, action.ly, spec.sz);
  ++state.step;
  if (lz == kInfeasible || lz != action.lz) {
    state.done = true;
    return {0.0, true};
  }
  for (int j = 0; j < fp.depth(); ++j) {
    for (int i = 0; i < fp.width(); ++i) {
      if (!fp.mask.at(i, j)) continue;
      const int x = action.lx + i;
      const int y = action.ly + j;
      state.heightmap.set(x, y, std::max(state.heightmap.at(x, y), lz + fp.top_at(i, j)));
    }
  }
  state.placements.push_back({item.shape, item.oriented(action.spin), action.spin,
                              action.lx, action.ly, lz, item.volume,
                              item.aabb_volume[action.spin]});
  state.packed_volume += item.volume;
  return {spec.reward_weight() * static_cast<double>(item.volume), false};
}

inline double utility(const PackingState& state, const ContainerSpec& spec) {
  return static_cast<double>(state.packed_volume) / static_cast<double>(spec.volume());
}

/// Summed placed-pose bounding-box volume over the container volume.
inline double product_utility(const PackingState& state, const ContainerSpec& spec) {
  long long v = 0;
  for (const auto& p : state.placements) v += p.aabb_volume;
  return static_cast<double>(v) / static_cast<double>(spec.volume());
}

/// Observation handed to policies: the heightmap and the incoming object.
struct Observation {
  const HeightMap* heightmap = nullptr;
  const PreparedItem* item = nullptr;  // null once the episode is over
};

struct TraceRecord {
  int step = 0;
  int shape = 0;
  int spin = 0;
  int lx = 0;
  int ly = 0;
  int lz = 0;
  double reward = 0.0;
  double utility = 0.0;
  friend constexpr bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

inline nlohmann::json trace_to_json(const TraceRecord& r) {
  return {{"step", r.step}, {"shape", r.shape}, {"spin", r.spin}, {"lx", r.lx},
          {"ly", r.ly},     {"lz", r.lz},       {"reward", r.reward},
          {"utility", r.utility}};
}

/// JSON lines, one record per step.
inline void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace) {
  for (const auto& r : trace) out << trace_to_json(r).dump() << '\n';
}

/// An online episode over one problem sequence.
class Episode {
 public:
  Episode(const Dataset& dataset, ContainerSpec spec, ProblemSequence problem)
      : dataset_(&dataset), spec_(spec), problem_(std::move(problem)),
        state_(spec_) {
    spec_.validate();
    if (problem_.container != spec_.dims()) {
      throw std::invalid_argument("Episode: problem container mismatch");
    }
    load_current();
  }

  const ContainerSpec& spec() const { return spec_; }
  const Dataset& dataset() const { return *dataset_; }
  const ProblemSequence& problem() const { return problem_; }
  const PackingState& state() const { return state_; }
  bool done() const { return state_.done; }
  std::size_t cursor() const { return cursor_; }
  int remaining_items() const {
    return static_cast<int>(problem_.items.size() - cursor_);
  }
  int total_items() const { return static_cast<int>(problem_.items.size()); }

  const PreparedItem& current_item() const {
    if (state_.done) throw std::logic_error("Episode: no current item");
    return current_;
  }
  Observation observation() const {
    return {&state_.heightmap, state_.done ? nullptr : &current_};
  }

  /// Places the current item and advances the stream.
  StepOutcome step(const ActionTuple& action) {
    const PreparedItem item = current_item();
    StepOutcome out = place(state_, item, action, spec_);
    trace_.push_back({state_.step, item.shape, action.spin, action.lx, action.ly,
                      action.lz, out.reward, utility(state_, spec_)});
    ++cursor_;
    if (!out.done && cursor_ >= problem_.items.size()) {
      state_.done = true;
      out.done = true;
    }
    if (!out.done) load_current();
    return out;
  }

  /// Ends the episode (e.g. no feasible placement exists).
  void terminate() { state_.done = true; }

  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  void load_current() {
    if (cursor_ < problem_.items.size()) {
      current_ = prepare_item(*dataset_, problem_.items[cursor_]);
    } else {
      state_.done = true;
    }
  }

  const Dataset* dataset_;
  ContainerSpec spec_;
  ProblemSequence problem_;
  PackingState state_;
  std::size_t cursor_ = 0;
  PreparedItem current_;
  std::vector<TraceRecord> trace_;
};

}  // namespace voxpack
