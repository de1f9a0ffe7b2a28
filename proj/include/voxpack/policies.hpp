#pragma once

// Baseline placement policies. FF and grid-Random scan the stride grid;
// BLBF, MTPE, HM and Random-pi choose among generated candidates.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxpack/candgen.hpp"
#include "voxpack/packenv.hpp"

namespace voxpack {

struct PolicyDecision {
  ActionTuple action;
  double score = 0.0;
  std::size_t considered = 0;
  // Index into the candidate set, when the decision came from one.
  std::optional<std::size_t> candidate_index;
};

/// First feasible placement scanning spins, then rows (y), then columns (x).
inline std::optional<PolicyDecision> select_ff(const PackingState& state,
                                               const PreparedItem& item,
                                               const ContainerSpec& spec) {
  std::size_t considered = 0;
  for (int spin = 0; spin < kSpinCount; ++spin) {
    const FootprintMaps& fp = item.footprints[spin];
    for (int ly = 0; ly < spec.sy; ly += spec.grid_stride) {
      for (int lx = 0; lx < spec.sx; lx += spec.grid_stride) {
        ++considered;
        const int lz = landing_altitude(state.heightmap, fp, lx, ly, spec.sz);
        if (lz != kInfeasible) {
          return PolicyDecision{{spin, lx, ly, lz}, 0.0, considered, std::nullopt};
        }
      }
    }
  }
  return std::nullopt;
}

/// Bottom (z), back (y), left (x) minimum; the candidate order already is.
inline std::optional<PolicyDecision> select_blbf(const CandidateSet& cands) {
  if (cands.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i)
    if (cands[i].sort_key() < cands[best].sort_key()) best = i;
  return PolicyDecision{cands[best].action(), double(cands[best].lz), cands.size(), best};
}

namespace detail {

template <typename Score>
std::optional<PolicyDecision> argmin_candidate(const CandidateSet& cands,
                                               Score score) {
  if (cands.empty()) return std::nullopt;
  std::size_t best = 0;
  double best_score = score(cands[0]);
  for (std::size_t i = 1; i < cands.size(); ++i) {
    const double s = score(cands[i]);
    if (s < best_score ||
        (s == best_score && cands[i].sort_key() < cands[best].sort_key())) {
      best = i;
      best_score = s;
    }
  }
  return PolicyDecision{cands[best].action(), best_score, cands.size(), best};
}

}  // namespace detail

/// Lowest resulting centre-of-mass height.
inline std::optional<PolicyDecision> select_mtpe(const CandidateSet& cands,
                                                 const PreparedItem& item) {
  return detail::argmin_candidate(cands, [&](const PlacementCandidate& c) {
    return c.lz + item.com_z[c.spin];
  });
}

/// Heightmap volume added by the placement, as seen from above.
inline long long heightmap_increase(const HeightMap& h, const FootprintMaps& fp,
                                    int lx, int ly, int lz) {
  long long add = 0;
  for (int j = 0; j < fp.depth(); ++j)
    for (int i = 0; i < fp.width(); ++i)
      if (fp.mask.at(i, j)) {
        const int before = h.at(lx + i, ly + j);
        add += std::max(before, lz + fp.top_at(i, j)) - before;
      }
  return add;
}

inline std::optional<PolicyDecision> select_hm(const PackingState& state,
                                               const CandidateSet& cands,
                                               const PreparedItem& item) {
  return detail::argmin_candidate(cands, [&](const PlacementCandidate& c) {
    return static_cast<double>(heightmap_increase(
        state.heightmap, item.footprints[c.spin], c.lx, c.ly, c.lz));
  });
}

/// Uniform over feasible (spin, grid point) pairs.
inline std::optional<PolicyDecision> select_random_grid(const PackingState& state,
                                                        const PreparedItem& item,
                                                        const ContainerSpec& spec,
                                                        std::mt19937_64& rng) {
  std::vector<ActionTuple> feasible;
  for (int spin = 0; spin < kSpinCount; ++spin)
    for (int ly = 0; ly < spec.sy; ly += spec.grid_stride)
      for (int lx = 0; lx < spec.sx; lx += spec.grid_stride) {
        const int lz =
            landing_altitude(state.heightmap, item.footprints[spin], lx, ly, spec.sz);
        if (lz != kInfeasible) feasible.push_back({spin, lx, ly, lz});
      }
  if (feasible.empty()) return std::nullopt;
  const std::size_t pick = uniform_index(rng, feasible.size());
  return PolicyDecision{feasible[pick], 0.0, feasible.size(), std::nullopt};
}

inline std::optional<PolicyDecision> select_random_candidate(const CandidateSet& cands,
                                                             std::mt19937_64& rng) {
  if (cands.empty()) return std::nullopt;
  const std::size_t pick = uniform_index(rng, cands.size());
  return PolicyDecision{cands[pick].action(), 0.0, cands.size(), pick};
}

// ---------------------------------------------------------------------------
// Policy interface

/// Everything a policy may look at for one decision.
struct DecisionContext {
  const PackingState* state = nullptr;
  const PreparedItem* item = nullptr;
  const ContainerSpec* spec = nullptr;
  const CandidateSet* candidates = nullptr;  // set when uses_candidates()
  int remaining_items = 0;                   // including the current one
  int total_items = 0;
  std::mt19937_64* rng = nullptr;
};

class PlacementPolicy {
 public:
  virtual ~PlacementPolicy() = default;
  virtual std::string name() const = 0;
  virtual bool uses_candidates() const = 0;
  /// nullopt signals that nothing is placeable (episode ends).
  virtual std::optional<PolicyDecision> decide(const DecisionContext& ctx) = 0;
};

class FirstFitPolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "ff"; }
  bool uses_candidates() const override { return false; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_ff(*ctx.state, *ctx.item, *ctx.spec);
  }
};

class RandomGridPolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "random"; }
  bool uses_candidates() const override { return false; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_random_grid(*ctx.state, *ctx.item, *ctx.spec, *ctx.rng);
  }
};

class BlbfPolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "blbf"; }
  bool uses_candidates() const override { return true; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_blbf(*ctx.candidates);
  }
};

class MtpePolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "mtpe"; }
  bool uses_candidates() const override { return true; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_mtpe(*ctx.candidates, *ctx.item);
  }
};

class HeightmapPolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "hm"; }
  bool uses_candidates() const override { return true; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_hm(*ctx.state, *ctx.candidates, *ctx.item);
  }
};

class RandomCandidatePolicy final : public PlacementPolicy {
 public:
  std::string name() const override { return "random-pi"; }
  bool uses_candidates() const override { return true; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    return select_random_candidate(*ctx.candidates, *ctx.rng);
  }
};

/// Heuristic and random baselines by CLI name ("learned" is built elsewhere).
inline std::unique_ptr<PlacementPolicy> make_baseline_policy(const std::string& name) {
  if (name == "ff") return std::make_unique<FirstFitPolicy>();
  if (name == "random") return std::make_unique<RandomGridPolicy>();
  if (name == "blbf") return std::make_unique<BlbfPolicy>();
  if (name == "mtpe") return std::make_unique<MtpePolicy>();
  if (name == "hm") return std::make_unique<HeightmapPolicy>();
  if (name == "random-pi") return std::make_unique<RandomCandidatePolicy>();
  throw std::invalid_argument("unknown policy '" + name + "'");
}

/// One decision: builds candidates when the policy wants them.
inline std::optional<PolicyDecision> decide_for(PlacementPolicy& policy,
                                                const PackingState& state,
                                                const PreparedItem& item,
                                                const ContainerSpec& spec,
                                                int remaining_items, int total_items,
                                                std::mt19937_64& rng,
                                                CandidateSet* cands_out = nullptr) {
  DecisionContext ctx;
  ctx.state = &state;
  ctx.item = &item;
  ctx.spec = &spec;
  ctx.remaining_items = remaining_items;
  ctx.total_items = total_items;
  ctx.rng = &rng;
  CandidateSet local;
  if (policy.uses_candidates()) {
    local = generate_candidates(state, item, spec);
    ctx.candidates = &local;
  }
  auto d = policy.decide(ctx);
  if (cands_out) *cands_out = std::move(local);
  return d;
}

inline std::optional<PolicyDecision> decide_step(PlacementPolicy& policy,
                                                 const Episode& ep,
                                                 std::mt19937_64& rng,
                                                 CandidateSet* cands_out = nullptr) {
  return decide_for(policy, ep.state(), ep.current_item(), ep.spec(),
                    ep.remaining_items(), ep.total_items(), rng, cands_out);
}

struct EpisodeResult {
  double utility = 0.0;
  double product_utility = 0.0;
  int placed = 0;
  int items = 0;
  int decisions = 0;
  double decision_seconds = 0.0;  // candidate generation plus policy inference
  std::vector<TraceRecord> trace;
};

/// Plays one problem sequence to the end. The policy's generator is seeded
/// with `policy_seed`.
inline EpisodeResult run_episode(PlacementPolicy& policy, const Dataset& dataset,
                                 const ContainerSpec& spec,
                                 const ProblemSequence& problem,
                                 std::uint64_t policy_seed) {
  Episode ep(dataset, spec, problem);
  std::mt19937_64 rng(policy_seed);
  EpisodeResult r;
  while (!ep.done()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = decide_step(policy, ep, rng);
    r.decision_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++r.decisions;
    if (!d) {
      ep.terminate();
      break;
    }
    ep.step(d->action);
  }
  r.utility = utility(ep.state(), spec);
  r.product_utility = product_utility(ep.state(), spec);
  r.placed = static_cast<int>(ep.state().placements.size());
  r.items = ep.total_items();
  r.trace = ep.trace();
  return r;
}

}  // namespace voxpack
