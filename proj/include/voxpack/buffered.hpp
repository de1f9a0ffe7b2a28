#pragma once

// Buffered packing: up to K arrived objects wait in a staging area; an
// ordering rule picks which one the placement policy packs next.

#include <chrono>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxpack/candgen.hpp"
#include "voxpack/learner.hpp"
#include "voxpack/packenv.hpp"
#include "voxpack/policies.hpp"

namespace voxpack {

struct BufferSlot {
  PreparedItem item;
  std::size_t arrival = 0;  // position in the stream
};

struct BufferState {
  int capacity = 1;
  std::vector<BufferSlot> slots;  // in arrival order
  std::size_t cursor = 0;         // next stream position to pull

  bool empty() const { return slots.empty(); }
};

/// Largest volume; ties go to the earliest arrival.
inline std::size_t select_lfss(const BufferState& buf) {
  if (buf.empty()) throw std::invalid_argument("select_lfss: empty buffer");
  std::size_t best = 0;
  for (std::size_t i = 1; i < buf.slots.size(); ++i)
    if (buf.slots[i].item.volume > buf.slots[best].item.volume) best = i;
  return best;
}

/// Slot whose best candidate has the highest Q; items without candidates
/// score -inf. nullopt when no slot has a candidate.
inline std::optional<std::size_t> select_learned_object(const BufferState& buf,
                                                        const PackingState& state,
                                                        const ContainerSpec& spec,
                                                        const ValueModel& model,
                                                        int total_items) {
  if (buf.empty()) throw std::invalid_argument("select_learned_object: empty buffer");
  const int remaining = static_cast<int>(
      buf.slots.size() + (static_cast<std::size_t>(total_items) - buf.cursor));
  std::optional<std::size_t> best;
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < buf.slots.size(); ++i) {
    const CandidateSet cs = generate_candidates(state, buf.slots[i].item, spec);
    if (cs.empty()) continue;
    const auto q = qvalues(
        model, decision_features(state, buf.slots[i].item, spec, cs, remaining, total_items));
    const double m = *std::max_element(q.begin(), q.end());
    if (!best || m > best_q) {
      best = i;
      best_q = m;
    }
  }
  return best;
}

class ObjectOrdering {
 public:
  virtual ~ObjectOrdering() = default;
  virtual std::string name() const = 0;
  /// nullopt ends the episode.
  virtual std::optional<std::size_t> select(const BufferState& buf, const PackingState& state,
                                            const ContainerSpec& spec, int total_items) = 0;
};

class FifoOrdering final : public ObjectOrdering {
 public:
  std::string name() const override { return "fifo"; }
  std::optional<std::size_t> select(const BufferState& buf, const PackingState&,
                                    const ContainerSpec&, int) override {
    if (buf.empty()) throw std::invalid_argument("fifo: empty buffer");
    return 0;
  }
};

class LfssOrdering final : public ObjectOrdering {
 public:
  std::string name() const override { return "lfss"; }
  std::optional<std::size_t> select(const BufferState& buf, const PackingState&,
                                    const ContainerSpec&, int) override {
    return select_lfss(buf);
  }
};

class LearnedOrdering final : public ObjectOrdering {
 public:
  explicit LearnedOrdering(std::shared_ptr<const ValueModel> model) : model_(std::move(model)) {}
  std::string name() const override { return "learned"; }
  std::optional<std::size_t> select(const BufferState& buf, const PackingState& state,
                                    const ContainerSpec& spec, int total_items) override {
    return select_learned_object(buf, state, spec, *model_, total_items);
  }

 private:
  std::shared_ptr<const ValueModel> model_;
};

inline std::unique_ptr<ObjectOrdering> make_ordering(const std::string& name,
                                                     std::shared_ptr<const ValueModel> model = {}) {
  if (name == "fifo") return std::make_unique<FifoOrdering>();
  if (name == "lfss") return std::make_unique<LfssOrdering>();
  if (name == "learned") {
    if (!model) throw std::invalid_argument("learned ordering needs a model");
    return std::make_unique<LearnedOrdering>(std::move(model));
  }
  throw std::invalid_argument("unknown ordering '" + name + "'");
}

/// An episode whose items pass through a K-slot buffer.
class BufferedEpisode {
 public:
  BufferedEpisode(const Dataset& dataset, ContainerSpec spec, ProblemSequence problem, int k)
      : dataset_(&dataset), spec_(spec), problem_(std::move(problem)), state_(spec_) {
    spec_.validate();
    if (k < 1) throw std::invalid_argument("BufferedEpisode: buffer size must be >= 1");
    if (problem_.container != spec_.dims()) {
      throw std::invalid_argument("BufferedEpisode: problem container mismatch");
    }
    buf_.capacity = k;
    if (problem_.items.empty()) state_.done = true;
  }

  const PackingState& state() const { return state_; }
  const BufferState& buffer() const { return buf_; }
  bool done() const { return state_.done; }
  int total_items() const { return static_cast<int>(problem_.items.size()); }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  /// Stream positions in the order they were placed.
  const std::vector<std::size_t>& order() const { return order_; }

  /// Pulls arrivals until the buffer is full or the stream runs dry.
  void refill() {
    while (static_cast<int>(buf_.slots.size()) < buf_.capacity &&
           buf_.cursor < problem_.items.size()) {
      buf_.slots.push_back({prepare_item(*dataset_, problem_.items[buf_.cursor]), buf_.cursor});
      ++buf_.cursor;
    }
  }

  /// Refill, select a slot, place it. Returns the step outcome; an ordering
  /// or policy with nothing to offer ends the episode without reward.
  StepOutcome step(ObjectOrdering& ordering, PlacementPolicy& policy, std::mt19937_64& rng) {
    if (state_.done) throw std::logic_error("BufferedEpisode: episode already finished");
    refill();
    const int remaining = static_cast<int>(buf_.slots.size() + problem_.items.size() - buf_.cursor);
    const auto slot = ordering.select(buf_, state_, spec_, total_items());
    std::optional<PolicyDecision> d;
    if (slot) {
      d = decide_for(policy, state_, buf_.slots[*slot].item, spec_, remaining, total_items(), rng);
    }
    if (!d) {
      state_.done = true;
      return {0.0, true};
    }
    const BufferSlot chosen = buf_.slots[*slot];
    buf_.slots.erase(buf_.slots.begin() + static_cast<std::ptrdiff_t>(*slot));
    StepOutcome out = place(state_, chosen.item, d->action, spec_);
    trace_.push_back({state_.step, chosen.item.shape, d->action.spin, d->action.lx,
                      d->action.ly, d->action.lz, out.reward, utility(state_, spec_)});
    if (!out.done) order_.push_back(chosen.arrival);
    if (!out.done && buf_.slots.empty() && buf_.cursor >= problem_.items.size()) {
      state_.done = true;
      out.done = true;
    }
    return out;
  }

 private:
  const Dataset* dataset_;
  ContainerSpec spec_;
  ProblemSequence problem_;
  PackingState state_;
  BufferState buf_;
  std::vector<TraceRecord> trace_;
  std::vector<std::size_t> order_;
};

struct BufferedResult : EpisodeResult {
  std::vector<std::size_t> order;
};

inline BufferedResult run_buffered_episode(ObjectOrdering& ordering, PlacementPolicy& policy,
                                           const Dataset& dataset, const ContainerSpec& spec,
                                           const ProblemSequence& problem,
                                           std::uint64_t policy_seed, int k) {
  BufferedEpisode ep(dataset, spec, problem, k);
  std::mt19937_64 rng(policy_seed);
  BufferedResult r;
  while (!ep.done()) {
    const auto t0 = std::chrono::steady_clock::now();
    ep.step(ordering, policy, rng);
    r.decision_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++r.decisions;
  }
  r.utility = utility(ep.state(), spec);
  r.product_utility = product_utility(ep.state(), spec);
  r.placed = static_cast<int>(ep.state().placements.size());
  r.items = ep.total_items();
  r.trace = ep.trace();
  r.order = ep.order();
  return r;
}

}  // namespace voxpack
