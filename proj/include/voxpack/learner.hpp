#pragma once

// Candidate ranker: handcrafted features, a dueling Q model with a shared
// tanh trunk, masked epsilon-greedy selection, double-DQN updates with Adam,
// a uniform replay memory and two training drivers (a deterministic
// interleaved loop and threaded actors feeding one learner).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "voxpack/candgen.hpp"
#include "voxpack/packenv.hpp"
#include "voxpack/policies.hpp"

namespace voxpack {

// ---------------------------------------------------------------------------
// Features

inline constexpr int kStateFeatures = 6;
inline constexpr int kCandidateFeatures = 10;
inline constexpr int kFeatureCount = kStateFeatures + kCandidateFeatures;
inline constexpr int kFeatureSchemaVersion = 1;

/// Features of one decision: the state block and one row per candidate.
/// Stored in single precision; replay keeps many of these alive.
struct Decision {
  std::array<float, kStateFeatures> state{};
  std::vector<float> candidates;  // row-major, kCandidateFeatures per row

  std::size_t size() const { return candidates.size() / kCandidateFeatures; }
  float candidate(std::size_t i, int k) const {
    return candidates[i * kCandidateFeatures + k];
  }
};

/// Fill ratio, mean/max/std height, share of columns at the maximum and the
/// share of the stream still to come.
inline std::array<float, kStateFeatures> state_features(const PackingState& s,
                                                        const ContainerSpec& spec,
                                                        int remaining, int total) {
  const auto& h = s.heightmap.values();
  const double n = static_cast<double>(h.size());
  double sum = 0.0;
  int peak = 0;
  for (int v : h) {
    sum += v;
    peak = std::max(peak, v);
  }
  const double mean = sum / n;
  double var = 0.0;
  int at_peak = 0;
  for (int v : h) {
    var += (v - mean) * (v - mean);
    at_peak += v == peak;
  }
  const double sz = spec.sz;
  return {static_cast<float>(utility(s, spec)),
          static_cast<float>(mean / sz),
          static_cast<float>(peak / sz),
          static_cast<float>(std::sqrt(var / n) / sz),
          static_cast<float>(at_peak / n),
          static_cast<float>(total > 0 ? double(remaining) / total : 0.0)};
}

inline void append_candidate_features(std::vector<float>& out, const PackingState& s,
                                      const PreparedItem& item,
                                      const ContainerSpec& spec,
                                      const PlacementCandidate& c) {
  static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
  static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
  const FootprintMaps& fp = item.footprints[c.spin];
  const HeightMap& h = s.heightmap;
  int peak = 0;
  for (int v : h.values()) peak = std::max(peak, v);
  int contact = 0;
  int cells = 0;
  for (int j = 0; j < fp.depth(); ++j)
    for (int i = 0; i < fp.width(); ++i)
      if (fp.mask.at(i, j)) {
        ++cells;
        contact += h.at(c.lx + i, c.ly + j) == c.lz + fp.bottom_at(i, j);
      }
  const double vol = static_cast<double>(spec.volume());
  const double f[kCandidateFeatures] = {
      kSin[c.spin],
      kCos[c.spin],
      double(c.lx) / spec.sx,
      double(c.ly) / spec.sy,
      double(c.lz) / spec.sz,
      double(std::max(peak, c.lz + fp.height)) / spec.sz,
      double(contact) / cells,
      double(heightmap_increase(h, fp, c.lx, c.ly, c.lz)) / vol,
      c.tightness / std::numbers::pi,
      double(item.volume) / vol};
  out.insert(out.end(), f, f + kCandidateFeatures);
}

inline Decision decision_features(const PackingState& s, const PreparedItem& item,
                                  const ContainerSpec& spec, const CandidateSet& cands,
                                  int remaining, int total) {
  Decision d;
  d.state = state_features(s, spec, remaining, total);
  d.candidates.reserve(cands.size() * kCandidateFeatures);
  for (const auto& c : cands.candidates) append_candidate_features(d.candidates, s, item, spec, c);
  return d;
}

// ---------------------------------------------------------------------------
// Dueling value model

/// Q(s, a_i) = V(s) + A(s, a_i) - mean_j A(s, a_j). Both heads read the same
/// two-layer tanh trunk; V sees the state block with a zero candidate block.
class ValueModel {
 public:
  static constexpr int kDefaultHidden = 64;

  explicit ValueModel(int hidden = kDefaultHidden)
      : hidden_(hidden), params_(Eigen::VectorXd::Zero(parameter_count(hidden))) {}

  static Eigen::Index parameter_count(int hidden) {
    return Eigen::Index(hidden) * kFeatureCount + hidden + Eigen::Index(hidden) * hidden +
           hidden + 2 * (hidden + 1);
  }

  /// Glorot-uniform weights, zero biases.
  static ValueModel random(std::mt19937_64& rng, int hidden = kDefaultHidden) {
    ValueModel m(hidden);
    auto fill = [&](Eigen::Index off, Eigen::Index n, int fan_in, int fan_out) {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (Eigen::Index i = 0; i < n; ++i) m.params_[off + i] = a * (2.0 * uniform_real(rng) - 1.0);
    };
    fill(m.w1_offset(), Eigen::Index(hidden) * kFeatureCount, kFeatureCount, hidden);
    fill(m.w2_offset(), Eigen::Index(hidden) * hidden, hidden, hidden);
    fill(m.wv_offset(), hidden, hidden, 1);
    fill(m.wa_offset(), hidden, hidden, 1);
    return m;
  }

  int hidden() const { return hidden_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }

  using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;
  ConstMat w1() const { return {params_.data() + w1_offset(), hidden_, kFeatureCount}; }
  ConstVec b1() const { return {params_.data() + b1_offset(), hidden_}; }
  ConstMat w2() const { return {params_.data() + w2_offset(), hidden_, hidden_}; }
  ConstVec b2() const { return {params_.data() + b2_offset(), hidden_}; }
  ConstVec wv() const { return {params_.data() + wv_offset(), hidden_}; }
  double bv() const { return params_[wv_offset() + hidden_]; }
  ConstVec wa() const { return {params_.data() + wa_offset(), hidden_}; }
  double ba() const { return params_[wa_offset() + hidden_]; }

  Eigen::Index w1_offset() const { return 0; }
  Eigen::Index b1_offset() const { return Eigen::Index(hidden_) * kFeatureCount; }
  Eigen::Index w2_offset() const { return b1_offset() + hidden_; }
  Eigen::Index b2_offset() const { return w2_offset() + Eigen::Index(hidden_) * hidden_; }
  Eigen::Index wv_offset() const { return b2_offset() + hidden_; }
  Eigen::Index wa_offset() const { return wv_offset() + hidden_ + 1; }

  friend bool operator==(const ValueModel& a, const ValueModel& b) {
    return a.hidden_ == b.hidden_ && a.params_ == b.params_;
  }

 private:
  int hidden_;
  Eigen::VectorXd params_;
};

namespace detail {

/// Column range of one decision inside a stacked input: the V column first,
/// then one column per candidate.
struct Segment {
  Eigen::Index offset = 0;
  Eigen::Index candidates = 0;
};

inline Eigen::MatrixXd stack_inputs(const std::vector<const Decision*>& ds,
                                    std::vector<Segment>& segs) {
  Eigen::Index cols = 0;
  segs.clear();
  for (const Decision* d : ds) {
    segs.push_back({cols, Eigen::Index(d->size())});
    cols += 1 + Eigen::Index(d->size());
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(kFeatureCount, cols);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const Decision& d = *ds[k];
    const Eigen::Index off = segs[k].offset;
    for (Eigen::Index c = 0; c <= segs[k].candidates; ++c)
      for (int f = 0; f < kStateFeatures; ++f) x(f, off + c) = d.state[f];
    for (std::size_t i = 0; i < d.size(); ++i)
      for (int f = 0; f < kCandidateFeatures; ++f)
        x(kStateFeatures + f, off + 1 + Eigen::Index(i)) = d.candidate(i, f);
  }
  return x;
}

struct Forward {
  Eigen::MatrixXd x, h1, h2;
  Eigen::RowVectorXd v, a;  // head outputs for every column
};

inline Forward forward(const ValueModel& m, Eigen::MatrixXd x) {
  Forward f;
  f.x = std::move(x);
  f.h1 = ((m.w1() * f.x).colwise() + m.b1()).array().tanh().matrix();
  f.h2 = ((m.w2() * f.h1).colwise() + m.b2()).array().tanh().matrix();
  f.v = (m.wv().transpose() * f.h2).array() + m.bv();
  // The advantage bias shifts every A equally and cancels under centring;
  // leaving it out makes that cancellation exact in floating point.
  f.a = m.wa().transpose() * f.h2;
  return f;
}

/// Centred Q values of one segment; masked entries become -inf.
inline std::vector<double> segment_q(const Forward& f, const Segment& s,
                                     const std::vector<bool>* dummy) {
  double mean = 0.0;
  int valid = 0;
  for (Eigen::Index i = 0; i < s.candidates; ++i) {
    if (dummy && (*dummy)[i]) continue;
    mean += f.a(s.offset + 1 + i);
    ++valid;
  }
  if (valid == 0) throw std::invalid_argument("qvalues: every candidate is a dummy");
  mean /= valid;
  std::vector<double> q(static_cast<std::size_t>(s.candidates));
  const double v = f.v(s.offset);
  for (Eigen::Index i = 0; i < s.candidates; ++i) {
    q[i] = (dummy && (*dummy)[i]) ? -std::numeric_limits<double>::infinity()
                                  : v + f.a(s.offset + 1 + i) - mean;
  }
  return q;
}

}  // namespace detail

/// Q values of every candidate; `dummy[i]` marks padding that must never win.
inline std::vector<double> qvalues(const ValueModel& m, const Decision& d,
                                   const std::vector<bool>* dummy = nullptr) {
  if (d.size() == 0) throw std::invalid_argument("qvalues: no candidates");
  if (dummy && dummy->size() != d.size()) {
    throw std::invalid_argument("qvalues: mask size mismatch");
  }
  std::vector<detail::Segment> segs;
  const auto f = detail::forward(m, detail::stack_inputs({&d}, segs));
  return detail::segment_q(f, segs[0], dummy);
}

/// Lowest-index maximiser with probability 1 - epsilon, otherwise a uniform
/// finite entry. Always consumes one draw for the coin.
inline std::size_t select_action(const std::vector<double>& qs, double epsilon,
                                 std::mt19937_64& rng) {
  std::size_t best = qs.size();
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (!std::isfinite(qs[i])) continue;
    valid.push_back(i);
    if (best == qs.size() || qs[i] > qs[best]) best = i;
  }
  if (valid.empty()) throw std::invalid_argument("select_action: no finite Q value");
  if (uniform_real(rng) < epsilon) return valid[uniform_index(rng, valid.size())];
  return best;
}

// ---------------------------------------------------------------------------
// Replay and updates

struct Transition {
  std::shared_ptr<const Decision> state;
  int action = 0;
  double reward = 0.0;
  std::shared_ptr<const Decision> next;  // null when done
  bool done = false;
};

/// Bounded FIFO with uniform sampling; safe for concurrent use.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayMemory: zero capacity");
    buf_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (t.action < 0 || std::size_t(t.action) >= t.state->size()) {
      throw std::invalid_argument("ReplayMemory: action outside the candidate set");
    }
    std::lock_guard<std::mutex> lock(mu_);
    if (buf_.size() < capacity_) {
      buf_.push_back(std::move(t));
    } else {
      buf_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return buf_.size();
  }
  std::size_t capacity() const { return capacity_; }

  /// i-th oldest stored transition.
  Transition at(std::size_t i) const {
    std::lock_guard<std::mutex> lock(mu_);
    return buf_.at((head_ + i) % buf_.size());
  }

  /// Uniform draws with replacement.
  std::vector<Transition> sample(std::mt19937_64& rng, std::size_t n) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (buf_.empty()) throw std::logic_error("ReplayMemory: sample from empty memory");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(buf_[uniform_index(rng, buf_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> buf_;
  mutable std::mutex mu_;
};

/// Double-DQN regression targets: r, or r + gamma * Q_target(s', argmax Q_online(s')).
inline std::vector<double> td_targets(const ValueModel& online, const ValueModel& target,
                                      const std::vector<Transition>& batch, double gamma) {
  std::vector<double> y(batch.size());
  std::vector<const Decision*> next;
  std::vector<std::size_t> which;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    y[b] = batch[b].reward;
    if (!batch[b].done) {
      if (!batch[b].next || batch[b].next->size() == 0) {
        throw std::invalid_argument("td_targets: live transition without next candidates");
      }
      next.push_back(batch[b].next.get());
      which.push_back(b);
    }
  }
  if (next.empty() || gamma == 0.0) return y;
  std::vector<detail::Segment> segs;
  const Eigen::MatrixXd x = detail::stack_inputs(next, segs);
  const auto fo = detail::forward(online, x);
  const auto ft = detail::forward(target, x);
  for (std::size_t k = 0; k < next.size(); ++k) {
    const auto qo = detail::segment_q(fo, segs[k], nullptr);
    const auto qt = detail::segment_q(ft, segs[k], nullptr);
    const std::size_t a = static_cast<std::size_t>(
        std::max_element(qo.begin(), qo.end()) - qo.begin());
    y[which[k]] += gamma * qt[a];
  }
  return y;
}

/// Mean squared TD error at fixed targets and its gradient in parameter order.
inline double loss_and_gradient(const ValueModel& m, const std::vector<Transition>& batch,
                                 const std::vector<double>& y, Eigen::VectorXd* grad) {
  std::vector<const Decision*> states;
  for (const auto& t : batch) states.push_back(t.state.get());
  std::vector<detail::Segment> segs;
  const auto f = detail::forward(m, detail::stack_inputs(states, segs));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Eigen::RowVectorXd gv = Eigen::RowVectorXd::Zero(f.x.cols());
  Eigen::RowVectorXd ga = Eigen::RowVectorXd::Zero(f.x.cols());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = segs[b];
    const auto q = detail::segment_q(f, s, nullptr);
    const double err = q[batch[b].action] - y[b];
    loss += err * err * inv_b;
    const double g = 2.0 * err * inv_b;
    gv(s.offset) = g;
    const double share = g / static_cast<double>(s.candidates);
    for (Eigen::Index i = 0; i < s.candidates; ++i) ga(s.offset + 1 + i) = -share;
    ga(s.offset + 1 + batch[b].action) += g;
  }
  if (!grad) return loss;

  const int h = m.hidden();
  grad->setZero(m.params().size());
  Eigen::VectorXd& G = *grad;
  G.segment(m.wv_offset(), h) = f.h2 * gv.transpose();
  G[m.wv_offset() + h] = gv.sum();
  G.segment(m.wa_offset(), h) = f.h2 * ga.transpose();
  G[m.wa_offset() + h] = 0.0;
  const Eigen::MatrixXd dz2 =
      ((m.wv() * gv + m.wa() * ga).array() * (1.0 - f.h2.array().square())).matrix();
  Eigen::Map<Eigen::MatrixXd>(G.data() + m.w2_offset(), h, h) = dz2 * f.h1.transpose();
  G.segment(m.b2_offset(), h) = dz2.rowwise().sum();
  const Eigen::MatrixXd dz1 =
      ((m.w2().transpose() * dz2).array() * (1.0 - f.h1.array().square())).matrix();
  Eigen::Map<Eigen::MatrixXd>(G.data() + m.w1_offset(), h, kFeatureCount) =
      dz1 * f.x.transpose();
  G.segment(m.b1_offset(), h) = dz1.rowwise().sum();
  return loss;
}

class AdamOptimizer {
 public:
  explicit AdamOptimizer(Eigen::Index n = 0)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    if (m_.size() != params.size()) {
      m_.setZero(params.size());
      v_.setZero(params.size());
    }
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, double(t_));
    const double c2 = 1.0 - std::pow(kBeta2, double(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }
  long long steps() const { return t_; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  Eigen::VectorXd m_, v_;
  long long t_ = 0;
};

/// Online and target models with their optimizer state.
struct DqnLearner {
  ValueModel online;
  ValueModel target;
  AdamOptimizer adam;
  long long updates = 0;

  explicit DqnLearner(ValueModel init)
      : online(init), target(std::move(init)), adam(online.params().size()) {}

  /// One Adam step on the batch; returns the loss before the step.
  double td_update(const std::vector<Transition>& batch, double gamma, double lr) {
    if (batch.empty()) throw std::invalid_argument("td_update: empty batch");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("td_update: gamma");
    const auto y = td_targets(online, target, batch, gamma);
    Eigen::VectorXd grad;
    const double loss = loss_and_gradient(online, batch, y, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw std::runtime_error("td_update: non-finite loss after " +
                               std::to_string(updates) + " updates");
    }
    adam.step(online.params(), grad, lr);
    ++updates;
    return loss;
  }

  void sync_target() { target = online; }
};

// ---------------------------------------------------------------------------
// Snapshots and the learned policy

/// Latest published parameters; readers always get a complete copy.
class SnapshotBox {
 public:
  explicit SnapshotBox(const ValueModel& m)
      : current_(std::make_shared<const ValueModel>(m)) {}

  void publish(const ValueModel& m) {
    auto next = std::make_shared<const ValueModel>(m);
    std::lock_guard<std::mutex> lock(mu_);
    current_ = std::move(next);
    ++version_;
  }
  std::shared_ptr<const ValueModel> adopt() const {
    std::lock_guard<std::mutex> lock(mu_);
    return current_;
  }
  long long version() const {
    std::lock_guard<std::mutex> lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ValueModel> current_;
  long long version_ = 0;
};

class LearnedPolicy final : public PlacementPolicy {
 public:
  explicit LearnedPolicy(std::shared_ptr<const ValueModel> model, double epsilon = 0.0)
      : model_(std::move(model)), epsilon_(epsilon) {}

  std::string name() const override { return "learned"; }
  bool uses_candidates() const override { return true; }
  std::optional<PolicyDecision> decide(const DecisionContext& ctx) override {
    const CandidateSet& cs = *ctx.candidates;
    if (cs.empty()) return std::nullopt;
    const Decision d = decision_features(*ctx.state, *ctx.item, *ctx.spec, cs,
                                         ctx.remaining_items, ctx.total_items);
    const auto q = qvalues(*model_, d);
    const std::size_t i = select_action(q, epsilon_, *ctx.rng);
    return PolicyDecision{cs[i].action(), q[i], cs.size(), i};
  }

  const ValueModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ValueModel> model_;
  double epsilon_;
};

// ---------------------------------------------------------------------------
// Model file

inline nlohmann::json model_to_json(const ValueModel& m) {
  std::vector<double> p(m.params().data(), m.params().data() + m.params().size());
  return {{"format", "voxpack-dueling-q"},
          {"version", 1},
          {"feature_schema", kFeatureSchemaVersion},
          {"architecture",
           {{"state_features", kStateFeatures},
            {"candidate_features", kCandidateFeatures},
            {"hidden", m.hidden()},
            {"layers", 2},
            {"activation", "tanh"},
            {"advantage_centering", "mean"}}},
          {"params", std::move(p)}};
}

inline ValueModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "voxpack-dueling-q") {
    throw std::invalid_argument("model file: unknown format");
  }
  if (j.at("feature_schema").get<int>() != kFeatureSchemaVersion) {
    throw std::invalid_argument("model file: feature schema " +
                                std::to_string(j.at("feature_schema").get<int>()) +
                                " does not match this build (" +
                                std::to_string(kFeatureSchemaVersion) + ")");
  }
  const auto& a = j.at("architecture");
  if (a.at("state_features").get<int>() != kStateFeatures ||
      a.at("candidate_features").get<int>() != kCandidateFeatures ||
      a.at("activation").get<std::string>() != "tanh") {
    throw std::invalid_argument("model file: architecture mismatch");
  }
  ValueModel m(a.at("hidden").get<int>());
  const auto p = j.at("params").get<std::vector<double>>();
  if (Eigen::Index(p.size()) != m.params().size()) {
    throw std::invalid_argument("model file: wrong parameter count");
  }
  for (std::size_t i = 0; i < p.size(); ++i) m.params()[Eigen::Index(i)] = p[i];
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  long long frames = 200000;
  bool interleaved = true;
  int workers = 16;            // threaded mode only
  int steps_per_update = 4;    // environment steps per learner step
  int batch = 64;
  double lr = 1e-4;
  std::size_t replay_capacity = 100000;
  double gamma = 0.99;
  int target_sync = 1000;      // learner steps between target copies
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.2;   // of the frame budget
  int hidden = ValueModel::kDefaultHidden;
  std::uint64_t seed = 1;
  long long eval_every = 0;    // frames between checkpoints; 0 = only at the end
  int eval_episodes = 20;
  std::uint64_t eval_seed_base = 1000000;
  double detach_seconds = 0.0;  // threaded mode: drop episodes whose decision stalls
};

struct CurvePoint {
  long long frame = 0;
  double loss = 0.0;
  double eval_utility = 0.0;
};

struct TrainResult {
  ValueModel model;
  std::vector<CurvePoint> curve;
  long long frames = 0;
  long long updates = 0;
  long long episodes = 0;
  long long detached = 0;
};

inline double epsilon_at(const TrainConfig& c, long long frame) {
  const double horizon = c.eps_fraction * static_cast<double>(c.frames);
  if (horizon <= 0.0 || frame >= horizon) return c.eps_end;
  return c.eps_start + (c.eps_end - c.eps_start) * (static_cast<double>(frame) / horizon);
}

/// Training problems draw seeds with the top bit set, so they never collide
/// with the small integer seeds used for evaluation and benchmarks.
inline std::uint64_t training_problem_seed(std::uint64_t seed, std::uint64_t stream,
                                           std::uint64_t episode) {
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + (stream << 40) + episode;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return (z ^ (z >> 31)) | (1ULL << 63);
}

/// Mean greedy utility over seeds base, base + 1, ...
inline double evaluate_model(const ValueModel& m, const Dataset& ds, const ContainerSpec& spec,
                             std::uint64_t seed_base, int episodes) {
  if (episodes <= 0) return 0.0;
  LearnedPolicy pol(std::make_shared<const ValueModel>(m));
  double sum = 0.0;
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t s = seed_base + std::uint64_t(i);
    sum += run_episode(pol, ds, spec, emit_problem(ds, spec.dims(), s), s).utility;
  }
  return sum / episodes;
}

namespace detail {

/// Actor loop shared by both drivers: plays episodes, pushes transitions and
/// counts frames. `model()` supplies parameters before each decision;
/// `after_step()` runs after each frame and returns false to stop.
struct Actor {
  const Dataset* ds;
  const ContainerSpec* spec;
  const TrainConfig* cfg;
  ReplayMemory* replay;
  std::mt19937_64 rng;
  std::uint64_t stream = 0;
  long long episodes = 0;
  long long detached = 0;

  template <typename ModelFn, typename FrameFn, typename StepFn>
  bool play_episode(ModelFn model, FrameFn frame_counter, StepFn after_step) {
    Episode ep(*ds, *spec,
               emit_problem(*ds, spec->dims(),
                            training_problem_seed(cfg->seed, stream, std::uint64_t(episodes))));
    ++episodes;
    std::optional<Transition> pending;
    while (!ep.done()) {
      const auto t0 = std::chrono::steady_clock::now();
      const CandidateSet cs = generate_candidates(ep.state(), ep.current_item(), *spec);
      if (cs.empty()) {
        ep.terminate();
        break;
      }
      auto d = std::make_shared<const Decision>(
          decision_features(ep.state(), ep.current_item(), *spec, cs, ep.remaining_items(),
                            ep.total_items()));
      if (pending) {
        pending->next = d;
        replay->push(std::move(*pending));
        pending.reset();
      }
      const auto m = model();
      const std::size_t a = select_action(qvalues(*m, *d), epsilon_at(*cfg, frame_counter()), rng);
      if (cfg->detach_seconds > 0.0 &&
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >
              cfg->detach_seconds) {
        // A stalled decision: drop the rest of this episode.
        ++detached;
        return true;
      }
      const StepOutcome out = ep.step(cs[a].action());
      pending = Transition{d, int(a), out.reward, nullptr, out.done};
      if (out.done) {
        replay->push(std::move(*pending));
        pending.reset();
      }
      if (!after_step()) return false;
    }
    if (pending) {
      pending->done = true;
      replay->push(std::move(*pending));
    }
    return true;
  }
};

inline void write_double(std::ostream& os, double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  os << s.str();
}

}  // namespace detail

/// Trains the ranker. Interleaved mode is single-threaded and bit-for-bit
/// reproducible; threaded mode runs cfg.workers actors and one learner.
inline TrainResult train(const Dataset& ds, const ContainerSpec& spec, const TrainConfig& cfg,
                         const std::function<void(const CurvePoint&)>& on_checkpoint = {}) {
  if (cfg.frames < 0 || cfg.batch < 1 || cfg.steps_per_update < 1 || cfg.target_sync < 1) {
    throw std::invalid_argument("train: invalid configuration");
  }
  std::mt19937_64 init_rng(cfg.seed);
  DqnLearner learner(ValueModel::random(init_rng, cfg.hidden));
  ReplayMemory replay(cfg.replay_capacity);
  std::mt19937_64 sample_rng(cfg.seed ^ 0x5bd1e995ULL);
  TrainResult res{learner.online, {}, 0, 0, 0, 0};
  if (cfg.frames == 0) return res;

  const long long eval_every = cfg.eval_every > 0 ? cfg.eval_every : cfg.frames;
  double loss_sum = 0.0;
  long long loss_n = 0;
  auto checkpoint = [&](long long frame) {
    CurvePoint p{frame, loss_n ? loss_sum / double(loss_n) : 0.0,
                 evaluate_model(learner.online, ds, spec, cfg.eval_seed_base,
                                cfg.eval_episodes)};
    loss_sum = 0.0;
    loss_n = 0;
    res.curve.push_back(p);
    if (on_checkpoint) on_checkpoint(p);
  };
  auto learn_once = [&] {
    const auto batch = replay.sample(sample_rng, std::size_t(cfg.batch));
    loss_sum += learner.td_update(batch, cfg.gamma, cfg.lr);
    ++loss_n;
    if (learner.updates % cfg.target_sync == 0) learner.sync_target();
  };

  if (cfg.interleaved) {
    detail::Actor actor{&ds, &spec, &cfg, &replay, std::mt19937_64(cfg.seed ^ 0xa5a5a5a5ULL)};
    long long frames = 0;
    while (frames < cfg.frames) {
      actor.play_episode(
          [&] { return &learner.online; }, [&] { return frames; },
          [&] {
            ++frames;
            if (frames % cfg.steps_per_update == 0 && replay.size() >= std::size_t(cfg.batch)) {
              learn_once();
            }
            if (frames % eval_every == 0 || frames == cfg.frames) checkpoint(frames);
            return frames < cfg.frames;
          });
    }
    res.frames = frames;
    res.episodes = actor.episodes;
  } else {
    SnapshotBox box(learner.online);
    std::atomic<long long> frames{0};
    std::atomic<bool> stop{false};
    std::vector<detail::Actor> actors;
    for (int w = 0; w < std::max(1, cfg.workers); ++w) {
      actors.push_back({&ds, &spec, &cfg, &replay,
                        std::mt19937_64(cfg.seed ^ (0xa5a5a5a5ULL + std::uint64_t(w))),
                        std::uint64_t(w)});
    }
    std::vector<std::thread> threads;
    for (auto& actor : actors) {
      threads.emplace_back([&, a = &actor] {
        while (!stop.load()) {
          if (!a->play_episode([&] { return box.adopt(); }, [&] { return frames.load(); },
                              [&] { return ++frames < cfg.frames && !stop.load(); })) {
            break;
          }
          if (frames.load() >= cfg.frames) break;
        }
      });
    }
    long long next_eval = eval_every;
    try {
      for (;;) {
        const long long f = std::min(frames.load(), cfg.frames);
        const bool finished = f >= cfg.frames;
        // Keep roughly one learner step per steps_per_update frames.
        if (replay.size() >= std::size_t(cfg.batch) &&
            learner.updates < f / cfg.steps_per_update) {
          learn_once();
          box.publish(learner.online);
        } else if (!finished) {
          std::this_thread::yield();
        }
        if (f >= next_eval) {
          checkpoint(f);
          next_eval += eval_every;
        }
        if (finished && learner.updates >= f / cfg.steps_per_update) break;
        if (finished && replay.size() < std::size_t(cfg.batch)) break;
      }
    } catch (...) {
      stop = true;
      for (auto& t : threads) t.join();
      throw;
    }
    stop = true;
    for (auto& t : threads) t.join();
    if (res.curve.empty() || res.curve.back().frame != cfg.frames) checkpoint(cfg.frames);
    res.frames = std::min(frames.load(), cfg.frames);
    for (const auto& a : actors) {
      res.episodes += a.episodes;
      res.detached += a.detached;
    }
  }
  res.model = learner.online;
  res.updates = learner.updates;
  return res;
}

/// frame,loss,eval_utility with fixed precision.
inline void write_learning_curve(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "frame,loss,eval_utility\n";
  for (const auto& p : curve) {
    os << p.frame << ',';
    detail::write_double(os, p.loss);
    os << ',';
    detail::write_double(os, p.eval_utility);
    os << '\n';
  }
}

}  // namespace voxpack
