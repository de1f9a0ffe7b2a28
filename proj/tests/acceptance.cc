// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "episode_support.hpp"
#include "test_support.hpp"
#include "voxpack/bench.hpp"
#include "voxpack/buffered.hpp"
#include "voxpack/candgen.hpp"
#include "voxpack/gridgeom.hpp"
#include "voxpack/learner.hpp"
#include "voxpack/packenv.hpp"
#include "voxpack/policies.hpp"
#include "voxpack/shapelib.hpp"

namespace {

using namespace voxpack;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Erosion equals the exhaustive subset test.
Outcome erosion_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> mask_dim(1, 24), fp_dim(1, 5);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const BinaryGrid mask = testing::random_grid(rng, mask_dim(rng), mask_dim(rng), 0.85);
    BinaryGrid fp = testing::random_grid(rng, fp_dim(rng), fp_dim(rng), 0.6);
    fp.set(0, 0, true);
    if (!(erode_feasible(mask, fp) == testing::brute_force_erosion(mask, fp))) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 5.0,
          fmt("200 instances, %d mismatches, %.2f s (limit 5 s)", mismatches, s)};
}

// 2. Convex vertices maximise the empirical normal cone.
Outcome convex_vertex_tightness() {
  const auto t0 = Clock::now();
  const double tol = testing::deg(6);
  std::mt19937_64 rng(1002);
  double worst_vertex = 0.0, worst_other = 0.0;
  int vertices = 0, others = 0;
  for (int t = 0; t < 50; ++t) {
    const auto lp = testing::random_lattice_polygon(rng);
    const Cell ext = testing::extent(lp);
    const BinaryGrid g = testing::rasterize(lp, ext.x + 3, ext.y + 3);
    for (const auto& v : analyze_vertices(testing::to_polygon(lp))) {
      const double tau = tightness_oracle(g, lp.vertices[v.index], 5.0, 360);
      if (v.is_convex) {
        worst_vertex = std::max(worst_vertex, std::abs(tau - (std::numbers::pi - v.interior_angle)));
        ++vertices;
      } else {
        worst_other = std::max(worst_other, tau);
        ++others;
      }
    }
    for (const Cell& p : testing::edge_interior_points(lp, 5.0)) {
      worst_other = std::max(worst_other, tightness_oracle(g, p, 5.0, 360));
      ++others;
    }
  }
  const double s = seconds_since(t0);
  return {worst_vertex <= tol && worst_other <= tol && s < 30.0,
          fmt("50 polygons, %d convex vertices worst |tau - (pi - theta)| %.2f deg, %d other "
              "points worst tau %.2f deg (limit 6 deg), %.1f s (limit 30 s)",
              vertices, worst_vertex * 180 / std::numbers::pi, others,
              worst_other * 180 / std::numbers::pi, s)};
}

/// Rechecks a placement against the raw voxels: inside the container, above
/// every column it covers, and resting on the floor or on a column top.
bool placement_is_valid(const PackingState& s, const VoxelShape& shape, const ContainerSpec& spec,
                        int lx, int ly, int lz) {
  bool rests = lz == 0;
  for (const Voxel& v : shape.voxels()) {
    const int x = lx + v.x, y = ly + v.y, z = lz + v.z;
    if (x < 0 || y < 0 || x >= spec.sx || y >= spec.sy || z < 0 || z >= spec.sz) return false;
    const int h = s.heightmap.at(x, y);
    if (z < h) return false;
    rests = rests || z == h;
  }
  return rests;
}

// 3. Candidates are feasible, at their landing altitude, on their region's
// contour, and reproducible.
Outcome candidate_soundness(const Dataset& ds, const ContainerSpec& spec) {
  const auto t0 = Clock::now();
  long long total = 0, unsound = 0, off_contour = 0;
  int nondeterministic = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto mg = testing::random_midgame(ds, spec, 5000 + seed);
    CandidateDebug dbg;
    const CandidateSet cs = generate_candidates(mg.state, mg.item, spec, &dbg);
    if (!(generate_candidates(mg.state, mg.item, spec) == cs)) ++nondeterministic;
    const VoxelShape& base = ds[std::size_t(mg.item.shape)].shape;
    for (const auto& c : cs.candidates) {
      ++total;
      const VoxelShape oriented = rotate24(base, mg.item.oriented(c.spin));
      const int lz_ref = landing_altitude(mg.state.heightmap, mg.item.footprints[c.spin], c.lx,
                                          c.ly, spec.sz);
      if (lz_ref != c.lz || !placement_is_valid(mg.state, oriented, spec, c.lx, c.ly, c.lz)) {
        ++unsound;
      }
      const SpinAnalysis* sa = nullptr;
      for (const auto& a : dbg.spins)
        if (a.spin == c.spin) sa = &a;
      const Cell cell{c.lx / spec.grid_stride, c.ly / spec.grid_stride};
      if (!sa || c.region < 1 || std::size_t(c.region) > sa->contours.size() ||
          std::find(sa->contours[c.region - 1].begin(), sa->contours[c.region - 1].end(), cell) ==
              sa->contours[c.region - 1].end()) {
        ++off_contour;
      }
    }
  }
  const double s = seconds_since(t0);
  return {total > 0 && unsound == 0 && off_contour == 0 && nondeterministic == 0 && s < 60.0,
          fmt("100 states, %lld candidates, %lld unsound, %lld off contour, %d "
              "nondeterministic, %.1f s (limit 60 s)",
              total, unsound, off_contour, nondeterministic, s)};
}

// 4. Cube packing bound in the full-size container.
Outcome blockout_bound() {
  const auto t0 = Clock::now();
  const ContainerSpec spec = blockout_spec();
  const Dataset ds = at_resolution(polycube_dataset(), spec.grid_cm);
  const double bound = 27000.0 / 30720.0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    RandomGridPolicy random;
    const auto r = run_episode(random, ds, spec, emit_problem(ds, spec.dims(), seed), seed);
    worst = std::max(worst, r.utility);
  }
  const Dataset cubes = at_resolution({prepare_entry(gen_polycubes()[0])}, spec.grid_cm);
  ProblemSequence p{spec.dims(), 0, std::vector<ProblemItem>(125, {0, 0, 0})};
  FirstFitPolicy ff;
  const auto scripted = run_episode(ff, cubes, spec, p, 0);
  const double s = seconds_since(t0);
  const bool exact = scripted.utility == bound && scripted.placed == 125;
  return {worst <= 0.8790 + 1e-9 && exact && s < 300.0,
          fmt("500 random episodes max utility %.4f (limit 0.8790), scripted first fit %d cubes "
              "utility %.6f (expected %.6f), %.1f s (limit 300 s)",
              worst, scripted.placed, scripted.utility, bound, s)};
}

RunReport baseline_report(const std::string& name, const Dataset& ds, const ContainerSpec& spec,
                          std::uint64_t n, int threads = 1) {
  ExperimentConfig cfg;
  cfg.method = name;
  cfg.seeds = seed_range(0, n);
  cfg.threads = threads;
  return run_experiment([&] { return make_baseline_policy(name); }, ds, spec, cfg);
}

// 5. BLBF clearly beats grid-random on polycubes.
Outcome heuristic_separation(const Dataset& ds, const ContainerSpec& spec) {
  const auto t0 = Clock::now();
  const double random = baseline_report("random", ds, spec, 200).mean_utility();
  const double blbf = baseline_report("blbf", ds, spec, 200).mean_utility();
  const double s = seconds_since(t0);
  return {blbf >= random + 0.10 && s < 300.0,
          fmt("200 seeds, BLBF %.4f vs random %.4f (required margin 0.10, got %.4f), %.1f s "
              "(limit 300 s)",
              blbf, random, blbf - random, s)};
}

// 6. Gap values and the population variance.
Outcome metric_fidelity(const Dataset& ds, const ContainerSpec& spec) {
  const double g1 = gap(0.710, 0.619);
  const double g2 = gap(0.445, 0.358);
  const RunReport rep = baseline_report("random-pi", ds, spec, 50);
  const auto u = rep.utilities();
  long double m = 0;
  for (double x : u) m += x;
  m /= u.size();
  long double v = 0;
  for (double x : u) v += (x - m) * (x - m);
  v /= u.size();
  const double err = std::abs(rep.variance() - static_cast<double>(v));
  return {std::abs(g1 - 0.128) <= 5e-4 && std::abs(g2 - 0.196) <= 5e-4 && err <= 1e-12,
          fmt("gap(0.710, 0.619) = %.5f, gap(0.445, 0.358) = %.5f (tolerance 0.0005), variance "
              "error %.2e over 50 episodes (limit 1e-12)",
              g1, g2, err)};
}

// 7. The trained ranker beats random candidate selection on held-out seeds.
Outcome learning_lift(const Dataset& ds, const ContainerSpec& spec) {
  const auto t0 = Clock::now();
  TrainConfig cfg;
  cfg.frames = 40000;
  const TrainResult res = train(ds, spec, cfg);
  const double train_s = seconds_since(t0);
  auto model = std::make_shared<const ValueModel>(res.model);
  ExperimentConfig ec;
  ec.method = "learned";
  ec.seeds = seed_range(0, 100);
  const double learned =
      run_experiment([&] { return std::make_unique<LearnedPolicy>(model); }, ds, spec, ec)
          .mean_utility();
  const double random_pi = baseline_report("random-pi", ds, spec, 100).mean_utility();
  return {learned >= random_pi + 0.05,
          fmt("%lld frames in %.0f s, 100 held-out seeds: learned %.4f vs random-pi %.4f "
              "(required margin 0.05, got %.4f)",
              res.frames, train_s, learned, random_pi, learned - random_pi)};
}

Decision random_decision(std::mt19937_64& rng, std::size_t n) {
  Decision d;
  for (auto& v : d.state) v = float(uniform_real(rng));
  for (std::size_t i = 0; i < n * kCandidateFeatures; ++i)
    d.candidates.push_back(float(2.0 * uniform_real(rng) - 1.0));
  return d;
}

std::vector<Transition> random_batch(std::mt19937_64& rng, int size) {
  std::vector<Transition> batch;
  for (int b = 0; b < size; ++b) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    Transition t;
    t.state = std::make_shared<Decision>(random_decision(rng, n));
    t.action = int(uniform_index(rng, n));
    t.reward = uniform_real(rng);
    t.done = uniform_real(rng) < 0.3;
    if (!t.done) t.next = std::make_shared<Decision>(random_decision(rng, 1 + uniform_index(rng, 6)));
    batch.push_back(t);
  }
  return batch;
}

// 8. Dueling head invariants, masking and the hand-written gradient.
Outcome dueling_invariants() {
  std::mt19937_64 rng(1008);
  int shift_failures = 0;
  for (int t = 0; t < 1000; ++t) {
    ValueModel m = ValueModel::random(rng, 16);
    const Decision d = random_decision(rng, 1 + uniform_index(rng, 20));
    const auto q = qvalues(m, d);
    m.params()[m.wa_offset() + m.hidden()] += 1e3 * (uniform_real(rng) - 0.5);
    const auto shifted = qvalues(m, d);
    if (q != shifted || select_action(q, 0.0, rng) != select_action(shifted, 0.0, rng))
      ++shift_failures;
  }

  int dummy_picks = 0;
  ValueModel m;
  for (int t = 0; t < 100000; ++t) {
    if (t % 100 == 0) m = ValueModel::random(rng, 8);
    const std::size_t n = 1 + uniform_index(rng, 6);
    const Decision d = random_decision(rng, n);
    std::vector<bool> dummy(n);
    bool any_real = false;
    for (std::size_t i = 0; i < n; ++i) {
      dummy[i] = uniform_real(rng) < 0.5;
      any_real = any_real || !dummy[i];
    }
    if (!any_real) dummy[uniform_index(rng, n)] = false;
    const auto q = qvalues(m, d, &dummy);
    if (dummy[select_action(q, uniform_real(rng), rng)]) ++dummy_picks;
  }

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const ValueModel mm = ValueModel::random(rng);
    const auto batch = random_batch(rng, 8);
    const auto y = td_targets(mm, ValueModel::random(rng), batch, 0.9);
    Eigen::VectorXd grad;
    loss_and_gradient(mm, batch, y, &grad);
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index i = Eigen::Index(uniform_index(rng, std::size_t(mm.params().size())));
      if (i == mm.wa_offset() + mm.hidden()) continue;  // advantage bias: no effect on Q
      ValueModel p = mm, q = mm;
      const double h = 1e-5;
      p.params()[i] += h;
      q.params()[i] -= h;
      const double fd =
          (loss_and_gradient(p, batch, y, nullptr) - loss_and_gradient(q, batch, y, nullptr)) /
          (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
  }
  return {shift_failures == 0 && dummy_picks == 0 && worst <= 1e-4,
          fmt("advantage shift changed Q in %d/1000 models, dummy selected %d/100000 times, "
              "gradient worst relative error %.2e (limit 1e-4)",
              shift_failures, dummy_picks, worst)};
}

// 9. A one-slot buffer is the online pipeline; ten LFSS slots reorder
// without losing items.
Outcome buffered_equivalence(const Dataset& ds, const ContainerSpec& spec) {
  int k1_mismatch = 0;
  LfssOrdering lfss;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = emit_problem(ds, spec.dims(), seed);
    for (const char* name : {"blbf", "random-pi", "hm"}) {
      auto a = make_baseline_policy(name);
      auto b = make_baseline_policy(name);
      const auto online = run_episode(*a, ds, spec, p, seed);
      const auto buffered = run_buffered_episode(lfss, *b, ds, spec, p, seed, 1);
      if (!(online.trace == buffered.trace) || online.utility != buffered.utility) ++k1_mismatch;
    }
  }
  int reordered = 0, drops = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    BufferedEpisode ep(ds, spec, emit_problem(ds, spec.dims(), seed), 10);
    BlbfPolicy blbf;
    std::mt19937_64 rng(seed);
    // An item may leave the buffer unplaced only as the failed final step.
    std::size_t consumed_by_failure = 0;
    while (!ep.done()) {
      const std::size_t before = ep.state().placements.size();
      const std::size_t streamed = ep.buffer().cursor, waiting = ep.buffer().slots.size();
      ep.step(lfss, blbf, rng);
      const std::size_t refilled = ep.buffer().cursor - streamed;
      const bool placed_one = ep.state().placements.size() == before + 1;
      if (!placed_one && waiting + refilled == ep.buffer().slots.size() + 1) consumed_by_failure = 1;
      if (!placed_one && !ep.done()) ++drops;
    }
    const auto& order = ep.order();
    if (!std::is_sorted(order.begin(), order.end())) ++reordered;
    const std::size_t placed = ep.state().placements.size();
    const std::size_t waiting = ep.buffer().slots.size();
    const std::size_t unstreamed = std::size_t(ep.total_items()) - ep.buffer().cursor;
    if (placed + waiting + unstreamed + consumed_by_failure != std::size_t(ep.total_items()))
      ++drops;
  }
  return {k1_mismatch == 0 && reordered > 0 && drops == 0,
          fmt("K = 1: %d/150 trajectories differ; K = 10 LFSS: %d/50 episodes reordered, %d "
              "with unaccounted items",
              k1_mismatch, reordered, drops)};
}

// 10. Reports and the interleaved learning curve are byte-stable.
Outcome determinism(const Dataset& ds, const ContainerSpec& spec) {
  auto csv_of = [&](const std::string& name, int threads) {
    std::ostringstream os;
    write_csv(os, baseline_report(name, ds, spec, 30, threads));
    return os.str();
  };
  int differing = 0;
  for (const char* name : {"random", "random-pi", "blbf", "hm", "ff"}) {
    const std::string a = csv_of(name, 1);
    if (a != csv_of(name, 1) || a != csv_of(name, 4)) ++differing;
  }
  auto buffered_csv = [&] {
    ExperimentConfig cfg;
    cfg.method = "blbf";
    cfg.seeds = seed_range(0, 20);
    cfg.buffer = 5;
    std::ostringstream os;
    write_csv(os, run_experiment([] { return make_baseline_policy("blbf"); }, ds, spec, cfg));
    return os.str();
  };
  if (buffered_csv() != buffered_csv()) ++differing;

  auto curve_of = [&] {
    TrainConfig cfg;
    cfg.frames = 3000;
    cfg.eval_every = 1000;
    cfg.eval_episodes = 5;
    cfg.seed = 77;
    std::ostringstream os;
    write_learning_curve(os, train(ds, spec, cfg).curve);
    return os.str();
  };
  const std::string c1 = curve_of();
  const bool curve_same = c1 == curve_of();
  return {differing == 0 && curve_same,
          fmt("%d/6 report CSVs differ across runs or thread counts; learning curve %s",
              differing, curve_same ? "identical" : "differs")};
}

}  // namespace

int main() {
  const ContainerSpec desk = desk_spec();
  const Dataset ds = at_resolution(polycube_dataset(), desk.grid_cm);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"erosion oracle", erosion_oracle},
      {"convex vertex tightness", convex_vertex_tightness},
      {"candidate soundness", [&] { return candidate_soundness(ds, desk); }},
      {"cube packing bound", blockout_bound},
      {"heuristic separation", [&] { return heuristic_separation(ds, desk); }},
      {"metric fidelity", [&] { return metric_fidelity(ds, desk); }},
      {"learning lift", [&] { return learning_lift(ds, desk); }},
      {"dueling invariants", dueling_invariants},
      {"buffered equivalence", [&] { return buffered_equivalence(ds, desk); }},
      {"determinism", [&] { return determinism(ds, desk); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
