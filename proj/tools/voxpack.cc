// voxpack command-line driver: shape and problem generation, policy rollouts,
// training, evaluation and report merging.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxpack/bench.hpp"
#include "voxpack/buffered.hpp"
#include "voxpack/candgen.hpp"
#include "voxpack/learner.hpp"
#include "voxpack/packenv.hpp"
#include "voxpack/policies.hpp"
#include "voxpack/shapelib.hpp"

namespace {

using namespace voxpack;

/// Container and candidate flags shared by every rollout command.
struct SetupOptions {
  std::vector<double> container_cm{32.0, 32.0, 30.0};
  double dh = 1.0;  // heightmap cell, cm
  double dg = 2.0;  // candidate grid spacing, cm
  int dz = 1;       // region altitude tolerance, heightmap cells
  int n = 500;      // candidate cap
  std::string shapes;  // optional shape file; built-in polycubes otherwise
  double dedup = kDefaultDedupTolerance;

  void add_to(CLI::App* app) {
    app->add_option("--container", container_cm, "Container size X,Y,Z in cm")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    app->add_option("--dh", dh, "Heightmap resolution in cm")->capture_default_str();
    app->add_option("--dg", dg, "Candidate grid spacing in cm")->capture_default_str();
    app->add_option("--dz", dz, "Region altitude tolerance in heightmap cells")
        ->capture_default_str();
    app->add_option("--N", n, "Maximum candidates per decision")->capture_default_str();
    app->add_option("--shapes", shapes, "Shape file from gen-shapes (default: built-in polycubes)");
    app->add_option("--dedup", dedup, "Pose dedup tolerance")->capture_default_str();
  }

  static int cells(double cm, double unit, const char* what) {
    const double f = cm / unit;
    const long r = std::lround(f);
    if (r < 1 || std::abs(f - double(r)) > 1e-6) {
      throw std::invalid_argument(std::string(what) + " must be a positive multiple of --dh");
    }
    return static_cast<int>(r);
  }

  ContainerSpec spec() const {
    if (container_cm.size() != 3) throw std::invalid_argument("--container needs X,Y,Z");
    ContainerSpec s;
    s.sx = cells(container_cm[0], dh, "--container");
    s.sy = cells(container_cm[1], dh, "--container");
    s.sz = cells(container_cm[2], dh, "--container");
    s.grid_cm = dh;
    s.grid_stride = cells(dg, dh, "--dg");
    s.delta_z = dz;
    s.max_candidates = n;
    s.validate();
    return s;
  }

  Dataset dataset() const {
    Dataset base;
    if (shapes.empty()) {
      base = polycube_dataset(dedup);
    } else {
      const nlohmann::json j = read_json_file(shapes);
      const nlohmann::json& arr = j.is_array() ? j : j.at("shapes");
      for (const auto& s : arr) base.push_back(prepare_entry(shape_from_json(s), dedup));
    }
    return at_resolution(base, dh);
  }

  std::string dataset_name() const {
    return shapes.empty() ? "polycubes" : std::filesystem::path(shapes).stem().string();
  }
};

std::shared_ptr<const ValueModel> load_model(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("--model is required for learned policies");
  return std::make_shared<const ValueModel>(model_from_json(read_json_file(path)));
}

PolicyFactory policy_factory(const std::string& name, const std::string& model_path) {
  if (name == "learned") {
    auto model = load_model(model_path);
    return [model] { return std::make_unique<LearnedPolicy>(model); };
  }
  make_baseline_policy(name);  // reject unknown names before any episode runs
  return [name] { return make_baseline_policy(name); };
}

void write_report_files(const RunReport& rep, const std::string& prefix, bool timing) {
  std::ostringstream csv;
  write_csv(csv, rep, timing);
  write_text_file(prefix + ".csv", csv.str());
  write_text_file(prefix + ".json", report_to_json(rep).dump(2) + "\n");
}

void print_summary(const RunReport& rep) {
  std::printf("%s: utility %.4f  variance %.5f  count %.2f  product %.4f  %.3f ms/decision  (%zu episodes)\n",
              rep.method.c_str(), rep.mean_utility(), rep.variance(), rep.mean_count(),
              rep.mean_product_utility(), 1000.0 * rep.mean_decision_seconds(), rep.rows.size());
}

/// Replays the first seed once more to dump its trace and candidate debug data.
void dump_episode(PlacementPolicy& policy, const Dataset& ds, const ContainerSpec& spec,
                  std::uint64_t seed, const std::string& trace_path,
                  const std::string& debug_path) {
  Episode ep(ds, spec, emit_problem(ds, spec.dims(), seed));
  std::mt19937_64 rng(seed);
  nlohmann::json debug = nlohmann::json::array();
  while (!ep.done()) {
    if (!debug_path.empty()) {
      CandidateDebug dbg;
      const CandidateSet cs = generate_candidates(ep.state(), ep.current_item(), spec, &dbg);
      nlohmann::json d = debug_to_json(dbg, cs);
      d["step"] = ep.state().step;
      debug.push_back(std::move(d));
    }
    const auto d = decide_step(policy, ep, rng);
    if (!d) {
      ep.terminate();
      break;
    }
    ep.step(d->action);
  }
  if (!trace_path.empty()) {
    std::ostringstream os;
    write_trace(os, ep.trace());
    write_text_file(trace_path, os.str());
  }
  if (!debug_path.empty()) write_text_file(debug_path, debug.dump() + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online packing of voxelized shapes"};
  app.require_subcommand(1);
  // Values for a subcommand live in its [section]; flags given on the
  // command line take precedence. Accepted before or after the subcommand.
  app.set_config("--config", "", "TOML file with one [subcommand] section per command");
  app.fallthrough();

  // gen-shapes
  std::string out_path;
  auto* gen = app.add_subcommand("gen-shapes", "Write the built-in polycube set to a shape file");
  gen->add_option("--out", out_path, "Output JSON file")->required();

  // poses
  std::string shape_path;
  double pose_dedup = kDefaultDedupTolerance;
  auto* poses = app.add_subcommand("poses", "Stable poses and deduplicated poses of shapes");
  poses->add_option("--shapes", shape_path, "Shape file")->required();
  poses->add_option("--dedup", pose_dedup, "Dedup tolerance")->capture_default_str();
  poses->add_option("--out", out_path, "Output JSON file (default: stdout)");

  // emit
  SetupOptions emit_setup;
  std::uint64_t n_seeds = 200, seed_base = 0;
  auto* emit = app.add_subcommand("emit", "Emit problem sequences");
  emit_setup.add_to(emit);
  emit->add_option("--seeds", n_seeds, "Number of sequences")->capture_default_str();
  emit->add_option("--seed-base", seed_base, "First seed")->capture_default_str();
  emit->add_option("--out", out_path, "Output JSON file")->required();

  // run
  SetupOptions run_setup;
  std::string policy = "blbf", ordering = "lfss", model_path, trace_path, debug_path;
  int buffer = 1, threads = 1;
  bool timing = false;
  auto* run = app.add_subcommand("run", "Roll out a policy over seeded sequences and report");
  run_setup.add_to(run);
  run->add_option("--policy", policy, "ff, random, random-pi, blbf, mtpe, hm or learned")
      ->capture_default_str();
  run->add_option("--model", model_path, "Model file for the learned policy");
  run->add_option("--buffer", buffer, "Buffer slots K")->capture_default_str();
  run->add_option("--ordering", ordering, "Buffer ordering: fifo, lfss or learned")
      ->capture_default_str();
  run->add_option("--seeds", n_seeds, "Episodes over seeds base..base+n-1")->capture_default_str();
  run->add_option("--seed-base", seed_base, "First seed")->capture_default_str();
  run->add_option("--threads", threads, "Concurrent episodes")->capture_default_str();
  run->add_option("--out", out_path, "Report prefix: writes PREFIX.csv and PREFIX.json");
  run->add_flag("--timing", timing, "Add decision timing columns to the CSV");
  run->add_option("--trace", trace_path, "Write the first seed's placement trace (JSON lines)");
  run->add_option("--debug-candidates", debug_path,
                  "Write the first seed's per-decision candidate debug JSON");

  // train
  SetupOptions train_setup;
  train_setup.dh = 2.0;
  train_setup.dg = 2.0;
  TrainConfig tc;
  std::string curve_path;
  bool threaded = false;
  auto* trn = app.add_subcommand("train", "Train the candidate ranker");
  train_setup.add_to(trn);
  trn->add_option("--frames", tc.frames, "Frame budget")->capture_default_str();
  trn->add_flag("--threaded", threaded, "Concurrent actors and learner (not reproducible)");
  trn->add_option("--workers", tc.workers, "Actor threads in threaded mode")->capture_default_str();
  trn->add_option("--steps-per-update", tc.steps_per_update, "Frames per learner step")
      ->capture_default_str();
  trn->add_option("--batch", tc.batch, "Minibatch size")->capture_default_str();
  trn->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
  trn->add_option("--replay", tc.replay_capacity, "Replay capacity")->capture_default_str();
  trn->add_option("--gamma", tc.gamma, "Discount")->capture_default_str();
  trn->add_option("--target-sync", tc.target_sync, "Learner steps between target copies")
      ->capture_default_str();
  trn->add_option("--hidden", tc.hidden, "Hidden width")->capture_default_str();
  trn->add_option("--seed", tc.seed, "Training seed")->capture_default_str();
  trn->add_option("--eval-every", tc.eval_every, "Frames between checkpoints (0 = end only)")
      ->capture_default_str();
  trn->add_option("--episodes", tc.eval_episodes, "Evaluation episodes per checkpoint")
      ->capture_default_str();
  trn->add_option("--detach-seconds", tc.detach_seconds,
                  "Threaded mode: drop episodes whose decision stalls longer")
      ->capture_default_str();
  trn->add_option("--out", out_path, "Model file")->required();
  trn->add_option("--curve", curve_path, "Learning curve CSV");

  // eval
  SetupOptions eval_setup;
  eval_setup.dh = 2.0;
  eval_setup.dg = 2.0;
  std::vector<std::string> baselines{"random", "random-pi", "ff", "blbf", "mtpe", "hm"};
  auto* ev = app.add_subcommand("eval", "Evaluate a model against the baselines");
  eval_setup.add_to(ev);
  ev->add_option("--model", model_path, "Model file")->required();
  ev->add_option("--baselines", baselines, "Baseline policies")->delimiter(',');
  ev->add_option("--seeds", n_seeds, "Episodes over seeds base..base+n-1")->capture_default_str();
  ev->add_option("--seed-base", seed_base, "First seed")->capture_default_str();
  ev->add_option("--buffer", buffer, "Buffer slots K")->capture_default_str();
  ev->add_option("--ordering", ordering, "Buffer ordering")->capture_default_str();
  ev->add_option("--threads", threads, "Concurrent episodes")->capture_default_str();
  ev->add_option("--out", out_path, "Directory for per-method reports");

  // report
  std::vector<std::string> inputs;
  auto* rpt = app.add_subcommand("report", "Merge JSON reports into a comparison table");
  rpt->add_option("reports", inputs, "Report JSON files")->required();
  rpt->add_option("--out", out_path, "Markdown output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : gen_polycubes()) arr.push_back(shape_to_json(s));
      write_json_file(out_path, arr);
      std::printf("wrote %zu shapes to %s\n", arr.size(), out_path.c_str());
    } else if (*poses) {
      const nlohmann::json j = read_json_file(shape_path);
      const nlohmann::json& arr = j.is_array() ? j : nlohmann::json::array({j});
      nlohmann::json out = nlohmann::json::array();
      for (const auto& sj : arr) {
        const VoxelShape s = shape_from_json(sj);
        nlohmann::json stable = nlohmann::json::array(), kept = nlohmann::json::array();
        const auto all = stable_poses(s);
        for (const auto& p : all) stable.push_back(p.orientation);
        for (const auto& p : dedup_poses(all, s, pose_dedup)) kept.push_back(p.orientation);
        out.push_back({{"name", s.name()}, {"stable", stable}, {"poses", kept}});
      }
      if (out_path.empty()) {
        std::cout << out.dump(2) << '\n';
      } else {
        write_json_file(out_path, out);
      }
    } else if (*emit) {
      const ContainerSpec spec = emit_setup.spec();
      const Dataset ds = emit_setup.dataset();
      nlohmann::json arr = nlohmann::json::array();
      for (std::uint64_t i = 0; i < n_seeds; ++i)
        arr.push_back(problem_to_json(emit_problem(ds, spec.dims(), seed_base + i)));
      write_json_file(out_path, arr);
      std::printf("wrote %llu sequences to %s\n", static_cast<unsigned long long>(n_seeds),
                  out_path.c_str());
    } else if (*run) {
      const ContainerSpec spec = run_setup.spec();
      const Dataset ds = run_setup.dataset();
      const PolicyFactory make = policy_factory(policy, model_path);
      ExperimentConfig cfg;
      cfg.method = policy;
      cfg.dataset_name = run_setup.dataset_name();
      cfg.seeds = seed_range(seed_base, n_seeds);
      cfg.buffer = buffer;
      cfg.ordering = ordering;
      cfg.threads = threads;
      OrderingFactory make_ord;
      if (ordering == "learned") {
        auto model = load_model(model_path);
        make_ord = [model] { return make_ordering("learned", model); };
      }
      const RunReport rep = run_experiment(make, ds, spec, cfg, make_ord);
      print_summary(rep);
      if (!out_path.empty()) write_report_files(rep, out_path, timing);
      if ((!trace_path.empty() || !debug_path.empty()) && n_seeds > 0) {
        auto p = make();
        dump_episode(*p, ds, spec, seed_base, trace_path, debug_path);
      }
    } else if (*trn) {
      const ContainerSpec spec = train_setup.spec();
      const Dataset ds = train_setup.dataset();
      tc.interleaved = !threaded;
      const TrainResult res = train(ds, spec, tc, [](const CurvePoint& p) {
        std::printf("frame %lld  loss %.6f  eval %.4f\n", p.frame, p.loss, p.eval_utility);
        std::fflush(stdout);
      });
      write_json_file(out_path, model_to_json(res.model));
      if (!curve_path.empty()) {
        std::ostringstream os;
        write_learning_curve(os, res.curve);
        write_text_file(curve_path, os.str());
      }
      std::printf("frames %lld  updates %lld  episodes %lld  detached %lld\n", res.frames,
                  res.updates, res.episodes, res.detached);
    } else if (*ev) {
      const ContainerSpec spec = eval_setup.spec();
      const Dataset ds = eval_setup.dataset();
      std::vector<std::string> methods{"learned"};
      methods.insert(methods.end(), baselines.begin(), baselines.end());
      std::vector<RunReport> reps;
      for (const auto& m : methods) {
        ExperimentConfig cfg;
        cfg.method = m;
        cfg.dataset_name = eval_setup.dataset_name();
        cfg.seeds = seed_range(seed_base, n_seeds);
        cfg.buffer = buffer;
        cfg.ordering = ordering;
        cfg.threads = threads;
        reps.push_back(run_experiment(policy_factory(m, model_path), ds, spec, cfg));
        if (!out_path.empty()) {
          std::filesystem::create_directories(out_path);
          write_report_files(reps.back(), (std::filesystem::path(out_path) / m).string(), false);
        }
      }
      write_comparison(std::cout, compare_reports(reps));
    } else if (*rpt) {
      std::vector<RunReport> reps;
      for (const auto& path : inputs) reps.push_back(report_from_json(read_json_file(path)));
      std::ostringstream os;
      write_comparison(os, compare_reports(reps));
      if (out_path.empty()) {
        std::cout << os.str();
      } else {
        write_text_file(out_path, os.str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
