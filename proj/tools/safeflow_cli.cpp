// Copyright 2026 The Safeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// safeflow: dataset generation, training, planning, verification and plot
// export for bi-Lipschitz natural gradient planners.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "safeflow/env.hpp"
#include "safeflow/flow.hpp"
#include "safeflow/json_util.hpp"
#include "safeflow/model_io.hpp"
#include "safeflow/pipeline.hpp"
#include "safeflow/plots.hpp"
#include "safeflow/roadmap.hpp"
#include "safeflow/train.hpp"
#include "safeflow/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace safeflow;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

// Binds CLI options to variables and lets a --config JSON object set the
// same variables by long option name. Flags given on the command line win.
class Knobs {
 public:
  explicit Knobs(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* Add(const std::string& name, T& ref, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, ref, help);
    Register(name, opt, ref);
    return opt;
  }

  CLI::Option* Flag(const std::string& name, bool& ref, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name + ",!--no-" + name, ref, help);
    Register(name, opt, ref);
    return opt;
  }

  bool Has(const std::string& name) const { return index_.count(name) > 0; }

  void Apply(const std::string& name, const json& value) {
    Knob& k = knobs_[index_.at(name)];
    if (k.opt->count() > 0) return;
    try {
      k.set(value);
    } catch (const json::exception& e) {
      throw InputError("config key '" + name + "': " + e.what());
    }
    from_config_.insert(name);
  }

  bool Given(const std::string& name) const {
    return from_config_.count(name) > 0 || knobs_[index_.at(name)].opt->count() > 0;
  }

  json Effective() const {
    json j = json::object();
    for (const auto& k : knobs_) j[k.name] = k.get();
    return j;
  }

 private:
  struct Knob {
    std::string name;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };

  template <class T>
  void Register(const std::string& name, CLI::Option* opt, T& ref) {
    index_[name] = knobs_.size();
    knobs_.push_back({name, opt, [&ref](const json& j) { ref = j.get<T>(); },
                      [&ref] { return json(ref); }});
  }

  CLI::App* app_;
  std::vector<Knob> knobs_;
  std::map<std::string, std::size_t> index_;
  std::set<std::string> from_config_;
};

void ApplyConfigFile(const std::string& path, Knobs& global, Knobs& local) {
  const json j = ReadJsonFile(path);
  if (!j.is_object()) throw InputError("--config must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (local.Has(key)) {
      local.Apply(key, value);
    } else if (global.Has(key)) {
      global.Apply(key, value);
    } else {
      throw InputError("unknown config key '" + key + "'");
    }
  }
}

StateVec ToState(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw InputError(what + " is required");
  StateVec x = Eigen::Map<const StateVec>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (!x.allFinite()) throw InputError(what + " must be finite");
  return x;
}

void RequireFile(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

fs::path PrepareDir(const std::string& dir) {
  if (dir.empty()) throw InputError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create directory " + dir);
  return fs::path(dir);
}

void PrepareParent(const std::string& file) {
  if (file.empty()) throw InputError("--out is required");
  const fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) PrepareDir(parent.string());
}

Environment LoadEnv(const std::string& name) {
  if (fs::is_regular_file(name)) return LoadEnvironment(name);
  return Environment::Preset(name);
}

json Stamp(json body, const json& config) {
  body["version"] = kFileFormatVersion;
  body["config"] = config;
  return body;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string env = "corridor-v1";
  std::vector<double> goal;
  int safe_count = 2500;
  int unsafe_count = 2500;
  int k = 10;
  double step = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

void AddGenData(CLI::App* sub, Knobs& kn, GenDataArgs& a) {
  kn.Add("env", a.env, "environment preset or JSON file");
  kn.Add("goal", a.goal, "training goal (RRT root); default: workspace center")
      ->delimiter(',');
  kn.Add("safe-count", a.safe_count, "safe samples (RRT nodes)");
  kn.Add("unsafe-count", a.unsafe_count, "unsafe samples");
  kn.Add("k", a.k, "k-NN graph degree");
  kn.Add("step", a.step, "RRT step; 0 selects 5% of the workspace diagonal");
  kn.Add("delta", a.delta, "unsafe label margin; 0 selects 0.1 * c_bar");
  kn.Add("seed", a.seed, "random seed (required)");
  kn.Add("out", a.out, "output directory");
  (void)sub;
}

int RunGenData(const GenDataArgs& a, const Knobs& kn) {
  if (!kn.Given("seed")) throw InputError("--seed is required for gen-data");
  const Environment env = LoadEnv(a.env);
  const fs::path dir = PrepareDir(a.out);
  GenDataConfig cfg;
  if (!a.goal.empty()) cfg.goal = ToState(a.goal, "--goal");
  cfg.safe_count = a.safe_count;
  cfg.unsafe_count = a.unsafe_count;
  cfg.k = a.k;
  cfg.step = a.step;
  cfg.delta = a.delta;
  cfg.seed = a.seed;
  const GeneratedData gen = GenerateDatasets(env, cfg);
  const json config = kn.Effective();
  WriteDatasetsJsonl(gen.data, (dir / "datasets.jsonl").string(), config);
  json summary = DatasetSummary(gen.data);
  summary["dropped"] = gen.dropped;
  summary["step"] = gen.step;
  summary["edges"] = gen.roadmap.edges.size();
  summary["env"] = env;
  WriteJsonFile(Stamp(summary, config), (dir / "summary.json").string());
  std::cout << "M=" << gen.data.M() << " N=" << gen.data.N() << " c_bar=" << gen.data.c_bar
            << " delta=" << gen.data.delta << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string demo;
  int epochs = 1500;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double lambda = 1.0;
  double rho = 0.0;
  int pairs = 16;
  int width = 16;
  double tau = 0.7;
  int radial_terms = 8;
  double radial_tau = 0.9;
  double in_extent = 15.0;
  double out_scale_factor = 3.0;
  std::uint64_t seed = 0;
  std::string out;
};

void AddTrain(Knobs& kn, TrainArgs& a) {
  kn.Add("data", a.data, "datasets JSONL from gen-data");
  kn.Add("demo", a.demo, "optional demonstration JSONL");
  kn.Add("epochs", a.epochs, "training epochs");
  kn.Add("batch-size", a.batch_size, "minibatch size");
  kn.Add("lr", a.learning_rate, "Adam learning rate");
  kn.Add("lambda", a.lambda, "convergence rate");
  kn.Add("rho", a.rho, "weight of the demonstration loss");
  kn.Add("pairs", a.pairs, "orthogonal/residual block pairs");
  kn.Add("width", a.width, "hidden width of each residual block");
  kn.Add("tau", a.tau, "Lipschitz budget per residual block, in (0, 1)");
  kn.Add("radial-terms", a.radial_terms, "terms of the radial output profile; 0 disables it");
  kn.Add("radial-tau", a.radial_tau, "slope budget of the radial profile, in (0, 1)");
  kn.Add("in-extent", a.in_extent, "half-diagonal of the safe box after input scaling");
  kn.Add("out-scale-factor", a.out_scale_factor, "multiplier on the automatic output scale");
  kn.Add("seed", a.seed, "random seed (required)");
  kn.Add("out", a.out, "output directory");
}

int RunTrain(const TrainArgs& a, const Knobs& kn, bool quiet) {
  if (!kn.Given("seed")) throw InputError("--seed is required for train");
  RequireFile(a.data, "--data");
  if (!a.demo.empty()) RequireFile(a.demo, "--demo");
  const fs::path dir = PrepareDir(a.out);
  LabeledDatasets data = ReadDatasetsJsonl(a.data);
  if (!a.demo.empty()) data.demo = ReadDemoJsonl(a.demo);

  ModelConfig mc;
  mc.net.pairs = a.pairs;
  mc.net.width = a.width;
  mc.net.tau = a.tau;
  mc.net.radial_terms = a.radial_terms;
  mc.net.radial_tau = a.radial_tau;
  mc.in_extent = a.in_extent;
  mc.out_scale_factor = a.out_scale_factor;
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.learning_rate;
  tc.lambda = a.lambda;
  tc.rho = a.rho;
  tc.seed = a.seed;
  if (!quiet) {
    const int every = std::max(1, a.epochs / 15);
    tc.on_epoch = [every, &a](int epoch, double loss) {
      if (epoch % every == 0 || epoch + 1 == a.epochs) {
        std::cerr << "epoch " << epoch << " loss " << loss << "\n";
      }
    };
  }
  TrainOutcome outcome = TrainPlanner(data, mc, tc);
  const json config = kn.Effective();
  outcome.model.config = config;
  SaveModel(outcome.model, (dir / "model.json").string());

  std::ofstream csv(dir / "loss.csv");
  if (!csv) throw InputError("cannot write " + (dir / "loss.csv").string());
  csv << "# " << json{{"version", kFileFormatVersion}, {"config", config}}.dump() << "\n";
  csv << "epoch,total,safe,unsafe,task\n";
  csv.precision(17);
  const TrainReport& r = outcome.report;
  for (std::size_t e = 0; e < r.total.size(); ++e) {
    csv << e << ',' << r.total[e] << ',' << r.safe[e] << ',' << r.unsafe[e] << ','
        << r.task[e] << '\n';
  }

  const CertBounds b = outcome.model.map.CertifiedBounds();
  json report = {{"epochs", r.total.size()},
                 {"final_loss", r.total.empty() ? 0.0 : r.total.back()},
                 {"max_safe_violation", r.max_safe_violation},
                 {"min_unsafe_margin", r.min_unsafe_margin},
                 {"safe_fraction", r.safe_fraction},
                 {"unsafe_fraction", r.unsafe_fraction},
                 {"level_c", outcome.calibration.level_c},
                 {"ball_scale", outcome.calibration.ball_scale},
                 {"max_safe_excess", outcome.calibration.max_safe_excess},
                 {"min_unsafe_level_margin", outcome.calibration.min_unsafe_margin},
                 {"separated", outcome.calibration.separated},
                 {"mu", b.mu},
                 {"nu", b.nu},
                 {"data", DatasetSummary(data)}};
  WriteJsonFile(Stamp(report, config), (dir / "train_report.json").string());
  std::cout << "safe_fraction=" << r.safe_fraction << " unsafe_fraction=" << r.unsafe_fraction
            << " separated=" << (outcome.calibration.separated ? "yes" : "no")
            << " seconds=" << r.seconds << "\n";
  return 0;
}

// -------------------------------------------------------------------- plan

struct PlanArgs {
  std::string model;
  std::vector<double> start;
  std::vector<double> goal;
  std::string goal_path;
  std::vector<double> times;
  double horizon = 0.0;
  int samples = 200;
  double step = 0.0;
  double lambda = 1.0;
  double eps_ft = 1e-3;
  double inv_tol = 1e-9;
  std::string method = "analytic";
  std::string out;
};

void AddPlan(Knobs& kn, PlanArgs& a) {
  kn.Add("model", a.model, "model JSON, or 'shear' for the analytic shear map");
  kn.Add("start", a.start, "initial state")->delimiter(',');
  kn.Add("goal", a.goal, "fixed goal")->delimiter(',');
  kn.Add("goal-path", a.goal_path, "time-varying goal path JSON (uses RK4)");
  kn.Add("times", a.times, "sample times for the analytic method")->delimiter(',');
  kn.Add("horizon", a.horizon, "final time; 0 selects 6 / lambda");
  kn.Add("samples", a.samples, "uniform samples on [0, horizon] when --times is absent");
  kn.Add("step", a.step, "RK4 step; 0 selects min(0.01, 0.1 / lambda)");
  kn.Add("lambda", a.lambda, "convergence rate for the shear map (models carry their own)");
  kn.Add("eps-ft", a.eps_ft, "finite-time deadzone radius in the image");
  kn.Add("inv-tol", a.inv_tol, "inversion tolerance");
  kn.Add("method", a.method, "analytic | rk4 | finite-time | gradient-baseline")
      ->check(CLI::IsMember({"analytic", "rk4", "finite-time", "gradient-baseline"}));
  kn.Add("out", a.out, "trajectory JSON output");
}

int RunPlan(const PlanArgs& a, const Knobs& kn) {
  std::unique_ptr<Diffeo> shear;
  std::optional<PlannerModel> model;
  FlowConfig cfg;
  if (a.model == "shear") {
    shear = std::make_unique<ShearMap>();
    cfg.lambda = a.lambda;
  } else {
    RequireFile(a.model, "--model");
    model = LoadModel(a.model);
    cfg.lambda = model->lambda;
  }
  if (!a.goal_path.empty()) RequireFile(a.goal_path, "--goal-path");
  PrepareParent(a.out);
  const Diffeo& g = shear ? *shear : static_cast<const Diffeo&>(model->map);
  cfg.step = a.step;
  cfg.eps_ft = a.eps_ft;
  cfg.inv_tol = a.inv_tol;
  cfg.Validate();
  const StateVec x0 = ToState(a.start, "--start");
  if (x0.size() != g.dim()) throw InputError("--start has the wrong dimension");
  const double horizon = a.horizon > 0.0 ? a.horizon : 6.0 / cfg.lambda;

  auto warn_outside = [&g](const StateVec& x, const char* what) {
    const double r = g.Forward(x).norm();
    if (r > 1.0) {
      std::cerr << "warning: |g(" << what << ")| = " << r
                << " > 1; convergence still holds, the safety guarantee does not\n";
    }
  };
  warn_outside(x0, "start");

  Trajectory traj;
  if (!a.goal_path.empty()) {
    if (a.method != "rk4") throw InputError("--goal-path requires --method rk4");
    const GoalPath path = GoalPathFromJson(ReadJsonFile(a.goal_path));
    warn_outside(path.At(0.0), "goal(0)");
    traj = TrackingRollout(g, x0, path, horizon, cfg);
  } else {
    const StateVec goal = ToState(a.goal, "--goal");
    if (goal.size() != g.dim()) throw InputError("--goal has the wrong dimension");
    warn_outside(goal, "goal");
    if (a.method == "analytic") {
      std::vector<double> times = a.times;
      if (times.empty()) {
        if (a.samples < 2) throw InputError("--samples must be >= 2");
        for (int i = 0; i < a.samples; ++i) times.push_back(horizon * i / (a.samples - 1));
      }
      traj = RolloutAnalytic(g, x0, goal, cfg, times);
    } else {
      VectorField field;
      if (a.method == "rk4") {
        field = [&](double, const StateVec& x) { return NaturalField(g, x, goal, cfg.lambda); };
      } else if (a.method == "finite-time") {
        field = [&](double, const StateVec& x) { return FiniteTimeField(g, x, goal, cfg); };
      } else {
        field = [&](double, const StateVec& x) {
          return GradientFlowField(g, x, goal, cfg.lambda);
        };
      }
      traj = IntegrateField(field, x0, horizon, cfg);
      traj.goal = goal;
      traj.method = a.method;
    }
  }
  json j = TrajectoryToJson(traj);
  double max_norm = 0.0;
  for (const auto& x : traj.states) max_norm = std::max(max_norm, g.Forward(x).norm());
  j["max_image_norm"] = max_norm;
  WriteJsonFile(Stamp(j, kn.Effective()), a.out);
  std::cout << "samples=" << traj.states.size() << " max|g(x)|=" << max_norm << "\n";
  return 0;
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
  std::string model;
  std::string env = "corridor-v1";
  SuiteOptions suite;
  std::string out;
};

void AddVerify(Knobs& kn, VerifyArgs& a) {
  kn.Add("model", a.model, "model JSON");
  kn.Add("env", a.env, "environment preset or JSON file");
  kn.Add("seed", a.suite.seed, "random seed");
  kn.Add("pairs", a.suite.bilip_pairs, "random pairs for the bi-Lipschitz check");
  kn.Add("inversions", a.suite.inversion_count, "inversion round trips");
  kn.Add("barrier-samples", a.suite.barrier_samples, "learned-set samples for the barrier check");
  kn.Add("exterior-samples", a.suite.exterior_samples, "samples with 1 < |g| <= 2");
  kn.Add("goals", a.suite.goals, "random goals");
  kn.Add("rollouts", a.suite.rollouts, "analytic rollouts");
  kn.Add("rollout-samples", a.suite.rollout_samples, "samples per rollout");
  kn.Add("grid", a.suite.grid, "grid resolution for the velocity checks");
  kn.Add("horizon", a.suite.horizon, "rollout horizon; 0 selects 6 / lambda");
  kn.Add("tracking-speed", a.suite.tracking_speed, "speed of the moving goal");
  kn.Add("env-min-rate", a.suite.env_min_rate, "reported true-environment safety target");
  kn.Flag("shear-check", a.suite.shear_check, "include the shear-map counterexample");
  kn.Add("out", a.out, "report JSON output");
}

int RunVerify(VerifyArgs a, const Knobs& kn, int threads) {
  RequireFile(a.model, "--model");
  const Environment env = LoadEnv(a.env);
  PrepareParent(a.out);
  const PlannerModel model = LoadModel(a.model);
  a.suite.threads = threads;
  const auto reports = RunSuite(model, env, a.suite);
  const bool pass = AllAssertedPass(reports);
  json config = kn.Effective();
  WriteJsonFile(Stamp({{"pass", pass}, {"reports", ReportsToJson(reports)}}, config), a.out);
  for (const auto& r : reports) {
    const char* tag = !r.asserted ? (r.pass ? "INFO" : "WARN") : (r.pass ? "PASS" : "FAIL");
    std::cout << tag << "  " << r.name << "  worst_margin=" << r.worst_margin
              << "  samples=" << r.samples << "\n";
  }
  return pass ? 0 : kExitCheckFailed;
}

// ------------------------------------------------------------ export-plots

struct PlotArgs {
  std::string env = "corridor-v1";
  std::string model;
  std::string data;
  std::vector<std::string> traj;
  int res = 200;
  int levels = 8;
  int width_px = 800;
  std::string out;
};

void AddPlots(Knobs& kn, PlotArgs& a) {
  kn.Add("env", a.env, "environment preset or JSON file");
  kn.Add("model", a.model, "model JSON (learned boundary and image view)");
  kn.Add("data", a.data, "datasets JSONL (cost-to-go contours)");
  kn.Add("traj", a.traj, "trajectory JSON files");
  kn.Add("res", a.res, "marching-squares grid resolution");
  kn.Add("levels", a.levels, "number of cost-to-go contour levels");
  kn.Add("width-px", a.width_px, "SVG width in pixels");
  kn.Add("out", a.out, "output directory");
}

int RunPlots(const PlotArgs& a, const Knobs& kn) {
  if (!a.model.empty()) RequireFile(a.model, "--model");
  if (!a.data.empty()) RequireFile(a.data, "--data");
  for (const auto& t : a.traj) RequireFile(t, "--traj");
  if (a.res < 2 || a.levels < 0 || a.width_px < 16) throw InputError("bad plot resolution");
  const Environment env = LoadEnv(a.env);
  const fs::path dir = PrepareDir(a.out);
  const json config = kn.Effective();
  const Box view = env.SamplingBox();

  std::vector<Trajectory> trajs;
  for (const auto& t : a.traj) trajs.push_back(TrajectoryFromJson(ReadJsonFile(t)));
  std::optional<PlannerModel> model;
  if (!a.model.empty()) model = LoadModel(a.model);

  SvgCanvas canvas(view, a.width_px);
  canvas.AddEnvironment(env);
  json out = {{"boundary", json::array()}, {"contours", json::array()},
              {"trajectories", json::array()}};
  if (!a.data.empty() && a.levels > 0) {
    const LabeledDatasets data = ReadDatasetsJsonl(a.data);
    std::vector<double> levels;
    for (int i = 1; i <= a.levels; ++i) levels.push_back(data.c_bar * i / (a.levels + 1));
    const auto contours = CostToGoContours(env, data.safe, a.res, levels);
    for (const auto& line : contours) canvas.AddPolyline(line, "cost-to-go", "#9a9a9a", 1.0);
    out["contours"] = PolylinesToJson(contours);
    out["contour_levels"] = levels;
  }
  if (model) {
    const auto boundary = LearnedBoundary(model->map, view, a.res);
    for (const auto& line : boundary) {
      canvas.AddPolyline(line, "learned-boundary", "#d62728", 2.0);
    }
    out["boundary"] = PolylinesToJson(boundary);
  }
  std::vector<Polyline> paths;
  for (const auto& t : trajs) {
    paths.emplace_back(t.states.begin(), t.states.end());
    canvas.AddPolyline(paths.back(), "trajectory", "#1f77b4", 1.5);
    canvas.AddMarker(t.states.front(), "start", "#2ca02c");
    canvas.AddMarker(t.goal, "goal", "#ff7f0e");
  }
  out["trajectories"] = PolylinesToJson(paths);
  canvas.SetMetadata({{"version", kFileFormatVersion}, {"config", config}});
  {
    std::ofstream svg(dir / "plot.svg");
    if (!svg) throw InputError("cannot write plot.svg");
    svg << canvas.Render();
  }

  if (model) {
    // Image view: the unit ball with trajectories mapped through g.
    Box zbox{StateVec::Constant(2, -1.2), StateVec::Constant(2, 1.2)};
    SvgCanvas zc(zbox, a.width_px);
    Polyline circle;
    for (int i = 0; i <= 256; ++i) {
      StateVec p(2);
      p << std::cos(2.0 * M_PI * i / 256), std::sin(2.0 * M_PI * i / 256);
      circle.push_back(p);
    }
    zc.AddPolyline(circle, "unit-sphere", "#d62728", 2.0, true);
    std::vector<Polyline> zpaths;
    for (const auto& t : trajs) {
      Polyline zp;
      for (const auto& x : t.states) zp.push_back(model->map.Forward(x));
      zc.AddPolyline(zp, "trajectory", "#1f77b4", 1.5);
      zc.AddMarker(zp.front(), "start", "#2ca02c");
      zc.AddMarker(model->map.Forward(t.goal), "goal", "#ff7f0e");
      zpaths.push_back(std::move(zp));
    }
    out["image_trajectories"] = PolylinesToJson(zpaths);
    zc.SetMetadata({{"version", kFileFormatVersion}, {"config", config}});
    std::ofstream svg(dir / "image.svg");
    if (!svg) throw InputError("cannot write image.svg");
    svg << zc.Render();
  }
  WriteJsonFile(Stamp(out, config), (dir / "plot.json").string());
  std::cout << "trajectories=" << trajs.size() << "\n";
  return 0;
}

int Run(int argc, char** argv) {
  CLI::App app{"safeflow: goal-conditioned flows through a certified bi-Lipschitz map"};
  app.require_subcommand(1);
  app.fallthrough();
  Knobs global(&app);
  std::string config_path;
  int threads = 1;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON object overriding unset flags by long name");
  global.Add("threads", threads, "worker threads (1 keeps runs reproducible)");
  app.add_flag("--quiet", quiet, "suppress progress output");

  GenDataArgs gen;
  TrainArgs train;
  PlanArgs plan;
  VerifyArgs verify;
  PlotArgs plots;
  CLI::App* s_gen = app.add_subcommand("gen-data", "sample, label and write training data");
  CLI::App* s_train = app.add_subcommand("train", "fit and calibrate a planner model");
  CLI::App* s_plan = app.add_subcommand("plan", "roll out a trajectory");
  CLI::App* s_verify = app.add_subcommand("verify", "run the certificate suite");
  CLI::App* s_plots = app.add_subcommand("export-plots", "write SVG and JSON plot data");
  Knobs k_gen(s_gen), k_train(s_train), k_plan(s_plan), k_verify(s_verify), k_plots(s_plots);
  AddGenData(s_gen, k_gen, gen);
  AddTrain(k_train, train);
  AddPlan(k_plan, plan);
  AddVerify(k_verify, verify);
  AddPlots(k_plots, plots);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  if (threads < 1) throw InputError("--threads must be >= 1");

  struct Entry {
    CLI::App* sub;
    Knobs* knobs;
    std::function<int()> run;
  };
  const std::vector<Entry> entries = {
      {s_gen, &k_gen, [&] { return RunGenData(gen, k_gen); }},
      {s_train, &k_train, [&] { return RunTrain(train, k_train, quiet); }},
      {s_plan, &k_plan, [&] { return RunPlan(plan, k_plan); }},
      {s_verify, &k_verify, [&] { return RunVerify(verify, k_verify, threads); }},
      {s_plots, &k_plots, [&] { return RunPlots(plots, k_plots); }},
  };
  for (const auto& e : entries) {
    if (!e.sub->parsed()) continue;
    if (!config_path.empty()) {
      RequireFile(config_path, "--config");
      ApplyConfigFile(config_path, global, *e.knobs);
    }
    return e.run();
  }
  return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
