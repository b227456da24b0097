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


#include "safeflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "safeflow/json_util.hpp"

namespace safeflow {

void GenDataConfig::Validate() const {
  if (safe_count < 1 || unsafe_count < 1) throw InputError("sample counts must be >= 1");
  if (k < 1) throw InputError("k must be >= 1");
  if (goal && !goal->allFinite()) throw InputError("goal must be finite");
  if (!std::isfinite(step) || !std::isfinite(delta)) {
    throw InputError("step and delta must be finite");
  }
}

GeneratedData GenerateDatasets(const Environment& env, const GenDataConfig& config) {
  config.Validate();
  const Box& ws = env.workspace();
  const StateVec goal = config.goal ? *config.goal : StateVec(0.5 * (ws.min + ws.max));
  if (goal.size() != env.dim()) throw InputError("goal dimension does not match the workspace");
  if (!env.IsSafe(goal)) throw InputError("goal unsafe");
  const auto seeds = DeriveSeeds(config.seed, 2);

  GeneratedData out;
  out.step = config.step > 0.0 ? config.step : 0.05 * ws.diagonal();
  const RrtTree tree = RrtGrow(env, goal, config.safe_count, out.step, seeds[0]);
  out.roadmap = BuildKnnGraph(env, tree.nodes, config.k, 0);
  AddTreeEdges(out.roadmap, tree);
  const CostToGo ctg = ComputeCostToGo(out.roadmap);
  out.dropped = ctg.dropped;
  std::vector<StateVec> safe;
  safe.reserve(ctg.node.size());
  for (int i : ctg.node) safe.push_back(out.roadmap.nodes[i]);
  const double c_bar = *std::max_element(ctg.label.begin(), ctg.label.end());
  double delta = config.delta;
  if (!(delta > 0.0)) {
    // A single-node roadmap has c_bar = 0; fall back to a geometric margin.
    delta = c_bar > 0.0 ? 0.1 * c_bar : 0.05 * ws.diagonal();
  }
  const auto unsafe = env.SampleUnsafe(config.unsafe_count, seeds[1]);
  out.data = AssembleDatasets(safe, ctg.label, unsafe, delta);
  return out;
}

nlohmann::json DatasetSummary(const LabeledDatasets& data) {
  return {{"M", data.M()},
          {"N", data.N()},
          {"K", data.K()},
          {"c_bar", data.c_bar},
          {"delta", data.delta},
          {"goal", VecToStd(data.goal)}};
}

void ModelConfig::Validate() const {
  if (net.pairs < 0 || net.width < 1) throw InputError("bad network shape");
  if (!(net.tau > 0.0 && net.tau < 1.0)) throw InputError("tau must lie in (0, 1)");
  if (net.radial_terms < 0) throw InputError("radial_terms must be >= 0");
  if (net.radial_terms > 0 && !(net.radial_tau > 0.0 && net.radial_tau < 1.0)) {
    throw InputError("radial_tau must lie in (0, 1)");
  }
  if (!(w1_std >= 0.0 && w2_std >= 0.0 && bias_range >= 0.0)) {
    throw InputError("initialization scales must be >= 0");
  }
  if (!(in_extent > 0.0)) throw InputError("in_extent must be > 0");
  if (!(out_scale_factor > 0.0)) throw InputError("out_scale_factor must be > 0");
}

TrainOutcome TrainPlanner(const LabeledDatasets& data, const ModelConfig& model_config,
                          TrainConfig train_config) {
  model_config.Validate();
  train_config.Validate();
  if (data.safe.empty()) throw InputError("training needs safe samples");
  BiLipConfig net = model_config.net;
  net.dim = static_cast<int>(data.goal.size());
  const std::uint64_t init_seed = model_config.init_seed != 0
                                      ? model_config.init_seed
                                      : DeriveSeeds(train_config.seed, 1)[0];
  BiLipMap map = BiLipMap::Random(net, init_seed, model_config.w1_std, model_config.w2_std,
                                  model_config.bias_range);
  FitInputNormalization(map, data, model_config.in_extent);
  map.SetGoalCenter(data.goal);
  map.SetOutScale(model_config.out_scale_factor *
                  AutoOutScale(map, data, train_config.lambda));
  train_config.auto_out_scale = false;
  auto [trained, report] = Train(std::move(map), data, train_config);
  TrainOutcome out{PlannerModel{std::move(trained)}, std::move(report), {}};
  out.calibration = CalibrateLevel(out.model.map, data, train_config.lambda);
  out.model.lambda = train_config.lambda;
  out.model.level_c = out.calibration.level_c;
  out.report.level_c = out.calibration.level_c;
  out.report.ball_scale = out.calibration.ball_scale;
  return out;
}

}  // namespace safeflow
