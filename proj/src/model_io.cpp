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

#include "safeflow/model_io.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <utility>

#include "safeflow/json_util.hpp"

namespace safeflow {

nlohmann::json ModelToJson(const PlannerModel& model) {
  const BiLipMap& map = model.map;
  nlohmann::json blocks = nlohmann::json::array();
  for (int k = 0; k < map.pairs(); ++k) {
    const OrthBlock& o = map.orth_blocks()[k];
    const ResBlock& r = map.res_blocks()[k];
    blocks.push_back({{"type", "orth"}, {"skew", VecToStd(o.skew)}});
    blocks.push_back({{"type", "res"},
                      {"tau", r.tau},
                      {"W1", MatToStd(r.w1)},
                      {"b1", VecToStd(r.b1)},
                      {"d", VecToStd(r.d)},
                      {"W2", MatToStd(r.w2)},
                      {"b2", VecToStd(r.b2)}});
  }
  const CertBounds bounds = map.CertifiedBounds();
  nlohmann::json j = {{"version", kFileFormatVersion},
                      {"n", map.dim()},
                      {"width", map.width()},
                      {"blocks", blocks},
                      {"in_scale", map.in_scale()},
                      {"in_center", VecToStd(map.in_center())},
                      {"out_scale", map.out_scale()},
                      {"shift", VecToStd(map.shift())},
                      {"ball_scale", map.ball_scale()},
                      {"lambda", model.lambda},
                      {"level_c", model.level_c},
                      {"mu", bounds.mu},
                      {"nu", bounds.nu},
                      {"inverse_tol", map.inverse_options().tol},
                      {"inverse_max_iter", map.inverse_options().max_iter},
                      {"config", model.config}};
  if (const auto& rp = map.radial()) {
    j["radial"] = {{"tau", rp->tau},
                   {"sigma", rp->sigma},
                   {"alpha", VecToStd(rp->alpha)},
                   {"log_beta", VecToStd(rp->log_beta)},
                   {"gamma", VecToStd(rp->gamma)}};
  } else {
    j["radial"] = nullptr;
  }
  j["goal"] = map.goal() ? nlohmann::json(VecToStd(*map.goal())) : nlohmann::json();
  return j;
}

PlannerModel ModelFromJson(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const auto& blocks = j.at("blocks");
    if (blocks.size() % 2 != 0) throw InputError("blocks must come in orth/res pairs");
    std::vector<OrthBlock> orth;
    std::vector<ResBlock> res;
    for (std::size_t i = 0; i < blocks.size(); i += 2) {
      const auto& bo = blocks[i];
      const auto& br = blocks[i + 1];
      if (bo.at("type") != "orth" || br.at("type") != "res") {
        throw InputError("blocks must alternate orth, res");
      }
      orth.push_back({VecFromJson(bo.at("skew")), Mat(), Mat()});
      ResBlock r;
      r.tau = br.at("tau").get<double>();
      r.b1 = VecFromJson(br.at("b1"));
      r.b2 = VecFromJson(br.at("b2"));
      const auto w = r.b1.size();
      r.d = VecFromJson(br.at("d"));
      r.w1 = MatFromJson(br.at("W1"), w, n);
      r.w2 = MatFromJson(br.at("W2"), n, w);
      res.push_back(std::move(r));
    }
    std::optional<RadialProfile> radial;
    if (j.contains("radial") && !j.at("radial").is_null()) {
      const auto& jr = j.at("radial");
      RadialProfile p;
      p.tau = jr.at("tau").get<double>();
      p.sigma = jr.at("sigma").get<double>();
      p.alpha = VecFromJson(jr.at("alpha"));
      p.log_beta = VecFromJson(jr.at("log_beta"));
      p.gamma = VecFromJson(jr.at("gamma"));
      radial = std::move(p);
    }
    PlannerModel model{BiLipMap(n, std::move(orth), std::move(res), std::move(radial))};
    BiLipMap& map = model.map;
    map.SetInputNormalization(VecFromJson(j.at("in_center")), j.at("in_scale").get<double>());
    map.SetOutScale(j.at("out_scale").get<double>());
    map.SetBallScale(j.at("ball_scale").get<double>());
    if (j.contains("goal") && !j.at("goal").is_null()) {
      map.SetGoalCenter(VecFromJson(j.at("goal")));
    } else {
      map.SetShift(VecFromJson(j.at("shift")));
    }
    InverseOptions inv;
    if (j.contains("inverse_tol")) inv.tol = j.at("inverse_tol").get<double>();
    if (j.contains("inverse_max_iter")) inv.max_iter = j.at("inverse_max_iter").get<int>();
    map.set_inverse_options(inv);
    model.lambda = j.at("lambda").get<double>();
    model.level_c = j.value("level_c", 0.0);
    if (j.contains("config")) model.config = j.at("config");
    if (!(model.lambda > 0.0)) throw InputError("lambda must be > 0");

    const CertBounds b = map.CertifiedBounds();
    auto close = [](double a, double c) {
      return std::abs(a - c) <= 1e-9 * std::max(std::abs(a), std::abs(c));
    };
    if (j.contains("mu") && !close(j.at("mu").get<double>(), b.mu)) {
      throw InputError("stored mu does not match the blocks (corrupt model file?)");
    }
    if (j.contains("nu") && !close(j.at("nu").get<double>(), b.nu)) {
      throw InputError("stored nu does not match the blocks (corrupt model file?)");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
}

void WriteJsonFile(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(1) << '\n';
}

nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse " + path + ": " + e.what());
  }
}

void SaveModel(const PlannerModel& model, const std::string& path) {
  WriteJsonFile(ModelToJson(model), path);
}

PlannerModel LoadModel(const std::string& path) {
  return ModelFromJson(ReadJsonFile(path));
}

}  // namespace safeflow
