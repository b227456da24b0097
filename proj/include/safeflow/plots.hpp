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

#ifndef SAFEFLOW_PLOTS_H_
#define SAFEFLOW_PLOTS_H_

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "safeflow/diffeo.hpp"
#include "safeflow/env.hpp"
#include "safeflow/flow.hpp"
#include "safeflow/roadmap.hpp"

namespace safeflow {

using Polyline = std::vector<StateVec>;

// Level set {f = level} over a res x res grid on box by marching squares,
// joined into polylines. Cells touching a non-finite value are skipped.
std::vector<Polyline> ContourLines(const std::function<double(const StateVec&)>& f,
                                   const Box& box, int res, double level);

// The learned safe-set boundary {|g(x)| = 1}.
std::vector<Polyline> LearnedBoundary(const Diffeo& g, const Box& box, int res);

// Contours of the cost-to-go interpolated from roadmap labels (inverse
// distance weighting over the four nearest labeled nodes; unsafe points are
// left out).
std::vector<Polyline> CostToGoContours(const Environment& env,
                                       const std::vector<LabeledPoint>& labeled, int res,
                                       const std::vector<double>& levels);

// Minimal SVG writer in world coordinates (y up).
class SvgCanvas {
 public:
  SvgCanvas(const Box& view, int width_px);

  void AddEnvironment(const Environment& env);
  void AddPolyline(const Polyline& line, const std::string& css_class,
                   const std::string& stroke, double stroke_px, bool closed = false);
  void AddCircle(const StateVec& center, double radius, const std::string& css_class,
                 const std::string& stroke, const std::string& fill);
  void AddMarker(const StateVec& at, const std::string& css_class, const std::string& fill);
  // Embedded as an escaped JSON <metadata> element.
  void SetMetadata(const nlohmann::json& meta) { metadata_ = meta; }
  std::string Render() const;

 private:
  double Px(double x) const;
  double Py(double y) const;

  Box view_;
  int width_;
  int height_;
  double scale_;
  std::vector<std::string> items_;
  nlohmann::json metadata_;
};

nlohmann::json PolylinesToJson(const std::vector<Polyline>& lines);

}  // namespace safeflow

#endif  // SAFEFLOW_PLOTS_H_
