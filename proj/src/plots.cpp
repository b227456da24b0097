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

#include "safeflow/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <variant>

#include "safeflow/json_util.hpp"

namespace safeflow {
namespace {

using EdgeId = std::int64_t;

struct Segment {
  EdgeId a;
  EdgeId b;
};

std::string Fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

std::vector<Polyline> ContourLines(const std::function<double(const StateVec&)>& f,
                                   const Box& box, int res, double level) {
  if (res < 1) throw InputError("contour resolution must be >= 1");
  if (box.dim() != 2) throw InputError("contours need a two-dimensional box");
  const int n = res + 1;
  auto point = [&](int i, int j) {
    StateVec x(2);
    x << box.min[0] + (box.max[0] - box.min[0]) * i / res,
        box.min[1] + (box.max[1] - box.min[1]) * j / res;
    return x;
  };
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) v[i * n + j] = f(point(i, j));
  }
  auto val = [&](int i, int j) { return v[i * n + j]; };
  // Horizontal edge (i,j)-(i+1,j) and vertical edge (i,j)-(i,j+1).
  auto h_edge = [&](int i, int j) -> EdgeId { return 2 * (static_cast<EdgeId>(i) * n + j); };
  auto v_edge = [&](int i, int j) -> EdgeId {
    return 2 * (static_cast<EdgeId>(i) * n + j) + 1;
  };
  std::unordered_map<EdgeId, StateVec> cross;
  auto crossing = [&](EdgeId id, int i0, int j0, int i1, int j1) {
    if (cross.count(id)) return;
    const double a = val(i0, j0);
    const double b = val(i1, j1);
    const double t = (level - a) / (b - a);
    cross[id] = point(i0, j0) + t * (point(i1, j1) - point(i0, j0));
  };

  std::vector<Segment> segs;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const double c[4] = {val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)};
      if (!std::all_of(c, c + 4, [](double q) { return std::isfinite(q); })) continue;
      int code = 0;
      for (int k = 0; k < 4; ++k) code |= (c[k] > level ? 1 : 0) << k;
      if (code == 0 || code == 15) continue;
      const EdgeId e[4] = {h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)};
      bool cut[4];
      for (int k = 0; k < 4; ++k) cut[k] = ((code >> k) ^ (code >> ((k + 1) % 4))) & 1;
      if (cut[0]) crossing(e[0], i, j, i + 1, j);
      if (cut[1]) crossing(e[1], i + 1, j, i + 1, j + 1);
      if (cut[2]) crossing(e[2], i, j + 1, i + 1, j + 1);
      if (cut[3]) crossing(e[3], i, j, i, j + 1);
      if (code == 5 || code == 10) {
        const bool center_above = 0.25 * (c[0] + c[1] + c[2] + c[3]) > level;
        // Corners 1 and 3 are cut off when the centre joins corners 0 and 2.
        if ((code == 5) == center_above) {
          segs.push_back({e[0], e[1]});
          segs.push_back({e[2], e[3]});
        } else {
          segs.push_back({e[3], e[0]});
          segs.push_back({e[1], e[2]});
        }
        continue;
      }
      EdgeId ends[2];
      int m = 0;
      for (int k = 0; k < 4; ++k) {
        if (cut[k]) ends[m++] = e[k];
      }
      segs.push_back({ends[0], ends[1]});
    }
  }

  // Join segments through shared edge crossings.
  std::unordered_map<EdgeId, std::vector<std::size_t>> touch;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    touch[segs[s].a].push_back(s);
    touch[segs[s].b].push_back(s);
  }
  std::vector<char> used(segs.size(), 0);
  std::vector<Polyline> lines;
  auto walk = [&](std::size_t s0, EdgeId start) {
    Polyline line{cross.at(start)};
    EdgeId at = start;
    std::size_t s = s0;
    while (true) {
      used[s] = 1;
      at = segs[s].a == at ? segs[s].b : segs[s].a;
      line.push_back(cross.at(at));
      std::size_t next = segs.size();
      for (std::size_t cand : touch[at]) {
        if (!used[cand]) next = cand;
      }
      if (next == segs.size()) break;
      s = next;
    }
    lines.push_back(std::move(line));
  };
  // Open lines start at crossings used once; the rest are closed loops.
  std::vector<EdgeId> order;
  order.reserve(touch.size());
  for (const auto& kv : touch) order.push_back(kv.first);
  std::sort(order.begin(), order.end());
  for (EdgeId id : order) {
    const auto& ts = touch[id];
    if (ts.size() == 1 && !used[ts[0]]) walk(ts[0], id);
  }
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (!used[s]) walk(s, segs[s].a);
  }
  return lines;
}

std::vector<Polyline> LearnedBoundary(const Diffeo& g, const Box& box, int res) {
  return ContourLines([&g](const StateVec& x) { return g.Forward(x).norm(); }, box, res, 1.0);
}

std::vector<Polyline> CostToGoContours(const Environment& env,
                                       const std::vector<LabeledPoint>& labeled, int res,
                                       const std::vector<double>& levels) {
  if (labeled.empty()) throw InputError("cost-to-go contours need labeled points");
  const auto field = [&](const StateVec& x) -> double {
    if (!env.IsSafe(x)) return std::numeric_limits<double>::quiet_NaN();
    // Four nearest labeled points by partial selection.
    constexpr int kNear = 4;
    std::pair<double, double> best[kNear];
    int have = 0;
    for (const auto& p : labeled) {
      const double d = (p.x - x).squaredNorm();
      if (have < kNear) {
        best[have++] = {d, p.c};
        std::sort(best, best + have);
      } else if (d < best[kNear - 1].first) {
        best[kNear - 1] = {d, p.c};
        std::sort(best, best + kNear);
      }
    }
    double wsum = 0.0;
    double acc = 0.0;
    for (int k = 0; k < have; ++k) {
      if (best[k].first == 0.0) return best[k].second;
      const double w = 1.0 / best[k].first;
      wsum += w;
      acc += w * best[k].second;
    }
    return acc / wsum;
  };
  std::vector<Polyline> out;
  for (double level : levels) {
    auto lines = ContourLines(field, env.workspace(), res, level);
    out.insert(out.end(), std::make_move_iterator(lines.begin()),
               std::make_move_iterator(lines.end()));
  }
  return out;
}

SvgCanvas::SvgCanvas(const Box& view, int width_px) : view_(view), width_(width_px) {
  if (view.dim() != 2 || width_px < 1) throw InputError("invalid SVG view");
  const StateVec ext = view.max - view.min;
  if (!(ext[0] > 0.0 && ext[1] > 0.0)) throw InputError("empty SVG view");
  scale_ = width_px / ext[0];
  height_ = static_cast<int>(std::ceil(ext[1] * scale_));
}

double SvgCanvas::Px(double x) const { return (x - view_.min[0]) * scale_; }
double SvgCanvas::Py(double y) const { return (view_.max[1] - y) * scale_; }

void SvgCanvas::AddEnvironment(const Environment& env) {
  const Box& w = env.workspace();
  items_.push_back("<rect class=\"workspace\" x=\"" + Fmt(Px(w.min[0])) + "\" y=\"" +
                   Fmt(Py(w.max[1])) + "\" width=\"" + Fmt(Px(w.max[0]) - Px(w.min[0])) +
                   "\" height=\"" + Fmt(Py(w.min[1]) - Py(w.max[1])) +
                   "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>");
  for (const auto& ob : env.obstacles()) {
    if (const Box* b = std::get_if<Box>(&ob)) {
      items_.push_back("<rect class=\"obstacle\" x=\"" + Fmt(Px(b->min[0])) + "\" y=\"" +
                       Fmt(Py(b->max[1])) + "\" width=\"" + Fmt(Px(b->max[0]) - Px(b->min[0])) +
                       "\" height=\"" + Fmt(Py(b->min[1]) - Py(b->max[1])) +
                       "\" fill=\"#999999\" stroke=\"black\"/>");
    } else {
      const Circle& c = std::get<Circle>(ob);
      AddCircle(c.center, c.radius, "obstacle", "black", "#999999");
    }
  }
}

void SvgCanvas::AddPolyline(const Polyline& line, const std::string& css_class,
                            const std::string& stroke, double stroke_px, bool closed) {
  if (line.empty()) return;
  std::string pts;
  for (const auto& p : line) {
    if (!pts.empty()) pts += ' ';
    pts += Fmt(Px(p[0])) + "," + Fmt(Py(p[1]));
  }
  items_.push_back(std::string("<") + (closed ? "polygon" : "polyline") + " class=\"" +
                   css_class + "\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + stroke +
                   "\" stroke-width=\"" + Fmt(stroke_px) + "\"/>");
}

void SvgCanvas::AddCircle(const StateVec& center, const double radius,
                          const std::string& css_class, const std::string& stroke,
                          const std::string& fill) {
  items_.push_back("<circle class=\"" + css_class + "\" cx=\"" + Fmt(Px(center[0])) +
                   "\" cy=\"" + Fmt(Py(center[1])) + "\" r=\"" + Fmt(radius * scale_) +
                   "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>");
}

void SvgCanvas::AddMarker(const StateVec& at, const std::string& css_class,
                          const std::string& fill) {
  items_.push_back("<circle class=\"" + css_class + "\" cx=\"" + Fmt(Px(at[0])) + "\" cy=\"" +
                   Fmt(Py(at[1])) + "\" r=\"3\" fill=\"" + fill + "\"/>");
}

std::string SvgCanvas::Render() const {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width_) + "\" height=\"" + std::to_string(height_) +
                    "\" viewBox=\"0 0 " + std::to_string(width_) + " " +
                    std::to_string(height_) + "\">\n";
  if (!metadata_.is_null()) {
    std::string text;
    for (char ch : metadata_.dump()) {
      switch (ch) {
        case '&': text += "&amp;"; break;
        case '<': text += "&lt;"; break;
        case '>': text += "&gt;"; break;
        default: text += ch;
      }
    }
    out += "  <metadata>" + text + "</metadata>\n";
  }
  for (const auto& item : items_) out += "  " + item + "\n";
  out += "</svg>\n";
  return out;
}

nlohmann::json PolylinesToJson(const std::vector<Polyline>& lines) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& line : lines) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : line) pts.push_back(VecToStd(p));
    arr.push_back(pts);
  }
  return arr;
}

}  // namespace safeflow
