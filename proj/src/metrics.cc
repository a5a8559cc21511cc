// src/metrics.cc

// Copyright 2026  The svback Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "svback/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace svback {

CostParams CostParams::Default() {
  return CostParams{{{0.01, 1.0, 1.0}, {0.005, 1.0, 1.0}}};
}

void CostParams::Validate() const {
  if (points.empty()) throw UsageError("cost params need >= 1 operating point");
  for (const auto &p : points) {
    if (!(p.p_target > 0.0 && p.p_target < 1.0))
      throw UsageError(StrCat("p_target must be in (0, 1), got ", p.p_target));
    if (!(p.c_miss > 0.0) || !(p.c_fa > 0.0) || !std::isfinite(p.c_miss) ||
        !std::isfinite(p.c_fa))
      throw UsageError("detection costs must be positive and finite");
  }
}

CostParams CostParams::FromJson(const nlohmann::json &j) {
  CostParams params;
  const nlohmann::json &list = j.is_object() ? j.at("operating_points") : j;
  if (!list.is_array()) throw UsageError("operating_points must be an array");
  for (const auto &pj : list) {
    if (!pj.is_object()) throw UsageError("operating point must be an object");
    for (const auto &[key, value] : pj.items())
      if (key != "p_target" && key != "c_miss" && key != "c_fa")
        throw UsageError(StrCat("unknown operating point key '", key, "'"));
    OperatingPoint p;
    try {
      p.p_target = pj.at("p_target").get<double>();
      p.c_miss = pj.value("c_miss", 1.0);
      p.c_fa = pj.value("c_fa", 1.0);
    } catch (const nlohmann::json::exception &e) {
      throw UsageError(StrCat("bad operating point: ", e.what()));
    }
    params.points.push_back(p);
  }
  params.Validate();
  return params;
}

nlohmann::ordered_json CostParams::ToJson() const {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto &p : points)
    list.push_back({{"p_target", p.p_target}, {"c_miss", p.c_miss}, {"c_fa", p.c_fa}});
  return list;
}

LabeledScores SplitByKey(const ScoreSet &scores) {
  LabeledScores out;
  for (const auto &e : scores.entries) {
    if (e.key == TrialKey::kTarget) {
      out.target.push_back(e.score);
    } else if (e.key == TrialKey::kNontarget) {
      out.nontarget.push_back(e.score);
    } else {
      ++out.n_unknown;
    }
  }
  if (out.n_unknown > 0)
    Warn(StrCat(out.n_unknown, " trials with unknown key excluded from metrics"));
  if (out.target.empty() || out.nontarget.empty())
    throw DataError(StrCat("metrics need >= 1 target and >= 1 nontarget trial; "
                           "got ", out.target.size(), " and ",
                           out.nontarget.size()));
  return out;
}

std::vector<DetPoint> DetPoints(const LabeledScores &scores) {
  const std::size_t nt = scores.target.size(), nn = scores.nontarget.size();
  if (nt == 0 || nn == 0)
    throw DataError("metrics need >= 1 target and >= 1 nontarget trial");
  std::vector<double> tgt(scores.target), non(scores.nontarget);
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  for (double s : tgt)
    if (std::isnan(s)) throw DataError("NaN score");
  for (double s : non)
    if (std::isnan(s)) throw DataError("NaN score");
  std::vector<DetPoint> points;
  points.reserve(nt + nn + 1);
  points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  // Merge the two sorted lists; one point per distinct score.
  std::size_t i = 0, j = 0;
  while (i < nt || j < nn) {
    double s;
    if (j >= nn || (i < nt && tgt[i] <= non[j])) {
      s = tgt[i];
    } else {
      s = non[j];
    }
    while (i < nt && tgt[i] == s) ++i;
    while (j < nn && non[j] == s) ++j;
    points.push_back({s, static_cast<double>(i) / static_cast<double>(nt),
                      static_cast<double>(nn - j) / static_cast<double>(nn)});
  }
  return points;
}

EerResult EerFromCurve(const std::vector<DetPoint> &points) {
  if (points.empty()) throw DataError("empty DET curve");
  double prev_diff = points.front().p_miss - points.front().p_fa;
  if (prev_diff >= 0.0) return {points.front().p_miss, points.front().threshold};
  for (std::size_t i = 1; i < points.size(); ++i) {
    const DetPoint &a = points[i - 1], &b = points[i];
    const double diff = b.p_miss - b.p_fa;
    if (diff < 0.0) {
      prev_diff = diff;
      continue;
    }
    if (diff == 0.0) return {b.p_miss, b.threshold};
    const double alpha = -prev_diff / (diff - prev_diff);
    EerResult r;
    r.eer = a.p_miss + alpha * (b.p_miss - a.p_miss);
    r.threshold = std::isfinite(a.threshold)
                      ? a.threshold + alpha * (b.threshold - a.threshold)
                      : b.threshold;
    return r;
  }
  // Unreachable for a complete staircase, which ends at p_fa = 0.
  throw DataError("DET curve never reaches p_miss >= p_fa");
}

EerResult ComputeEer(const LabeledScores &scores) {
  return EerFromCurve(DetPoints(scores));
}

double ComputeMinCost(const LabeledScores &scores, const CostParams &params,
                      std::vector<double> *per_point) {
  params.Validate();
  std::vector<DetPoint> points = DetPoints(scores);
  std::vector<double> minima;
  for (const auto &op : params.points) {
    const double cm = op.c_miss * op.p_target;
    const double cf = op.c_fa * (1.0 - op.p_target);
    const double norm = std::min(cm, cf);
    double best = std::numeric_limits<double>::infinity();
    for (const auto &p : points)
      best = std::min(best, (cm * p.p_miss + cf * p.p_fa) / norm);
    minima.push_back(best);
  }
  double sum = 0.0;
  for (double m : minima) sum += m;
  if (per_point) *per_point = minima;
  return sum / static_cast<double>(minima.size());
}

nlohmann::ordered_json MetricReport::ToJson(const CostParams &params) const {
  nlohmann::ordered_json j;
  j["eer"] = eer;
  j["threshold_at_eer"] = threshold_at_eer;
  j["min_c"] = min_c;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < per_operating_point.size(); ++i) {
    const auto &op = params.points[i];
    per.push_back({{"p_target", op.p_target},
                   {"c_miss", op.c_miss},
                   {"c_fa", op.c_fa},
                   {"min_c", per_operating_point[i]}});
  }
  j["per_operating_point"] = per;
  j["n_target"] = n_target;
  j["n_nontarget"] = n_nontarget;
  j["n_excluded"] = n_excluded;
  return j;
}

MetricReport Evaluate(const ScoreSet &scores, const CostParams &params) {
  LabeledScores split = SplitByKey(scores);
  MetricReport r;
  EerResult eer = ComputeEer(split);
  r.eer = eer.eer;
  r.threshold_at_eer = eer.threshold;
  r.min_c = ComputeMinCost(split, params, &r.per_operating_point);
  r.n_target = split.target.size();
  r.n_nontarget = split.nontarget.size();
  r.n_excluded = split.n_unknown;
  return r;
}

void WriteDetPoints(const std::vector<DetPoint> &points,
                    const std::string &path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(StrCat("cannot write ", path));
  os << "threshold\tp_miss\tp_fa\n";
  char buf[96];
  for (const auto &p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\t%.17g\n", p.threshold,
                  p.p_miss, p.p_fa);
    os << buf;
  }
  if (!os) throw DataError(StrCat("I/O failure writing ", path));
}

}  // namespace svback
