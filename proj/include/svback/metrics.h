// svback/metrics.h

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

#ifndef SVBACK_METRICS_H_
#define SVBACK_METRICS_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "svback/data-model.h"

namespace svback {

struct OperatingPoint {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

struct CostParams {
  std::vector<OperatingPoint> points;

  /// {0.01, 1, 1} and {0.005, 1, 1}, averaged.
  static CostParams Default();
  /// Throws UsageError unless 0 < p_target < 1, costs > 0, >= 1 point.
  void Validate() const;
  static CostParams FromJson(const nlohmann::json &j);
  nlohmann::ordered_json ToJson() const;
};

/// Scores split by key. Trials with an unknown key are counted, not used.
struct LabeledScores {
  std::vector<double> target;
  std::vector<double> nontarget;
  std::size_t n_unknown = 0;
};

/// Splits by key and warns about excluded trials. Throws DataError when
/// either class is empty.
LabeledScores SplitByKey(const ScoreSet &scores);

/// One operating point of the detector "accept iff score > threshold".
struct DetPoint {
  double threshold;
  double p_miss;  // fraction of targets with score <= threshold
  double p_fa;    // fraction of nontargets with score > threshold
};

/// Staircase over all distinct scores, preceded by the accept-all point
/// (threshold -inf, p_miss 0, p_fa 1). The last point rejects everything.
std::vector<DetPoint> DetPoints(const LabeledScores &scores);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// EER from a staircase: at the first point where p_miss >= p_fa, linearly
/// interpolated with the previous point when the two differ there.
EerResult EerFromCurve(const std::vector<DetPoint> &points);
EerResult ComputeEer(const LabeledScores &scores);

/// Minimum over thresholds of the normalized detection cost
///   (c_miss p P_miss + c_fa (1-p) P_fa) / min(c_miss p, c_fa (1-p)),
/// averaged over operating points. `per_point` receives the individual
/// minima when non-null.
double ComputeMinCost(const LabeledScores &scores, const CostParams &params,
                      std::vector<double> *per_point = nullptr);

struct MetricReport {
  double eer = 0.0;
  double threshold_at_eer = 0.0;
  double min_c = 0.0;
  std::vector<double> per_operating_point;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
  std::size_t n_excluded = 0;

  nlohmann::ordered_json ToJson(const CostParams &params) const;
};

MetricReport Evaluate(const ScoreSet &scores, const CostParams &params);

/// TSV `threshold p_miss p_fa` with a header row.
void WriteDetPoints(const std::vector<DetPoint> &points,
                    const std::string &path);

}  // namespace svback

#endif  // SVBACK_METRICS_H_
