// svback/score-norm.h

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

#ifndef SVBACK_SCORE_NORM_H_
#define SVBACK_SCORE_NORM_H_

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"
#include "svback/scoring.h"

namespace svback {

/// Per-speaker mean embeddings used as impostor references.
struct Cohort {
  Matrix vectors;  // one row per speaker
  std::vector<std::string> speaker_ids;

  std::size_t Size() const { return speaker_ids.size(); }
};

/// Averages the rows of every known speaker. Call on raw embeddings, then
/// map `vectors` through the scoring representation.
Cohort BuildCohort(const EmbeddingSet &set);

/// Cohort scores of every model (as enrollment) and every test segment.
struct CohortScores {
  std::map<std::string, std::vector<double>> models;
  std::map<std::string, std::vector<double>> tests;
};

/// Scores every model and test segment of `trials` against every cohort
/// row. `cohort.vectors` must already be in the representation of `rep`.
CohortScores ScoreCohort(ScoringBackend &backend, const TrialList &trials,
                         const EmbeddingSet &rep, const Cohort &cohort,
                         EnrollMode mode = EnrollMode::kSetLikelihood);

inline constexpr int kDefaultTopN = 400;

struct TopStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Mean and 1/(n-1) standard deviation of the top_n highest scores. Every
/// score equal to the cutoff value is included, so `count` may exceed
/// top_n. top_n <= 0 means all scores.
TopStats TopNStats(const std::vector<double> &scores, int top_n);

/// s' = 1/2 [ (s - mu_e) / sigma_e + (s - mu_t) / sigma_t ].
ScoreSet AdaptiveSnorm(const ScoreSet &scores,
                       const std::map<std::string, std::vector<double>> &enroll,
                       const std::map<std::string, std::vector<double>> &test,
                       int top_n = kDefaultTopN);

struct ChannelStats {
  struct Entry {
    double mean = 0.0;
    double std = 1.0;
    std::size_t count = 0;
  };
  std::map<TrialType, Entry> types;

  nlohmann::ordered_json ToJson() const;
  static ChannelStats FromJson(const nlohmann::json &j);
  void Save(const std::string &path) const;
  static ChannelStats Load(const std::string &path);
};

/// Per trial-type mean and 1/(n-1) std of development scores.
ChannelStats FitChannelStats(const ScoreSet &dev);

/// s' = (s - mean_type) / std_type.
ScoreSet ChannelNorm(const ScoreSet &scores, const ChannelStats &stats);

}  // namespace svback

#endif  // SVBACK_SCORE_NORM_H_
