// src/score-norm.cc

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

#include "svback/score-norm.h"

#include <algorithm>
#include <cmath>
#include <functional>

#include "svback/json-util.h"

namespace svback {

Cohort BuildCohort(const EmbeddingSet &set) {
  auto groups = GroupByLabel(set, LabelKind::kSpeaker);
  if (groups.empty())
    throw DataError("cohort needs speaker labels; none are known");
  std::size_t unknown = set.Size();
  for (const auto &[spk, rows] : groups) unknown -= rows.size();
  if (unknown > 0)
    throw DataError(StrCat("cohort set has ", unknown,
                           " segments without a speaker label"));
  Cohort cohort;
  cohort.vectors.resize(static_cast<Eigen::Index>(groups.size()), set.Dim());
  Eigen::Index r = 0;
  for (const auto &[spk, rows] : groups) {
    Vector sum = Vector::Zero(set.Dim());
    for (std::size_t i : rows)
      sum += set.Vectors().row(static_cast<Eigen::Index>(i)).transpose();
    cohort.vectors.row(r++) = sum.transpose() / static_cast<double>(rows.size());
    cohort.speaker_ids.push_back(spk);
  }
  return cohort;
}

CohortScores ScoreCohort(ScoringBackend &backend, const TrialList &trials,
                         const EmbeddingSet &rep, const Cohort &cohort,
                         EnrollMode mode) {
  if (cohort.Size() == 0) throw DataError("empty cohort");
  if (cohort.vectors.cols() != rep.Dim())
    throw DataError(StrCat("cohort dimension ", cohort.vectors.cols(),
                           " does not match embeddings ", rep.Dim()));
  PreparedTrials prepared = PrepareTrials(backend, trials, rep, mode);
  std::vector<Matrix> rows;
  rows.reserve(cohort.Size());
  for (Eigen::Index i = 0; i < cohort.vectors.rows(); ++i)
    rows.push_back(cohort.vectors.row(i));
  const std::size_t first = backend.AddSets(rows);
  const std::size_t m = cohort.Size();

  auto fill = [&](const std::map<std::string, std::size_t> &handles,
                  bool as_enroll) {
    std::vector<std::pair<std::string, std::size_t>> items(handles.begin(),
                                                            handles.end());
    std::vector<std::vector<double>> lists(items.size());
    ParallelFor(items.size(), 16, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        lists[i].resize(m);
        for (std::size_t c = 0; c < m; ++c)
          lists[i][c] = as_enroll ? backend.Score(items[i].second, first + c)
                                  : backend.Score(first + c, items[i].second);
      }
    });
    std::map<std::string, std::vector<double>> out;
    for (std::size_t i = 0; i < items.size(); ++i)
      out.emplace(items[i].first, std::move(lists[i]));
    return out;
  };
  CohortScores out;
  out.models = fill(prepared.models, true);
  out.tests = fill(prepared.tests, false);
  return out;
}

TopStats TopNStats(const std::vector<double> &scores, int top_n) {
  std::vector<double> sorted(scores);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  std::size_t n = sorted.size();
  if (top_n > 0 && static_cast<std::size_t>(top_n) < n) {
    n = static_cast<std::size_t>(top_n);
    const double cutoff = sorted[n - 1];
    while (n < sorted.size() && sorted[n] == cutoff) ++n;
  }
  TopStats st;
  st.count = n;
  if (n == 0) return st;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += sorted[i];
  st.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      ss += (sorted[i] - st.mean) * (sorted[i] - st.mean);
    st.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return st;
}

namespace {

using StatsCache = std::map<std::string, TopStats>;

const TopStats &LookupStats(const std::map<std::string, std::vector<double>> &lists,
                            const std::string &id, const char *side, int top_n,
                            StatsCache *cache, std::size_t *short_lists) {
  auto hit = cache->find(id);
  if (hit != cache->end()) return hit->second;
  auto it = lists.find(id);
  if (it == lists.end())
    throw DataError(StrCat("no cohort scores for ", side, " '", id, "'"));
  if (top_n > 0 && it->second.size() < static_cast<std::size_t>(top_n))
    ++*short_lists;
  return cache->emplace(id, TopNStats(it->second, top_n)).first->second;
}

}  // namespace

ScoreSet AdaptiveSnorm(const ScoreSet &scores,
                       const std::map<std::string, std::vector<double>> &enroll,
                       const std::map<std::string, std::vector<double>> &test,
                       int top_n) {
  StatsCache enroll_cache, test_cache;
  std::size_t short_lists = 0;
  ScoreSet out = scores;
  for (auto &e : out.entries) {
    const TopStats &se = LookupStats(enroll, e.model_id, "model", top_n,
                                     &enroll_cache, &short_lists);
    const TopStats &st = LookupStats(test, e.test_id, "test segment", top_n,
                                     &test_cache, &short_lists);
    if (!(se.std > 0.0) || !(st.std > 0.0))
      throw NumericalError(StrCat("zero cohort standard deviation for trial (",
                                  e.model_id, ", ", e.test_id, ")"));
    e.score = 0.5 * ((e.score - se.mean) / se.std + (e.score - st.mean) / st.std);
  }
  if (short_lists > 0)
    Warn(StrCat(short_lists, " cohort score lists are shorter than top_n=",
                top_n, "; all available scores were used"));
  out.provenance = StrCat(scores.provenance, "+snorm");
  return out;
}

nlohmann::ordered_json ChannelStats::ToJson() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &[type, e] : types)
    j[std::string(ToString(type))] = {
        {"mean", e.mean}, {"std", e.std}, {"count", e.count}};
  return j;
}

ChannelStats ChannelStats::FromJson(const nlohmann::json &j) {
  if (!j.is_object()) throw DataError("channel stats must be a JSON object");
  ChannelStats stats;
  try {
    for (const auto &[key, value] : j.items()) {
      TrialType type = ParseTrialType(key);
      if (type == TrialType::kUnknown)
        throw DataError(StrCat("unknown trial type '", key, "' in channel stats"));
      Entry e;
      e.mean = value.at("mean").get<double>();
      e.std = value.at("std").get<double>();
      e.count = value.value("count", std::size_t{0});
      if (!std::isfinite(e.mean) || !(e.std > 0.0) || !std::isfinite(e.std))
        throw DataError(StrCat("channel stats for '", key,
                               "' need finite mean and std > 0"));
      stats.types[type] = e;
    }
  } catch (const nlohmann::json::exception &ex) {
    throw DataError(StrCat("malformed channel stats: ", ex.what()));
  }
  return stats;
}

void ChannelStats::Save(const std::string &path) const {
  WriteJsonFile(ToJson(), path);
}

ChannelStats ChannelStats::Load(const std::string &path) {
  return FromJson(ReadJsonFile(path));
}

ChannelStats FitChannelStats(const ScoreSet &dev) {
  std::map<TrialType, std::vector<double>> by_type;
  for (const auto &e : dev.entries) {
    if (e.type == TrialType::kUnknown)
      throw DataError(StrCat("development trial (", e.model_id, ", ", e.test_id,
                             ") has no trial type"));
    by_type[e.type].push_back(e.score);
  }
  if (by_type.empty()) throw DataError("no development scores");
  ChannelStats stats;
  for (const auto &[type, v] : by_type) {
    if (v.size() < 2)
      throw DataError(StrCat("trial type ", ToString(type), " has ", v.size(),
                             " development score(s); need at least 2"));
    TopStats st = TopNStats(v, 0);
    if (!(st.std > 0.0))
      throw NumericalError(StrCat("trial type ", ToString(type),
                                  " has zero score variance"));
    stats.types[type] = {st.mean, st.std, v.size()};
  }
  return stats;
}

ScoreSet ChannelNorm(const ScoreSet &scores, const ChannelStats &stats) {
  ScoreSet out = scores;
  for (auto &e : out.entries) {
    auto it = stats.types.find(e.type);
    if (it == stats.types.end())
      throw DataError(StrCat("no channel stats for trial type ", ToString(e.type),
                             " of trial (", e.model_id, ", ", e.test_id, ")"));
    e.score = (e.score - it->second.mean) / it->second.std;
  }
  out.provenance = StrCat(scores.provenance, "+chnorm");
  return out;
}

}  // namespace svback
