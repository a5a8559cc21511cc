// src/scoring.cc

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

#include "svback/scoring.h"

#include <algorithm>
#include <cmath>

namespace svback {

MixtureBackend::MixtureBackend(PldaMixture mixture)
    : mixture_(std::move(mixture)), single_(false) {}

MixtureBackend::MixtureBackend(const PldaModel &model)
    : mixture_(std::vector<MixtureComponent>{{"all", model}}), single_(true) {}

std::string MixtureBackend::Name() const {
  return single_ ? "plda"
                 : StrCat("mixture(", mixture_.NumComponents(), ")");
}

void MixtureBackend::GrowTables(int max_count) {
  if (tables_.empty()) tables_.resize(mixture_.NumComponents());
  for (std::size_t p = 0; p < tables_.size(); ++p) {
    const Vector &psi = mixture_.Components()[p].model.Psi();
    CountTable &t = tables_[p];
    for (int n = static_cast<int>(t.weight.size()); n <= max_count; ++n) {
      const double dn = n;
      t.weight.push_back(psi.array() / (1.0 + dn * psi.array()));
      double l = 0.0;
      for (Eigen::Index k = 0; k < psi.size(); ++k) l += std::log1p(dn * psi(k));
      t.log_term.push_back(l);
    }
  }
}

std::size_t MixtureBackend::AddSets(const std::vector<Matrix> &sets) {
  const std::size_t first = summaries_.size();
  const std::size_t k = mixture_.NumComponents();
  int max_count = 0;
  for (const auto &s : sets) {
    if (s.rows() < 1) throw DataError("cannot score an empty set");
    if (s.cols() != Dim())
      throw DataError(StrCat("backend expects dimension ", Dim(), ", got ",
                             s.cols()));
    max_count = std::max(max_count, static_cast<int>(s.rows()));
  }
  for (const auto &s : summaries_) max_count = std::max(max_count, s.count);
  // A trial joins two sets.
  GrowTables(2 * max_count);
  summaries_.resize(first + sets.size());
  ParallelFor(sets.size(), 256, [&](std::size_t begin, std::size_t end) {
    Vector joint(static_cast<Eigen::Index>(k));
    for (std::size_t i = begin; i < end; ++i) {
      Summary &sum = summaries_[first + i];
      sum.count = static_cast<int>(sets[i].rows());
      sum.sums.resize(k);
      sum.quad.resize(k);
      for (std::size_t p = 0; p < k; ++p) {
        const PldaModel &m = mixture_.Components()[p].model;
        PldaModel::SetStats st = m.Stats(sets[i]);
        joint(static_cast<Eigen::Index>(p)) =
            std::log(mixture_.Prior()(static_cast<Eigen::Index>(p))) +
            m.MarginalLogLikelihood(st);
        sum.quad[p] =
            tables_[p].weight[static_cast<std::size_t>(sum.count)].dot(
                st.sum.cwiseAbs2());
        sum.sums[p] = std::move(st.sum);
      }
      sum.posterior = PosteriorFromLog(joint);
    }
  });
  return first;
}

double MixtureBackend::Score(std::size_t enroll, std::size_t test) const {
  const Summary &e = summaries_[enroll];
  const Summary &t = summaries_[test];
  const std::size_t ne = static_cast<std::size_t>(e.count);
  const std::size_t nt = static_cast<std::size_t>(t.count);
  double score = 0.0;
  for (std::size_t p = 0; p < e.sums.size(); ++p) {
    const Eigen::Index pi = static_cast<Eigen::Index>(p);
    const CountTable &tab = tables_[p];
    const double joint_quad =
        tab.weight[ne + nt].dot((e.sums[p] + t.sums[p]).cwiseAbs2());
    const double llr =
        -0.5 * (tab.log_term[ne + nt] - tab.log_term[ne] - tab.log_term[nt] -
                joint_quad + e.quad[p] + t.quad[p]);
    const double w = 0.5 * (e.posterior(pi) + t.posterior(pi));
    score += w * llr;
  }
  return score;
}

std::size_t CosineBackend::AddSets(const std::vector<Matrix> &sets) {
  const std::size_t first = unit_.size();
  for (const auto &s : sets) {
    if (s.rows() < 1) throw DataError("cannot score an empty set");
    if (s.cols() != dim_)
      throw DataError(StrCat("backend expects dimension ", dim_, ", got ",
                             s.cols()));
    Vector mean = s.colwise().mean().transpose();
    double norm = mean.norm();
    if (!(norm > 0.0)) throw DataError("zero-norm embedding in cosine scoring");
    unit_.push_back(mean / norm);
  }
  return first;
}

double CosineBackend::Score(std::size_t enroll, std::size_t test) const {
  return unit_[enroll].dot(unit_[test]);
}

PreparedTrials PrepareTrials(ScoringBackend &backend, const TrialList &trials,
                             const EmbeddingSet &rep, EnrollMode mode) {
  PreparedTrials prepared;
  std::vector<Matrix> sets;
  std::vector<std::string> model_ids, test_ids;
  std::map<std::string, bool> used_models;
  for (const auto &t : trials.trials) {
    used_models[t.model_id] = true;
    if (!prepared.tests.count(t.test_id)) {
      prepared.tests[t.test_id] = 0;
      test_ids.push_back(t.test_id);
    }
  }
  for (const auto &[model, unused] : used_models) {
    auto it = trials.models.find(model);
    if (it == trials.models.end())
      throw DataError(StrCat("trial references unknown model '", model, "'"));
    Matrix rows(static_cast<Eigen::Index>(it->second.size()), rep.Dim());
    for (std::size_t i = 0; i < it->second.size(); ++i)
      rows.row(static_cast<Eigen::Index>(i)) =
          rep.Vectors().row(static_cast<Eigen::Index>(rep.IndexOf(it->second[i])));
    if (mode == EnrollMode::kAverage && rows.rows() > 1)
      rows = rows.colwise().mean().eval();
    sets.push_back(std::move(rows));
    model_ids.push_back(model);
  }
  for (const auto &id : test_ids)
    sets.push_back(rep.Vectors().row(static_cast<Eigen::Index>(rep.IndexOf(id))));
  std::size_t first = backend.AddSets(sets);
  for (std::size_t i = 0; i < model_ids.size(); ++i)
    prepared.models[model_ids[i]] = first + i;
  for (std::size_t i = 0; i < test_ids.size(); ++i)
    prepared.tests[test_ids[i]] = first + model_ids.size() + i;
  return prepared;
}

ScoreSet ScorePrepared(const ScoringBackend &backend, const TrialList &trials,
                       const PreparedTrials &prepared, const EmbeddingSet &rep,
                       std::string provenance) {
  ScoreSet out;
  out.provenance = std::move(provenance);
  const std::size_t n = trials.trials.size();
  std::vector<std::size_t> model_handle(n), test_handle(n);
  out.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Trial &t = trials.trials[i];
    model_handle[i] = prepared.models.at(t.model_id);
    test_handle[i] = prepared.tests.at(t.test_id);
    ScoreEntry &e = out.entries[i];
    e.model_id = t.model_id;
    e.test_id = t.test_id;
    e.key = t.key;
    e.type = ResolveTrialType(t, trials, rep);
  }
  ParallelFor(n, kScoreBlock, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out.entries[i].score = backend.Score(model_handle[i], test_handle[i]);
  });
  for (const auto &e : out.entries)
    if (!std::isfinite(e.score))
      throw NumericalError(StrCat("non-finite score for trial (", e.model_id,
                                  ", ", e.test_id, ")"));
  return out;
}

ScoreSet ScoreTrials(ScoringBackend &backend, const TrialList &trials,
                     const EmbeddingSet &rep, EnrollMode mode,
                     std::string provenance) {
  PreparedTrials prepared = PrepareTrials(backend, trials, rep, mode);
  if (provenance.empty()) provenance = backend.Name();
  return ScorePrepared(backend, trials, prepared, rep, std::move(provenance));
}

}  // namespace svback
