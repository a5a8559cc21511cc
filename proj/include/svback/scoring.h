// svback/scoring.h

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

#ifndef SVBACK_SCORING_H_
#define SVBACK_SCORING_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "svback/common.h"
#include "svback/data-model.h"
#include "svback/mixture.h"
#include "svback/plda.h"

namespace svback {

/// How multi-session enrollment is turned into a model.
enum class EnrollMode {
  kSetLikelihood,  // shared-latent set likelihood (PLDA) / mean (cosine)
  kAverage,        // average the enrollment vectors first
};

/// Backend that scores (enrollment set, test set) pairs. Sets are
/// summarized once by AddSets; Score is then const and thread-safe.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;
  virtual Eigen::Index Dim() const = 0;
  virtual std::string Name() const = 0;
  /// Summarizes each set (rows = session vectors). Returns the handle of the
  /// first new set; the others follow consecutively.
  virtual std::size_t AddSets(const std::vector<Matrix> &sets) = 0;
  virtual std::size_t NumSets() const = 0;
  virtual double Score(std::size_t enroll, std::size_t test) const = 0;
};

/// Weighted-average mixture scoring. A plain PLDA model is a one-component
/// mixture and goes through exactly the same arithmetic.
///
/// The count-dependent parts of the LLR (log1p terms and the per-dimension
/// weights psi / (1 + n psi)) are tabulated once per session count, so a
/// trial costs two weighted dot products per component.
class MixtureBackend : public ScoringBackend {
 public:
  explicit MixtureBackend(PldaMixture mixture);
  explicit MixtureBackend(const PldaModel &model);

  Eigen::Index Dim() const override { return mixture_.Dim(); }
  std::string Name() const override;
  std::size_t AddSets(const std::vector<Matrix> &sets) override;
  std::size_t NumSets() const override { return summaries_.size(); }
  double Score(std::size_t enroll, std::size_t test) const override;

  const PldaMixture &Mixture() const { return mixture_; }
  /// Component posterior of a summarized set.
  const Vector &Posterior(std::size_t handle) const {
    return summaries_.at(handle).posterior;
  }

 private:
  struct Summary {
    int count = 0;
    std::vector<Vector> sums;    // per component, model basis
    std::vector<double> quad;    // per component, sum_k a_k(count) S_k^2
    Vector posterior;
  };
  // Per component and session count n: a(n) = psi / (1 + n psi) and
  // sum_k log1p(n psi_k).
  struct CountTable {
    std::vector<Vector> weight;
    std::vector<double> log_term;
  };
  void GrowTables(int max_count);

  PldaMixture mixture_;
  std::vector<Summary> summaries_;
  std::vector<CountTable> tables_;
  bool single_;
};

/// Cosine similarity between set means.
class CosineBackend : public ScoringBackend {
 public:
  explicit CosineBackend(Eigen::Index dim) : dim_(dim) {}
  Eigen::Index Dim() const override { return dim_; }
  std::string Name() const override { return "cosine"; }
  std::size_t AddSets(const std::vector<Matrix> &sets) override;
  std::size_t NumSets() const override { return unit_.size(); }
  double Score(std::size_t enroll, std::size_t test) const override;

 private:
  Eigen::Index dim_;
  std::vector<Vector> unit_;
};

/// Backend handles for the models and test segments of a trial list.
struct PreparedTrials {
  std::map<std::string, std::size_t> models;
  std::map<std::string, std::size_t> tests;
};

/// Summarizes every model (from its enrollment segments) and every test
/// segment of `trials`, with vectors taken from `rep`.
PreparedTrials PrepareTrials(ScoringBackend &backend, const TrialList &trials,
                             const EmbeddingSet &rep, EnrollMode mode);

/// Block size used when streaming trial scoring.
inline constexpr std::size_t kScoreBlock = 65536;

/// Scores all trials in file order; keys are copied and trial types resolved
/// from `rep` metadata when the trial has none.
ScoreSet ScoreTrials(ScoringBackend &backend, const TrialList &trials,
                     const EmbeddingSet &rep,
                     EnrollMode mode = EnrollMode::kSetLikelihood,
                     std::string provenance = "");

/// Same, with already prepared handles.
ScoreSet ScorePrepared(const ScoringBackend &backend, const TrialList &trials,
                       const PreparedTrials &prepared, const EmbeddingSet &rep,
                       std::string provenance);

}  // namespace svback

#endif  // SVBACK_SCORING_H_
