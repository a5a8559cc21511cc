// svback/mixture.h

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

#ifndef SVBACK_MIXTURE_H_
#define SVBACK_MIXTURE_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "svback/plda.h"

namespace svback {

struct MixtureComponent {
  std::string language;
  PldaModel model;
};

/**
   Language-dependent PLDA mixture. A trial is scored by every component and
   the scores are averaged with weights

     w_p = 1/2 (P(p | R_e) + P(p | R_t)),

   where P(p | R) is the posterior of component p given the set R (prior
   times the set marginal likelihood, normalized over components in the log
   domain). The weights sum to one, so the score is a convex combination of
   the component LLRs.
*/
class PldaMixture {
 public:
  PldaMixture() = default;
  /// Uniform prior when `prior` is empty.
  explicit PldaMixture(std::vector<MixtureComponent> components,
                       Vector prior = Vector());

  std::size_t NumComponents() const { return components_.size(); }
  const std::vector<MixtureComponent> &Components() const { return components_; }
  const Vector &Prior() const { return prior_; }
  Eigen::Index Dim() const { return components_.front().model.Dim(); }

  /// log prior_p + log p(R | M_p) per component.
  Vector JointLogLikelihoods(const Matrix &set) const;
  /// Posterior over components given the set; throws NumericalError when
  /// every component likelihood underflows.
  Vector LanguageWeights(const Matrix &set) const;
  /// Per-component LLRs of a trial.
  Vector ComponentScores(const Matrix &enroll, const Vector &test) const;
  /// Trial weights 1/2 (P(p|R_e) + P(p|R_t)).
  Vector TrialWeights(const Matrix &enroll, const Vector &test) const;
  double Score(const Matrix &enroll, const Vector &test) const;

  nlohmann::ordered_json ToJson() const;
  static PldaMixture FromJson(const nlohmann::json &j);
  void Save(const std::string &path) const;
  static PldaMixture Load(const std::string &path);

 private:
  std::vector<MixtureComponent> components_;
  Vector prior_;
  Vector log_prior_;
};

/// Normalizes log-domain values to probabilities (log-sum-exp).
Vector PosteriorFromLog(const Vector &log_values);

/// Trains one PLDA per language, each on that language's segments only.
PldaMixture TrainMixture(const EmbeddingSet &set,
                         const std::vector<std::string> &languages,
                         const TrainOptions &opts);

}  // namespace svback

#endif  // SVBACK_MIXTURE_H_
