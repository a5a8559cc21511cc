// svback/plda.h

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

#ifndef SVBACK_PLDA_H_
#define SVBACK_PLDA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"

namespace svback {

/**
   Two-covariance PLDA:  r = mu + y + e,  y ~ N(0, B),  e ~ N(0, W).

   All sessions of one speaker share y. Internally the model is kept in the
   basis where W becomes the identity and B becomes diagonal (psi):

     u = T (r - mu),  T = V^T L^{-1},  W = L L^T,  L^{-1} B L^{-T} = V psi V^T.

   In that basis the dimensions are independent and the marginal likelihood
   of a set of n sessions depends only on n, the per-dimension sums S_k and
   the total sum of squares Q:

     log p(R) = -1/2 [ n d log(2 pi) + n log|W|
                       + sum_k ( log(1 + n psi_k) - psi_k S_k^2 / (1 + n psi_k) )
                       + Q ].

   This is exact for singular B (psi_k = 0), and no near-singular matrix is
   ever inverted.
*/
class PldaModel {
 public:
  /// Sufficient statistics of a set of sessions in the model basis.
  struct SetStats {
    int count = 0;
    Vector sum;          // sum of projected sessions
    double sum_sq = 0.0; // sum of squared norms of projected sessions
  };

  PldaModel() = default;
  /// Validates (symmetry within 1e-10, W positive definite, B PSD) and
  /// precomputes the diagonalizing transform.
  PldaModel(Vector mean, Matrix between, Matrix within);

  Eigen::Index Dim() const { return mean_.size(); }
  const Vector &Mean() const { return mean_; }
  const Matrix &Between() const { return between_; }
  const Matrix &Within() const { return within_; }
  const Vector &Psi() const { return psi_; }
  const Matrix &Transform() const { return transform_; }
  /// T^{-1} = L V, maps model-basis vectors back to embedding space.
  const Matrix &InverseTransform() const { return inverse_transform_; }
  double LogDetWithin() const { return log_det_within_; }

  /// Projects rows into the model basis.
  Matrix ProjectRows(const Matrix &rows) const;
  SetStats Stats(const Matrix &rows) const;
  /// Stats of already-projected rows.
  static SetStats StatsFromProjected(const Matrix &projected);

  double MarginalLogLikelihood(const SetStats &stats) const;
  /// Log joint density of the rows of `rows` with the shared latent
  /// integrated out.
  double MarginalLogLikelihood(const Matrix &rows) const;

  /// log p(E u {t} | same) - log p(E) - log p(t), from stats.
  double LogLikelihoodRatio(const SetStats &enroll, const SetStats &test) const;
  double LogLikelihoodRatio(const Matrix &enroll, const Vector &test) const;

  // Training metadata, carried through serialization.
  int subspace_rank = 0;  // 0 = full rank
  int iterations_run = 0;
  double final_loglik = 0.0;

  nlohmann::ordered_json ToJson() const;
  static PldaModel FromJson(const nlohmann::json &j);
  void Save(const std::string &path) const;
  static PldaModel Load(const std::string &path);

 private:
  void CheckDim(Eigen::Index d) const;

  Vector mean_;
  Matrix between_;
  Matrix within_;
  Matrix transform_;  // T
  Matrix inverse_transform_;
  Vector psi_;
  double log_det_within_ = 0.0;
};

struct TrainOptions {
  int iterations = 50;
  int subspace_rank = 0;  // 0 = full
  std::uint64_t seed = 0;
  double tol = 1e-7;      // relative log-likelihood change for early stop
};

struct TrainResult {
  PldaModel model;
  /// Training-set log-likelihood of the initial model and after every
  /// EM iteration.
  std::vector<double> loglik;
};

/// EM training on speaker-labelled embeddings. Segments with an unknown
/// speaker are ignored.
TrainResult TrainPlda(const EmbeddingSet &set, const TrainOptions &opts);

}  // namespace svback

#endif  // SVBACK_PLDA_H_
