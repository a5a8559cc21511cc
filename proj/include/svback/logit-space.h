// svback/logit-space.h

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

#ifndef SVBACK_LOGIT_SPACE_H_
#define SVBACK_LOGIT_SPACE_H_

#include <string>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"

namespace svback {

// Scoring with class-posterior logits l = K r (one dimension per training
// speaker of the extractor) only ever needs inner products of logits:
//
//   l_e^T l_t = r_e^T K^T K r_t = (M r_e)^T (M r_t)   whenever M^T M = K^T K,
//
// so the cosine of two logit vectors equals the cosine of the d-dimensional
// vectors M r. M is the upper Cholesky factor of K^T K.

/// Classification head K (num_speakers x dim).
class ClassifierHead {
 public:
  ClassifierHead() = default;
  explicit ClassifierHead(Matrix k, bool unit_rows = false);

  const Matrix &Weights() const { return k_; }
  bool UnitRows() const { return unit_rows_; }
  Eigen::Index NumSpeakers() const { return k_.rows(); }
  Eigen::Index Dim() const { return k_.cols(); }

  /// Raw float32 row-major matrix `<stem>.f32` with JSON sidecar
  /// `<stem>.json` {"n_speakers", "dim", "unit_rows"}.
  static ClassifierHead Load(const std::string &stem);
  void Save(const std::string &stem) const;

 private:
  Matrix k_;
  bool unit_rows_ = false;
};

enum class FactorMethod { kCholesky, kEigenSqrt };

/// Compact factor M (dim x dim) with M^T M = K^T K.
struct CompactFactor {
  Matrix m;
  FactorMethod method = FactorMethod::kCholesky;

  Eigen::Index Dim() const { return m.cols(); }

  nlohmann::ordered_json ToJson() const;
  static CompactFactor FromJson(const nlohmann::json &j);
  void Save(const std::string &path) const;
  static CompactFactor Load(const std::string &path);
};

/// Factorizes the Gram matrix G = K^T K. Uses the upper Cholesky factor when
/// G is positive definite, otherwise falls back to the eigen square root
/// Lambda^{1/2} V^T with eigenvalues below 1e-12 * max clamped to zero.
CompactFactor ComputeCompactFactor(const Matrix &gram);
CompactFactor ComputeCompactFactor(const ClassifierHead &head);

/// M r
Vector ProjectCompact(const CompactFactor &f, const Vector &r);
/// Applies M to every row.
Matrix ProjectCompactRows(const CompactFactor &f, const Matrix &rows);

/// a^T b / (|a| |b|); throws DataError on a zero-norm input.
double CosineScore(const Vector &a, const Vector &b);

/// Factor of the concatenated head K_f = [K1, K2] (num_speakers x (d1+d2)),
/// for fusing two extractors trained on the same speakers in the same order.
/// Weighted logit averaging w1 l1 + w2 l2 equals K_f applied to
/// FuseEmbedding(r1, r2, w1, w2), so the fused cosine is computed in d1+d2
/// dimensions. Speaker order cannot be verified from the heads; only the
/// speaker counts are checked.
CompactFactor FuseHeads(const ClassifierHead &h1, const ClassifierHead &h2);

/// [w1 r1; w2 r2]
Vector FuseEmbedding(const Vector &r1, const Vector &r2, double w1, double w2);
/// Row-wise FuseEmbedding of two embedding sets with identical ids.
EmbeddingSet FuseEmbeddingSets(const EmbeddingSet &s1, const EmbeddingSet &s2,
                               double w1, double w2);

/// Scores trials as cos(M e, M t), where e is the average of the raw
/// enrollment embeddings.
ScoreSet ScoreClTrials(const CompactFactor &f, const TrialList &trials,
                       const EmbeddingSet &raw);

}  // namespace svback

#endif  // SVBACK_LOGIT_SPACE_H_
