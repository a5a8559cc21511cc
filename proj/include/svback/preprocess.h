// svback/preprocess.h

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

#ifndef SVBACK_PREPROCESS_H_
#define SVBACK_PREPROCESS_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"

namespace svback {

enum class TransformKind { kCenter, kProjectOut, kLinearMap, kLengthNorm };

/// One affine, projection or normalization step. Immutable once built.
class Transform {
 public:
  /// x -> x - mean
  static Transform Center(Vector mean);
  /// x -> (I - U U^T) x; U (d x k) must have orthonormal columns.
  static Transform ProjectOut(Matrix basis);
  /// x -> A x, A is out x in.
  static Transform LinearMap(Matrix a);
  /// x -> x / |x|
  static Transform LengthNorm(Eigen::Index dim);

  TransformKind Kind() const { return kind_; }
  Eigen::Index InDim() const { return in_dim_; }
  Eigen::Index OutDim() const { return out_dim_; }
  const Vector &Mean() const { return mean_; }
  const Matrix &Basis() const { return matrix_; }
  const Matrix &Map() const { return matrix_; }

  /// Free-form tag recorded in the serialized chain (e.g. "nap:gender:1").
  const std::string &Tag() const { return tag_; }
  Transform &SetTag(std::string tag) {
    tag_ = std::move(tag);
    return *this;
  }

  Vector Apply(const Vector &x) const;
  /// Applies to every row of `rows`.
  Matrix ApplyRows(const Matrix &rows) const;

  nlohmann::ordered_json ToJson() const;
  static Transform FromJson(const nlohmann::json &j);

 private:
  TransformKind kind_ = TransformKind::kLengthNorm;
  Eigen::Index in_dim_ = 0;
  Eigen::Index out_dim_ = 0;
  Vector mean_;
  Matrix matrix_;
  std::string tag_;
};

class PreprocessChain {
 public:
  PreprocessChain() = default;
  explicit PreprocessChain(std::vector<Transform> steps);

  void Append(Transform t);
  const std::vector<Transform> &Steps() const { return steps_; }
  bool Empty() const { return steps_.empty(); }
  /// Input dimension, or -1 for an empty chain.
  Eigen::Index InDim() const;
  Eigen::Index OutDim(Eigen::Index in_dim) const;

  Vector Apply(const Vector &x) const;
  Matrix ApplyRows(const Matrix &rows) const;

  nlohmann::ordered_json ToJson() const;
  static PreprocessChain FromJson(const nlohmann::json &j);
  void Save(const std::string &path) const;
  static PreprocessChain Load(const std::string &path);

 private:
  std::vector<Transform> steps_;
};

Transform EstimateCenter(const EmbeddingSet &set);

/// Nuisance attribute projection: removes the k leading directions of the
/// covariance of label-class means (classes weighted equally). Segments
/// whose label is "unk" do not take part in the fit.
Transform FitNap(const EmbeddingSet &set, LabelKind label, int k);

/// Rows of the result are the leading eigenvectors of the total covariance.
Transform FitPca(const EmbeddingSet &set, int out_dim);

/// Projects out the k leading total-covariance eigenvectors.
Transform RemoveTopPca(const EmbeddingSet &set, int k);

/// Fisher LDA. Rows are scaled so that the projected within-speaker
/// covariance is the identity. Speakers with a single segment are dropped.
Transform FitLda(const EmbeddingSet &set, int out_dim);

/// Unit-norm copy of x; throws DataError("zero-norm embedding") for 0.
Vector LengthNormalize(const Vector &x);

EmbeddingSet ApplyChain(const PreprocessChain &chain, const EmbeddingSet &set);

struct CovarianceSpectra {
  Vector total_eigs;   // ascending
  Vector within_diag;  // within-speaker covariance diagonal, same basis
  Vector across_diag;  // across-speaker covariance diagonal, same basis
};

/// Rotates the data onto the total-covariance eigenvectors and reports the
/// diagonals of the within- and across-speaker covariances there. Segments
/// are weighted equally, so within + across == total.
CovarianceSpectra ComputeCovarianceSpectra(const EmbeddingSet &set);

/// One step of a chain recipe such as "nap:gender:1,center,lda:100,ln".
struct RecipeStep {
  enum class Op { kNap, kPcaRemove, kPca, kCenter, kLda, kLengthNorm };
  Op op = Op::kCenter;
  LabelKind label = LabelKind::kGender;  // kNap only
  int value = 0;                         // k or out_dim; 0 = default
  std::string token;
};

/// Parses a comma-separated recipe. Tokens: nap:<gender|language|dataset>[:k],
/// pca-remove[:k], pca:<out_dim>, center, lda[:out_dim], ln. Steps must follow
/// the order nuisance removal -> center -> lda -> ln. Throws UsageError.
std::vector<RecipeStep> ParseRecipe(const std::string &recipe);

/// Fits each step on the output of the previous ones. `chain` may already
/// hold fixed leading steps (they are applied, not refitted).
PreprocessChain FitChain(const std::vector<RecipeStep> &recipe,
                         const EmbeddingSet &train,
                         PreprocessChain chain = {});

}  // namespace svback

#endif  // SVBACK_PREPROCESS_H_
