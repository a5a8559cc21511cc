// src/preprocess.cc

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

#include "svback/preprocess.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "svback/json-util.h"

namespace svback {

namespace {

// Relative eigenvalue floor below which a direction counts as rank-deficient.
constexpr double kRankTolerance = 1e-10;
// Within-class regularization: lambda * trace(W) / d * I.
constexpr double kRegularization = 1e-6;

int NumericalRank(const Vector &descending_eigs) {
  if (descending_eigs.size() == 0 || descending_eigs(0) <= 0.0) return 0;
  const double floor = kRankTolerance * descending_eigs(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < descending_eigs.size(); ++i)
    rank += descending_eigs(i) > floor;
  return rank;
}

std::string_view KindName(TransformKind k) {
  switch (k) {
    case TransformKind::kCenter: return "center";
    case TransformKind::kProjectOut: return "project_out";
    case TransformKind::kLinearMap: return "linear_map";
    default: return "length_norm";
  }
}

SortedEigen TotalCovarianceEigen(const EmbeddingSet &set) {
  if (set.Size() < 2)
    throw DataError("need at least 2 segments to estimate a covariance");
  return SymmetricEigenDescending(Covariance(set.Vectors()));
}

}  // namespace

Transform Transform::Center(Vector mean) {
  Transform t;
  t.kind_ = TransformKind::kCenter;
  t.in_dim_ = t.out_dim_ = mean.size();
  t.mean_ = std::move(mean);
  if (!t.mean_.allFinite()) throw DataError("non-finite center");
  return t;
}

Transform Transform::ProjectOut(Matrix basis) {
  const Eigen::Index k = basis.cols();
  if (k < 1 || k >= basis.rows())
    throw UsageError(StrCat("projection basis must have 1 <= k < d, got k=", k,
                            " d=", basis.rows()));
  Matrix gram = basis.transpose() * basis;
  if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10)
    throw NumericalError("projection basis is not orthonormal");
  Transform t;
  t.kind_ = TransformKind::kProjectOut;
  t.in_dim_ = t.out_dim_ = basis.rows();
  t.matrix_ = std::move(basis);
  return t;
}

Transform Transform::LinearMap(Matrix a) {
  if (a.rows() < 1 || a.cols() < 1) throw UsageError("empty linear map");
  if (!a.allFinite()) throw DataError("non-finite linear map");
  Transform t;
  t.kind_ = TransformKind::kLinearMap;
  t.in_dim_ = a.cols();
  t.out_dim_ = a.rows();
  t.matrix_ = std::move(a);
  return t;
}

Transform Transform::LengthNorm(Eigen::Index dim) {
  Transform t;
  t.kind_ = TransformKind::kLengthNorm;
  t.in_dim_ = t.out_dim_ = dim;
  return t;
}

Vector Transform::Apply(const Vector &x) const {
  if (x.size() != in_dim_)
    throw DataError(StrCat(KindName(kind_), ": dimension mismatch (", x.size(),
                           " vs ", in_dim_, ")"));
  switch (kind_) {
    case TransformKind::kCenter: return x - mean_;
    case TransformKind::kProjectOut:
      return x - matrix_ * (matrix_.transpose() * x);
    case TransformKind::kLinearMap: return matrix_ * x;
    default: return LengthNormalize(x);
  }
}

Matrix Transform::ApplyRows(const Matrix &rows) const {
  if (rows.cols() != in_dim_)
    throw DataError(StrCat(KindName(kind_), ": dimension mismatch (",
                           rows.cols(), " vs ", in_dim_, ")"));
  switch (kind_) {
    case TransformKind::kCenter: return rows.rowwise() - mean_.transpose();
    case TransformKind::kProjectOut:
      return rows - (rows * matrix_) * matrix_.transpose();
    case TransformKind::kLinearMap: return rows * matrix_.transpose();
    default: {
      Vector norms = rows.rowwise().norm();
      for (Eigen::Index i = 0; i < norms.size(); ++i)
        if (!(norms(i) > 0.0)) throw DataError("zero-norm embedding");
      return norms.cwiseInverse().asDiagonal() * rows;
    }
  }
}

nlohmann::ordered_json Transform::ToJson() const {
  nlohmann::ordered_json j;
  j["kind"] = KindName(kind_);
  if (!tag_.empty()) j["tag"] = tag_;
  j["in_dim"] = in_dim_;
  j["out_dim"] = out_dim_;
  switch (kind_) {
    case TransformKind::kCenter: j["mean"] = VectorToJson(mean_); break;
    case TransformKind::kProjectOut:
      j["k"] = matrix_.cols();
      j["basis"] = MatrixToJson(matrix_);
      break;
    case TransformKind::kLinearMap: j["matrix"] = MatrixToJson(matrix_); break;
    default: break;
  }
  return j;
}

Transform Transform::FromJson(const nlohmann::json &j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const Eigen::Index in = j.at("in_dim").get<Eigen::Index>();
    const Eigen::Index out = j.at("out_dim").get<Eigen::Index>();
    Transform t;
    if (kind == "center") {
      t = Center(VectorFromJson(j.at("mean"), "center.mean"));
    } else if (kind == "project_out") {
      Eigen::Index k = j.at("k").get<Eigen::Index>();
      t = ProjectOut(MatrixFromJson(j.at("basis"), in, k, "project_out.basis"));
    } else if (kind == "linear_map") {
      t = LinearMap(MatrixFromJson(j.at("matrix"), out, in, "linear_map.matrix"));
    } else if (kind == "length_norm") {
      t = LengthNorm(in);
    } else {
      throw DataError(StrCat("unknown transform kind '", kind, "'"));
    }
    if (t.InDim() != in || t.OutDim() != out)
      throw DataError(StrCat(kind, ": declared dims do not match parameters"));
    if (j.contains("tag")) t.SetTag(j.at("tag").get<std::string>());
    return t;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed transform: ", e.what()));
  }
}

PreprocessChain::PreprocessChain(std::vector<Transform> steps) {
  for (auto &s : steps) Append(std::move(s));
}

void PreprocessChain::Append(Transform t) {
  if (!steps_.empty() && steps_.back().OutDim() != t.InDim())
    throw DataError(StrCat("chain dimension mismatch: step ", steps_.size(),
                           " outputs ", steps_.back().OutDim(),
                           " but next step expects ", t.InDim()));
  steps_.push_back(std::move(t));
}

Eigen::Index PreprocessChain::InDim() const {
  return steps_.empty() ? -1 : steps_.front().InDim();
}

Eigen::Index PreprocessChain::OutDim(Eigen::Index in_dim) const {
  return steps_.empty() ? in_dim : steps_.back().OutDim();
}

Vector PreprocessChain::Apply(const Vector &x) const {
  Vector y = x;
  for (const auto &s : steps_) y = s.Apply(y);
  return y;
}

Matrix PreprocessChain::ApplyRows(const Matrix &rows) const {
  Matrix y = rows;
  for (const auto &s : steps_) y = s.ApplyRows(y);
  return y;
}

nlohmann::ordered_json PreprocessChain::ToJson() const {
  nlohmann::ordered_json j;
  j["type"] = "preprocess_chain";
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto &s : steps_) j["steps"].push_back(s.ToJson());
  return j;
}

PreprocessChain PreprocessChain::FromJson(const nlohmann::json &j) {
  if (j.value("type", "") != "preprocess_chain" || !j.contains("steps"))
    throw DataError("not a preprocess chain document");
  PreprocessChain chain;
  for (const auto &s : j.at("steps")) chain.Append(Transform::FromJson(s));
  return chain;
}

void PreprocessChain::Save(const std::string &path) const {
  WriteJsonFile(ToJson(), path);
}

PreprocessChain PreprocessChain::Load(const std::string &path) {
  return FromJson(ReadJsonFile(path));
}

Transform EstimateCenter(const EmbeddingSet &set) {
  if (set.Size() == 0) throw DataError("cannot center an empty set");
  return Transform::Center(ColumnMean(set.Vectors()));
}

Transform FitNap(const EmbeddingSet &set, LabelKind label, int k) {
  const Eigen::Index d = set.Dim();
  if (k < 1 || k >= d)
    throw UsageError(StrCat("NAP needs 1 <= k < d, got k=", k, " d=", d));
  auto groups = GroupByLabel(set, label);
  if (groups.size() < 2)
    throw DataError(StrCat("NAP on ", ToString(label), " needs at least 2 ",
                           "label classes, found ", groups.size()));
  Matrix means(static_cast<Eigen::Index>(groups.size()), d);
  Eigen::Index row = 0;
  for (const auto &[name, idx] : groups) {
    Vector sum = Vector::Zero(d);
    for (std::size_t i : idx)
      sum += set.Vectors().row(static_cast<Eigen::Index>(i)).transpose();
    means.row(row++) = (sum / static_cast<double>(idx.size())).transpose();
  }
  if (static_cast<std::size_t>(k) >= groups.size())
    Warn(StrCat("NAP k=", k, " exceeds the rank of ", groups.size(),
                " class means; extra directions are arbitrary"));
  SortedEigen eig = SymmetricEigenDescending(Covariance(means));
  return Transform::ProjectOut(eig.vectors.leftCols(k))
      .SetTag(StrCat("nap:", ToString(label), ":", k));
}

Transform FitPca(const EmbeddingSet &set, int out_dim) {
  const Eigen::Index n = static_cast<Eigen::Index>(set.Size());
  const Eigen::Index limit = std::min(n - 1, set.Dim());
  if (out_dim < 1 || out_dim > limit)
    throw UsageError(StrCat("PCA out_dim must be in [1, ", limit, "], got ",
                            out_dim));
  SortedEigen eig = TotalCovarianceEigen(set);
  int rank = NumericalRank(eig.values);
  if (rank < out_dim)
    throw NumericalError(StrCat("covariance is rank-deficient: achievable "
                                "rank is ",
                                rank, " < requested ", out_dim));
  return Transform::LinearMap(eig.vectors.leftCols(out_dim).transpose())
      .SetTag(StrCat("pca:", out_dim));
}

Transform RemoveTopPca(const EmbeddingSet &set, int k) {
  if (k < 1 || k >= set.Dim())
    throw UsageError(StrCat("PCA removal needs 1 <= k < d, got k=", k));
  const Eigen::Index limit = static_cast<Eigen::Index>(set.Size()) - 1;
  if (k > limit)
    throw UsageError(StrCat("PCA removal of ", k, " directions needs more than ",
                            k, " segments"));
  SortedEigen eig = TotalCovarianceEigen(set);
  int rank = NumericalRank(eig.values);
  if (rank < k)
    throw NumericalError(StrCat("covariance is rank-deficient: achievable "
                                "rank is ",
                                rank, " < requested ", k));
  return Transform::ProjectOut(eig.vectors.leftCols(k))
      .SetTag(StrCat("pca-remove:", k));
}

Transform FitLda(const EmbeddingSet &set, int out_dim) {
  const Eigen::Index d = set.Dim();
  if (out_dim < 1 || out_dim > d)
    throw UsageError(StrCat("LDA out_dim must be in [1, ", d, "], got ",
                            out_dim));
  auto groups = GroupByLabel(set, LabelKind::kSpeaker);
  std::size_t dropped = 0;
  for (auto it = groups.begin(); it != groups.end();) {
    if (it->second.size() < 2) {
      ++dropped;
      it = groups.erase(it);
    } else {
      ++it;
    }
  }
  if (dropped > 0)
    Warn(StrCat("LDA: dropped ", dropped, " speakers with a single segment"));
  if (groups.size() <= static_cast<std::size_t>(out_dim))
    throw DataError(StrCat("LDA to ", out_dim, " dims needs more than ",
                           out_dim, " speakers with >= 2 segments, found ",
                           groups.size()));

  std::size_t total = 0;
  Vector global = Vector::Zero(d);
  for (const auto &[spk, idx] : groups)
    for (std::size_t i : idx) {
      global += set.Vectors().row(static_cast<Eigen::Index>(i)).transpose();
      ++total;
    }
  global /= static_cast<double>(total);

  Matrix within = Matrix::Zero(d, d), between = Matrix::Zero(d, d);
  for (const auto &[spk, idx] : groups) {
    Matrix x(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t r = 0; r < idx.size(); ++r)
      x.row(static_cast<Eigen::Index>(r)) =
          set.Vectors().row(static_cast<Eigen::Index>(idx[r]));
    Vector mean = ColumnMean(x);
    Matrix centered = x.rowwise() - mean.transpose();
    within += centered.transpose() * centered;
    Vector diff = mean - global;
    between += static_cast<double>(idx.size()) * diff * diff.transpose();
  }
  within /= static_cast<double>(total);
  between /= static_cast<double>(total);

  SortedEigen w_eig = SymmetricEigenDescending(within);
  if (w_eig.values(d - 1) < kRankTolerance * w_eig.values(0) ||
      w_eig.values(0) <= 0.0) {
    double shift = kRegularization * within.trace() / static_cast<double>(d);
    if (!(shift > 0.0))
      throw NumericalError("LDA: within-speaker covariance is zero");
    Warn(StrCat("LDA: within-speaker covariance is rank-deficient (expected after a nuisance projection); adding ",
                shift, " * I"));
    within += shift * Matrix::Identity(d, d);
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(between, within);
  if (ges.info() != Eigen::Success)
    throw NumericalError("LDA: generalized eigenproblem failed");
  // Eigen sorts ascending; vectors are normalized so that V^T W V = I.
  Vector gen_eigs = ges.eigenvalues().reverse();
  int rank = NumericalRank(gen_eigs);
  if (out_dim > rank)
    throw DataError(StrCat("LDA out_dim ", out_dim,
                           " exceeds the between-speaker rank ", rank));
  Matrix a(out_dim, d);
  for (int i = 0; i < out_dim; ++i) {
    Vector v = ges.eigenvectors().col(d - 1 - i);
    FixSign(v);
    a.row(i) = v.transpose();
  }
  return Transform::LinearMap(std::move(a)).SetTag(StrCat("lda:", out_dim));
}

Vector LengthNormalize(const Vector &x) {
  double norm = x.norm();
  if (!(norm > 0.0)) throw DataError("zero-norm embedding");
  return x / norm;
}

EmbeddingSet ApplyChain(const PreprocessChain &chain, const EmbeddingSet &set) {
  if (chain.Empty()) return set;
  if (set.Dim() != chain.InDim())
    throw DataError(StrCat("chain expects dimension ", chain.InDim(),
                           ", embeddings have ", set.Dim()));
  return set.WithVectors(chain.ApplyRows(set.Vectors()));
}

CovarianceSpectra ComputeCovarianceSpectra(const EmbeddingSet &set) {
  const Eigen::Index d = set.Dim();
  auto groups = GroupByLabel(set, LabelKind::kSpeaker);
  std::size_t multi = 0;
  std::size_t total = 0;
  for (const auto &[spk, idx] : groups) {
    multi += idx.size() >= 2;
    total += idx.size();
  }
  if (multi < 2)
    throw DataError("covariance spectra need at least 2 speakers with >= 2 "
                    "segments (speaker labels missing?)");

  Matrix x(static_cast<Eigen::Index>(total), d);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges;
  Eigen::Index row = 0;
  for (const auto &[spk, idx] : groups) {
    Eigen::Index begin = row;
    for (std::size_t i : idx)
      x.row(row++) = set.Vectors().row(static_cast<Eigen::Index>(i));
    ranges.emplace_back(begin, row);
  }
  Vector global = ColumnMean(x);
  Matrix within = Matrix::Zero(d, d), across = Matrix::Zero(d, d);
  for (auto [begin, end] : ranges) {
    auto block = x.middleRows(begin, end - begin);
    Vector mean = block.colwise().mean().transpose();
    Matrix centered = block.rowwise() - mean.transpose();
    within += centered.transpose() * centered;
    Vector diff = mean - global;
    across += static_cast<double>(end - begin) * diff * diff.transpose();
  }
  within /= static_cast<double>(total);
  across /= static_cast<double>(total);
  Matrix total_cov = within + across;

  Eigen::SelfAdjointEigenSolver<Matrix> es(total_cov);
  if (es.info() != Eigen::Success || !(es.eigenvalues().maxCoeff() > 0.0))
    throw NumericalError("degenerate total covariance");
  const Matrix &v = es.eigenvectors();  // ascending eigenvalues
  CovarianceSpectra out;
  out.total_eigs = es.eigenvalues();
  out.within_diag = (v.transpose() * within * v).diagonal();
  out.across_diag = (v.transpose() * across * v).diagonal();
  return out;
}

std::vector<RecipeStep> ParseRecipe(const std::string &recipe) {
  std::vector<RecipeStep> steps;
  auto order_of = [](RecipeStep::Op op) {
    switch (op) {
      case RecipeStep::Op::kNap:
      case RecipeStep::Op::kPcaRemove:
      case RecipeStep::Op::kPca: return 0;
      case RecipeStep::Op::kCenter: return 1;
      case RecipeStep::Op::kLda: return 2;
      default: return 3;
    }
  };
  auto parse_int = [](const std::string &s, const std::string &token) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != s.size() || v < 1)
      throw UsageError(StrCat("bad number in recipe token '", token, "'"));
    return v;
  };
  std::size_t start = 0;
  while (start <= recipe.size()) {
    std::size_t comma = recipe.find(',', start);
    std::string token = recipe.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    start = comma == std::string::npos ? recipe.size() + 1 : comma + 1;
    if (token.empty()) {
      if (recipe.empty()) break;
      throw UsageError("empty token in recipe");
    }
    std::vector<std::string> parts;
    std::size_t p = 0;
    while (true) {
      std::size_t colon = token.find(':', p);
      parts.push_back(token.substr(p, colon == std::string::npos
                                          ? std::string::npos
                                          : colon - p));
      if (colon == std::string::npos) break;
      p = colon + 1;
    }
    RecipeStep step;
    step.token = token;
    const std::string &name = parts[0];
    if (name == "nap" && (parts.size() == 2 || parts.size() == 3)) {
      step.op = RecipeStep::Op::kNap;
      step.label = ParseLabelKind(parts[1]);
      if (step.label == LabelKind::kSpeaker)
        throw UsageError("NAP on speaker labels makes no sense");
      if (parts.size() == 3) step.value = parse_int(parts[2], token);
    } else if (name == "pca-remove" && parts.size() <= 2) {
      step.op = RecipeStep::Op::kPcaRemove;
      step.value = parts.size() == 2 ? parse_int(parts[1], token) : 2;
    } else if (name == "pca" && parts.size() == 2) {
      step.op = RecipeStep::Op::kPca;
      step.value = parse_int(parts[1], token);
    } else if (name == "center" && parts.size() == 1) {
      step.op = RecipeStep::Op::kCenter;
    } else if (name == "lda" && parts.size() <= 2) {
      step.op = RecipeStep::Op::kLda;
      step.value = parts.size() == 2 ? parse_int(parts[1], token) : 100;
    } else if (name == "ln" && parts.size() == 1) {
      step.op = RecipeStep::Op::kLengthNorm;
    } else {
      throw UsageError(StrCat("bad recipe token '", token, "'"));
    }
    if (!steps.empty() && order_of(steps.back().op) > order_of(step.op))
      throw UsageError(StrCat("recipe step '", token, "' out of order; use ",
                              "nuisance removal -> center -> lda -> ln"));
    steps.push_back(std::move(step));
  }
  return steps;
}

PreprocessChain FitChain(const std::vector<RecipeStep> &recipe,
                         const EmbeddingSet &train, PreprocessChain chain) {
  EmbeddingSet current = ApplyChain(chain, train);
  for (const auto &step : recipe) {
    Transform t = Transform::LengthNorm(current.Dim());
    switch (step.op) {
      case RecipeStep::Op::kNap: {
        int k = step.value;
        if (k == 0) k = static_cast<int>(GroupByLabel(current, step.label).size()) - 1;
        if (k < 1)
          throw DataError(StrCat("NAP on ", ToString(step.label),
                                 " needs at least 2 label classes"));
        t = FitNap(current, step.label, k);
        break;
      }
      case RecipeStep::Op::kPcaRemove: t = RemoveTopPca(current, step.value); break;
      case RecipeStep::Op::kPca: t = FitPca(current, step.value); break;
      case RecipeStep::Op::kCenter: t = EstimateCenter(current); break;
      case RecipeStep::Op::kLda: t = FitLda(current, step.value); break;
      case RecipeStep::Op::kLengthNorm: break;
    }
    t.SetTag(step.token);
    current = current.WithVectors(t.ApplyRows(current.Vectors()));
    chain.Append(std::move(t));
  }
  return chain;
}

}  // namespace svback
