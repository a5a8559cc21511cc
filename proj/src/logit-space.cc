// src/logit-space.cc

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

#include "svback/logit-space.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "svback/json-util.h"
#include "svback/scoring.h"

namespace svback {

namespace {

// Cholesky pivots below this fraction of the largest Gram diagonal entry
// send the factorization down the eigen path.
constexpr double kPivotTolerance = 1e-12;
constexpr double kEigenClamp = 1e-12;

std::string_view MethodName(FactorMethod m) {
  return m == FactorMethod::kCholesky ? "cholesky" : "eigen-sqrt";
}

}  // namespace

ClassifierHead::ClassifierHead(Matrix k, bool unit_rows)
    : k_(std::move(k)), unit_rows_(unit_rows) {
  if (k_.rows() < 1 || k_.cols() < 1) throw DataError("empty classifier head");
  if (!k_.allFinite()) throw DataError("classifier head has non-finite entries");
  if (unit_rows_) {
    Vector norms = k_.rowwise().norm();
    if ((norms.array() - 1.0).abs().maxCoeff() > 1e-6)
      throw DataError("classifier head declared unit_rows but a row norm "
                      "differs from 1");
  }
}

ClassifierHead ClassifierHead::Load(const std::string &stem_in) {
  std::string stem = stem_in;
  if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, ".f32") == 0)
    stem.resize(stem.size() - 4);
  nlohmann::json meta = ReadJsonFile(stem + ".json");
  std::int64_t rows = 0, cols = 0;
  bool unit = false;
  try {
    rows = meta.at("n_speakers").get<std::int64_t>();
    cols = meta.at("dim").get<std::int64_t>();
    unit = meta.value("unit_rows", false);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed header ", stem, ".json: ", e.what()));
  }
  if (rows < 1 || cols < 1)
    throw DataError(StrCat("malformed header ", stem, ".json: bad shape"));
  const std::string data_path = stem + ".f32";
  std::error_code ec;
  auto bytes = std::filesystem::file_size(data_path, ec);
  if (ec) throw DataError(StrCat("cannot open ", data_path));
  if (bytes != static_cast<std::uintmax_t>(rows * cols * 4))
    throw DataError(StrCat("size mismatch: ", data_path));
  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  std::ifstream is(data_path, std::ios::binary);
  is.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(bytes));
  if (!is) throw DataError(StrCat("short read on ", data_path));
  Matrix k(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      k(r, c) = buf[static_cast<std::size_t>(r * cols + c)];
  if (unit) {
    // float32 storage: renormalize rows that were unit before rounding.
    Vector norms = k.rowwise().norm();
    if ((norms.array() - 1.0).abs().maxCoeff() > 1e-6)
      throw DataError("classifier head declared unit_rows but a row norm "
                      "differs from 1");
    k = norms.cwiseInverse().asDiagonal() * k;
  }
  return ClassifierHead(std::move(k), unit);
}

void ClassifierHead::Save(const std::string &stem) const {
  nlohmann::ordered_json meta = {{"n_speakers", NumSpeakers()},
                                 {"dim", Dim()},
                                 {"unit_rows", unit_rows_}};
  WriteJsonFile(meta, stem + ".json");
  std::vector<float> buf(static_cast<std::size_t>(k_.size()));
  for (Eigen::Index r = 0; r < k_.rows(); ++r)
    for (Eigen::Index c = 0; c < k_.cols(); ++c)
      buf[static_cast<std::size_t>(r * k_.cols() + c)] = static_cast<float>(k_(r, c));
  std::ofstream os(stem + ".f32", std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char *>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw DataError(StrCat("I/O failure writing ", stem, ".f32"));
}

nlohmann::ordered_json CompactFactor::ToJson() const {
  nlohmann::ordered_json j;
  j["type"] = "compact_factor";
  j["dim"] = Dim();
  j["method"] = MethodName(method);
  j["M"] = MatrixToJson(m);
  return j;
}

CompactFactor CompactFactor::FromJson(const nlohmann::json &j) {
  try {
    if (j.value("type", "") != "compact_factor")
      throw DataError("not a compact factor document");
    Eigen::Index d = j.at("dim").get<Eigen::Index>();
    CompactFactor f;
    f.m = MatrixFromJson(j.at("M"), d, d, "compact_factor.M");
    std::string method = j.value("method", "cholesky");
    f.method = method == "eigen-sqrt" ? FactorMethod::kEigenSqrt
                                      : FactorMethod::kCholesky;
    return f;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed compact factor: ", e.what()));
  }
}

void CompactFactor::Save(const std::string &path) const {
  WriteJsonFile(ToJson(), path);
}

CompactFactor CompactFactor::Load(const std::string &path) {
  return FromJson(ReadJsonFile(path));
}

CompactFactor ComputeCompactFactor(const Matrix &gram) {
  if (gram.rows() < 1 || gram.rows() != gram.cols())
    throw DataError("Gram matrix must be square and non-empty");
  if (!gram.allFinite()) throw DataError("Gram matrix has non-finite entries");
  const double max_diag = gram.diagonal().maxCoeff();
  CompactFactor f;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success && max_diag > 0.0) {
    Matrix upper = llt.matrixU();
    double min_pivot = upper.diagonal().array().square().minCoeff();
    if (min_pivot > kPivotTolerance * max_diag) {
      f.m = std::move(upper);
      f.method = FactorMethod::kCholesky;
      return f;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError("eigendecomposition of the Gram matrix failed");
  Vector eig = es.eigenvalues();
  const double top = std::max(eig.maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < eig.size(); ++i)
    eig(i) = eig(i) > kEigenClamp * top ? std::sqrt(eig(i)) : 0.0;
  f.m = eig.asDiagonal() * es.eigenvectors().transpose();
  f.method = FactorMethod::kEigenSqrt;
  return f;
}

CompactFactor ComputeCompactFactor(const ClassifierHead &head) {
  const Matrix &k = head.Weights();
  return ComputeCompactFactor(k.transpose() * k);
}

Vector ProjectCompact(const CompactFactor &f, const Vector &r) {
  if (r.size() != f.Dim())
    throw DataError(StrCat("compact factor expects dimension ", f.Dim(),
                           ", got ", r.size()));
  return f.m * r;
}

Matrix ProjectCompactRows(const CompactFactor &f, const Matrix &rows) {
  if (rows.cols() != f.Dim())
    throw DataError(StrCat("compact factor expects dimension ", f.Dim(),
                           ", got ", rows.cols()));
  return rows * f.m.transpose();
}

double CosineScore(const Vector &a, const Vector &b) {
  if (a.size() != b.size()) throw DataError("cosine of vectors of different size");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DataError("zero-norm input to cosine");
  return a.dot(b) / (na * nb);
}

CompactFactor FuseHeads(const ClassifierHead &h1, const ClassifierHead &h2) {
  if (h1.NumSpeakers() != h2.NumSpeakers())
    throw DataError(StrCat("cannot fuse heads with ", h1.NumSpeakers(), " and ",
                           h2.NumSpeakers(), " speakers"));
  Matrix kf(h1.NumSpeakers(), h1.Dim() + h2.Dim());
  kf << h1.Weights(), h2.Weights();
  return ComputeCompactFactor(kf.transpose() * kf);
}

Vector FuseEmbedding(const Vector &r1, const Vector &r2, double w1, double w2) {
  if (!std::isfinite(w1) || !std::isfinite(w2))
    throw DataError("fusion weights must be finite");
  Vector out(r1.size() + r2.size());
  out << w1 * r1, w2 * r2;
  return out;
}

EmbeddingSet FuseEmbeddingSets(const EmbeddingSet &s1, const EmbeddingSet &s2,
                               double w1, double w2) {
  if (!std::isfinite(w1) || !std::isfinite(w2))
    throw DataError("fusion weights must be finite");
  if (s1.Size() != s2.Size())
    throw DataError("fused embedding sets have different sizes");
  Matrix fused(static_cast<Eigen::Index>(s1.Size()), s1.Dim() + s2.Dim());
  for (std::size_t i = 0; i < s1.Size(); ++i) {
    std::size_t j = s2.IndexOf(s1.Ids()[i]);
    fused.row(static_cast<Eigen::Index>(i)) << w1 * s1.Vectors().row(static_cast<Eigen::Index>(i)),
        w2 * s2.Vectors().row(static_cast<Eigen::Index>(j));
  }
  return s1.WithVectors(std::move(fused));
}

ScoreSet ScoreClTrials(const CompactFactor &f, const TrialList &trials,
                       const EmbeddingSet &raw) {
  // M is linear, so averaging raw enrollment embeddings and then projecting
  // equals averaging the projected ones.
  EmbeddingSet projected = raw.WithVectors(ProjectCompactRows(f, raw.Vectors()));
  CosineBackend backend(f.Dim());
  return ScoreTrials(backend, trials, projected, EnrollMode::kAverage,
                     "cosine-cl");
}

}  // namespace svback
