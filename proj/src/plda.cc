// src/plda.cc

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

#include "svback/plda.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "svback/json-util.h"
#include "svback/random.h"

namespace svback {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kRankTolerance = 1e-10;
constexpr double kRegularization = 1e-6;

void CheckSymmetric(const Matrix &m, const char *what) {
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale)
    throw NumericalError(StrCat(what, " is not symmetric"));
}

Matrix Symmetrize(const Matrix &m) { return 0.5 * (m + m.transpose()); }

// Adds lambda * trace(W) / d * I when W is near-singular. Throws when W has
// collapsed to zero. Returns true when a shift was applied; the caller
// reports it.
bool RegularizeWithin(Matrix *within) {
  const Eigen::Index d = within->rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(*within, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues()(0), hi = es.eigenvalues()(d - 1);
  if (!(hi > 0.0) || !std::isfinite(hi))
    throw NumericalError("within-speaker covariance collapsed to zero; "
                         "regularization cannot recover it");
  if (lo >= kRankTolerance * hi) return false;
  double shift = kRegularization * within->trace() / static_cast<double>(d);
  *within += shift * Matrix::Identity(d, d);
  return true;
}

struct SpeakerData {
  std::vector<int> counts;
  Matrix sums;          // speakers x d
  Matrix scatter;       // sum over all sessions of r r^T
  Vector total_sum;
  int total = 0;
  Matrix within_init;   // within-speaker scatter / N
};

SpeakerData CollectSpeakers(const EmbeddingSet &set) {
  auto groups = GroupByLabel(set, LabelKind::kSpeaker);
  if (groups.size() < 2)
    throw DataError(StrCat("PLDA training needs at least 2 speakers, found ",
                           groups.size()));
  const Eigen::Index d = set.Dim();
  SpeakerData data;
  data.sums = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), d);
  data.scatter = Matrix::Zero(d, d);
  data.within_init = Matrix::Zero(d, d);
  data.total_sum = Vector::Zero(d);
  Eigen::Index s = 0;
  std::size_t skipped = set.Size();
  for (const auto &[spk, idx] : groups) {
    Matrix x(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t r = 0; r < idx.size(); ++r)
      x.row(static_cast<Eigen::Index>(r)) =
          set.Vectors().row(static_cast<Eigen::Index>(idx[r]));
    Vector sum = x.colwise().sum().transpose();
    data.sums.row(s++) = sum.transpose();
    data.counts.push_back(static_cast<int>(idx.size()));
    data.scatter += x.transpose() * x;
    Matrix centered = x.rowwise() - (sum / static_cast<double>(idx.size())).transpose();
    data.within_init += centered.transpose() * centered;
    data.total_sum += sum;
    data.total += static_cast<int>(idx.size());
    skipped -= idx.size();
  }
  if (skipped > 0)
    Warn(StrCat("PLDA: ignoring ", skipped, " segments without speaker label"));
  if (data.total <= d)
    Warn(StrCat("PLDA: only ", data.total, " training segments for dimension ",
                d));
  data.within_init /= static_cast<double>(data.total);
  return data;
}

// Training-set log-likelihood of `model`, from per-speaker sums.
double TrainingLogLikelihood(const PldaModel &model, const SpeakerData &data,
                             Matrix *projected_sums) {
  const Vector &mu = model.Mean();
  const Eigen::Index d = model.Dim();
  Vector counts(static_cast<Eigen::Index>(data.counts.size()));
  for (std::size_t s = 0; s < data.counts.size(); ++s)
    counts(static_cast<Eigen::Index>(s)) = data.counts[s];
  Matrix centered_sums = data.sums - counts * mu.transpose();
  *projected_sums = centered_sums * model.Transform().transpose();

  // Sum of squares over all sessions: trace(T C T^T) with C the scatter
  // around mu.
  Matrix c = data.scatter - mu * data.total_sum.transpose() -
             data.total_sum * mu.transpose() +
             static_cast<double>(data.total) * mu * mu.transpose();
  double q = (model.Transform() * c * model.Transform().transpose()).trace();

  const Vector &psi = model.Psi();
  double ll = -0.5 * q;
  for (std::size_t s = 0; s < data.counts.size(); ++s) {
    double n = data.counts[s];
    double term = n * (static_cast<double>(d) * kLog2Pi + model.LogDetWithin());
    for (Eigen::Index k = 0; k < d; ++k) {
      double sk = (*projected_sums)(static_cast<Eigen::Index>(s), k);
      term += std::log1p(n * psi(k)) - psi(k) * sk * sk / (1.0 + n * psi(k));
    }
    ll -= 0.5 * term;
  }
  return ll;
}

Vector CountsVector(const SpeakerData &data) {
  Vector counts(static_cast<Eigen::Index>(data.counts.size()));
  for (std::size_t s = 0; s < data.counts.size(); ++s)
    counts(static_cast<Eigen::Index>(s)) = data.counts[s];
  return counts;
}

// One EM step of the full-rank model: z_s = mu + y_s ~ N(mu, B).
void FullRankStep(const PldaModel &model, const SpeakerData &data,
                  const Matrix &projected_sums, Vector *mu, Matrix *between,
                  Matrix *within) {
  const Eigen::Index d = model.Dim();
  const Eigen::Index num_spk = projected_sums.rows();
  const Vector &psi = model.Psi();
  const Matrix &tinv = model.InverseTransform();
  Vector counts = CountsVector(data);

  Matrix post_mean(num_spk, d);
  Vector sum_var = Vector::Zero(d), sum_nvar = Vector::Zero(d);
  for (Eigen::Index s = 0; s < num_spk; ++s) {
    double n = counts(s);
    for (Eigen::Index k = 0; k < d; ++k) {
      double denom = 1.0 + n * psi(k);
      post_mean(s, k) = psi(k) * projected_sums(s, k) / denom;
      sum_var(k) += psi(k) / denom;
      sum_nvar(k) += n * psi(k) / denom;
    }
  }
  Matrix z = post_mean * tinv.transpose();
  z.rowwise() += model.Mean().transpose();

  Vector new_mu = z.colwise().mean().transpose();
  Matrix zc = z.rowwise() - new_mu.transpose();
  Matrix cov_sum = tinv * sum_var.asDiagonal() * tinv.transpose();
  Matrix ncov_sum = tinv * sum_nvar.asDiagonal() * tinv.transpose();

  *between = Symmetrize((cov_sum + zc.transpose() * zc) /
                        static_cast<double>(num_spk));
  Matrix cross = z.transpose() * data.sums;
  *within = Symmetrize((data.scatter - cross - cross.transpose() +
                        z.transpose() * counts.asDiagonal() * z + ncov_sum) /
                       static_cast<double>(data.total));
  *mu = new_mu;
}

// One EM step of the low-rank model: r = mu + F h + e, h ~ N(0, I). The mean
// and F are updated jointly, so the step is exact EM.
void LowRankStep(const SpeakerData &data, Matrix *factor, Vector *mu,
                 Matrix *within) {
  const Eigen::Index d = factor->rows();
  const Eigen::Index rank = factor->cols();
  const Eigen::Index num_spk = data.sums.rows();
  Vector counts = CountsVector(data);

  Eigen::LLT<Matrix> w_llt(*within);
  if (w_llt.info() != Eigen::Success)
    throw NumericalError("within-speaker covariance is not positive definite");
  Matrix wi_f = w_llt.solve(*factor);              // W^{-1} F
  Matrix g = factor->transpose() * wi_f;           // F^T W^{-1} F

  std::map<int, Matrix> post_cov;  // by session count
  for (int n : data.counts) {
    if (post_cov.count(n)) continue;
    Matrix p = Matrix::Identity(rank, rank) + static_cast<double>(n) * g;
    post_cov[n] = p.llt().solve(Matrix::Identity(rank, rank));
  }
  Matrix centered = data.sums - counts * mu->transpose();
  Matrix proj = centered * wi_f;  // speakers x rank
  Matrix h(num_spk, rank);
  Matrix cov_acc = Matrix::Zero(rank, rank);
  for (Eigen::Index s = 0; s < num_spk; ++s) {
    const Matrix &pc = post_cov[data.counts[static_cast<std::size_t>(s)]];
    h.row(s) = (pc * proj.row(s).transpose()).transpose();
    cov_acc += counts(s) * pc;
  }

  // A = sum_s sum_s [E h_s; 1]^T,  C = sum_s n_s E[[h;1][h;1]^T].
  Matrix a(d, rank + 1);
  a.leftCols(rank) = data.sums.transpose() * h;
  a.col(rank) = data.total_sum;
  Matrix c(rank + 1, rank + 1);
  c.topLeftCorner(rank, rank) = cov_acc + h.transpose() * counts.asDiagonal() * h;
  Vector nh = h.transpose() * counts;
  c.topRightCorner(rank, 1) = nh;
  c.bottomLeftCorner(1, rank) = nh.transpose();
  c(rank, rank) = data.total;

  Matrix solved = c.ldlt().solve(a.transpose()).transpose();  // [F mu]
  *factor = solved.leftCols(rank);
  *mu = solved.col(rank);
  *within = Symmetrize((data.scatter - solved * a.transpose()) /
                       static_cast<double>(data.total));
}

}  // namespace

PldaModel::PldaModel(Vector mean, Matrix between, Matrix within)
    : mean_(std::move(mean)),
      between_(std::move(between)),
      within_(std::move(within)) {
  const Eigen::Index d = mean_.size();
  if (d < 1) throw DataError("PLDA model dimension must be >= 1");
  if (between_.rows() != d || between_.cols() != d || within_.rows() != d ||
      within_.cols() != d)
    throw DataError("PLDA covariance shapes do not match the mean");
  if (!mean_.allFinite() || !between_.allFinite() || !within_.allFinite())
    throw NumericalError("PLDA parameters must be finite");
  CheckSymmetric(between_, "between-speaker covariance");
  CheckSymmetric(within_, "within-speaker covariance");
  between_ = Symmetrize(between_);
  within_ = Symmetrize(within_);

  Eigen::LLT<Matrix> llt(within_);
  if (llt.info() != Eigen::Success ||
      !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0))
    throw NumericalError("within-speaker covariance is not positive definite");
  Matrix l = llt.matrixL();
  log_det_within_ = 2.0 * l.diagonal().array().log().sum();

  // L^{-1} B L^{-T}
  Matrix tmp = llt.matrixL().solve(between_);
  Matrix whitened = llt.matrixL().solve(tmp.transpose());
  whitened = Symmetrize(whitened);
  SortedEigen eig = SymmetricEigenDescending(whitened);
  double scale = std::max(1.0, std::abs(eig.values(0)));
  if (eig.values.minCoeff() < -1e-8 * scale)
    throw NumericalError("between-speaker covariance is not positive "
                         "semi-definite");
  psi_ = eig.values.cwiseMax(0.0);
  // T = V^T L^{-1}, i.e. T^T = L^{-T} V.
  transform_ = llt.matrixU().solve(eig.vectors).transpose();
  inverse_transform_ = l * eig.vectors;
}

void PldaModel::CheckDim(Eigen::Index d) const {
  if (d != Dim())
    throw DataError(StrCat("PLDA dimension mismatch (", d, " vs ", Dim(), ")"));
}

Matrix PldaModel::ProjectRows(const Matrix &rows) const {
  CheckDim(rows.cols());
  return (rows.rowwise() - mean_.transpose()) * transform_.transpose();
}

PldaModel::SetStats PldaModel::StatsFromProjected(const Matrix &projected) {
  SetStats s;
  s.count = static_cast<int>(projected.rows());
  s.sum = projected.colwise().sum().transpose();
  s.sum_sq = projected.squaredNorm();
  return s;
}

PldaModel::SetStats PldaModel::Stats(const Matrix &rows) const {
  return StatsFromProjected(ProjectRows(rows));
}

double PldaModel::MarginalLogLikelihood(const SetStats &stats) const {
  CheckDim(stats.sum.size());
  const double n = stats.count;
  double acc = n * (static_cast<double>(Dim()) * kLog2Pi + log_det_within_) +
               stats.sum_sq;
  for (Eigen::Index k = 0; k < Dim(); ++k) {
    const double p = psi_(k), s = stats.sum(k);
    acc += std::log1p(n * p) - p * s * s / (1.0 + n * p);
  }
  return -0.5 * acc;
}

double PldaModel::MarginalLogLikelihood(const Matrix &rows) const {
  if (rows.rows() < 1) throw DataError("marginal likelihood of an empty set");
  return MarginalLogLikelihood(Stats(rows));
}

double PldaModel::LogLikelihoodRatio(const SetStats &enroll,
                                     const SetStats &test) const {
  CheckDim(enroll.sum.size());
  CheckDim(test.sum.size());
  const double ne = enroll.count, nt = test.count, nj = ne + nt;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < Dim(); ++k) {
    const double p = psi_(k);
    const double se = enroll.sum(k), st = test.sum(k), sj = se + st;
    acc += std::log1p(nj * p) - std::log1p(ne * p) - std::log1p(nt * p) -
           p * sj * sj / (1.0 + nj * p) + p * se * se / (1.0 + ne * p) +
           p * st * st / (1.0 + nt * p);
  }
  return -0.5 * acc;
}

double PldaModel::LogLikelihoodRatio(const Matrix &enroll,
                                     const Vector &test) const {
  if (enroll.rows() < 1) throw DataError("empty enrollment set");
  CheckDim(enroll.cols());
  CheckDim(test.size());
  return LogLikelihoodRatio(Stats(enroll), Stats(test.transpose()));
}

nlohmann::ordered_json PldaModel::ToJson() const {
  nlohmann::ordered_json j;
  j["type"] = "plda";
  j["dim"] = Dim();
  j["subspace_rank"] = subspace_rank;
  j["iterations_run"] = iterations_run;
  j["final_loglik"] = final_loglik;
  j["mu"] = VectorToJson(mean_);
  j["B"] = MatrixToJson(between_);
  j["W"] = MatrixToJson(within_);
  return j;
}

PldaModel PldaModel::FromJson(const nlohmann::json &j) {
  try {
    if (j.value("type", "") != "plda")
      throw DataError("not a PLDA model document");
    Eigen::Index d = j.at("dim").get<Eigen::Index>();
    PldaModel m(VectorFromJson(j.at("mu"), "plda.mu"),
                MatrixFromJson(j.at("B"), d, d, "plda.B"),
                MatrixFromJson(j.at("W"), d, d, "plda.W"));
    if (m.Dim() != d) throw DataError("plda.mu has the wrong length");
    m.subspace_rank = j.value("subspace_rank", 0);
    m.iterations_run = j.value("iterations_run", 0);
    m.final_loglik = j.value("final_loglik", 0.0);
    return m;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed PLDA model: ", e.what()));
  }
}

void PldaModel::Save(const std::string &path) const {
  WriteJsonFile(ToJson(), path);
}

PldaModel PldaModel::Load(const std::string &path) {
  return FromJson(ReadJsonFile(path));
}

TrainResult TrainPlda(const EmbeddingSet &set, const TrainOptions &opts) {
  if (opts.iterations < 1) throw UsageError("PLDA iterations must be >= 1");
  const Eigen::Index d = set.Dim();
  if (opts.subspace_rank < 0 || opts.subspace_rank > d)
    throw UsageError(StrCat("subspace rank must be in [1, ", d, "]"));
  const bool low_rank = opts.subspace_rank > 0 && opts.subspace_rank < d;

  SpeakerData data = CollectSpeakers(set);
  const Eigen::Index num_spk = data.sums.rows();

  Vector mu = data.total_sum / static_cast<double>(data.total);
  Matrix within = data.within_init;
  int regularized = RegularizeWithin(&within);
  Matrix means = data.sums.array().colwise() /
                 CountsVector(data).array();
  Matrix mc = means.rowwise() - mu.transpose();
  Matrix between = Symmetrize(mc.transpose() * mc / static_cast<double>(num_spk));

  Matrix factor;
  if (low_rank) {
    const Eigen::Index rank = opts.subspace_rank;
    SortedEigen eig = SymmetricEigenDescending(between);
    double floor = kRankTolerance * std::max(eig.values(0), 0.0);
    factor.resize(d, rank);
    Rng rng(DeriveSeed(opts.seed, 0));
    for (Eigen::Index i = 0; i < rank; ++i) {
      if (eig.values(i) > floor && eig.values(i) > 0.0) {
        factor.col(i) = eig.vectors.col(i) * std::sqrt(eig.values(i));
      } else {
        // Between-speaker scatter has fewer than `rank` directions: complete
        // the basis with a seeded random direction of average scale.
        Vector v = rng.NormalVector(d);
        v -= factor.leftCols(i) * (factor.leftCols(i).transpose() * v)
                 .cwiseQuotient(factor.leftCols(i).colwise().squaredNorm().transpose());
        double scale = std::sqrt(std::max(between.trace(), within.trace()) /
                                 static_cast<double>(d));
        factor.col(i) = v.normalized() * scale;
      }
    }
    between = factor * factor.transpose();
  }

  TrainResult result;
  Matrix projected_sums;
  PldaModel model(mu, between, within);
  result.loglik.push_back(TrainingLogLikelihood(model, data, &projected_sums));
  int iter = 0;
  for (; iter < opts.iterations; ++iter) {
    if (low_rank) {
      LowRankStep(data, &factor, &mu, &within);
      between = Symmetrize(factor * factor.transpose());
    } else {
      FullRankStep(model, data, projected_sums, &mu, &between, &within);
    }
    regularized += RegularizeWithin(&within);
    model = PldaModel(mu, between, within);
    double ll = TrainingLogLikelihood(model, data, &projected_sums);
    double prev = result.loglik.back();
    result.loglik.push_back(ll);
    if (std::abs(ll - prev) <= opts.tol * std::abs(prev)) {
      ++iter;
      break;
    }
  }
  if (regularized > 0)
    Warn(StrCat("PLDA: within-speaker covariance was near-singular in ",
                regularized, " of ", iter + 1, " updates; added ",
                kRegularization, " * trace(W)/d * I each time"));
  model.subspace_rank = low_rank ? opts.subspace_rank : 0;
  model.iterations_run = iter;
  model.final_loglik = result.loglik.back();
  result.model = std::move(model);
  return result;
}

}  // namespace svback
