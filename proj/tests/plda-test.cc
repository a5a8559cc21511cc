// tests/plda-test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "svback/plda.h"
#include "svback/random.h"
#include "svback/synth.h"
#include "test-util.h"

using namespace svback;
using namespace svback::testing;

namespace {

PldaModel RandomModel(Rng &rng, Eigen::Index d) {
  Vector mu = rng.NormalVector(d);
  return PldaModel(mu, RandomSpd(rng, d, 0.1, 3.0), RandomSpd(rng, d, 0.2, 2.0));
}

}  // namespace

TEST_CASE("llr matches stacked joint Gaussian") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.Below(4));
    PldaModel m = RandomModel(rng, d);
    int ne = 1 + static_cast<int>(rng.Below(3));
    Matrix e = rng.NormalMatrix(ne, d) * 1.5;
    Vector t = rng.NormalVector(d) * 1.5;
    double ours = m.LogLikelihoodRatio(e, t);
    double ref = StackedLlr(e, t, m.Mean(), m.Between(), m.Within());
    CHECK(std::abs(ours - ref) < 1e-8);
  }
}

TEST_CASE("marginal likelihood matches stacked density") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.Below(4));
    PldaModel m = RandomModel(rng, d);
    int n = 1 + static_cast<int>(rng.Below(4));
    Matrix r = rng.NormalMatrix(n, d);
    CHECK(std::abs(m.MarginalLogLikelihood(r) -
                   StackedLogLikelihood(r, m.Mean(), m.Between(), m.Within())) <
          1e-8);
  }
}

TEST_CASE("hand-computable one-dimensional llr") {
  // B = W = 1, mu = 0, e = t = 0: llr = -1/2 [log 3 - 2 log 2].
  PldaModel m(Vector::Zero(1), Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  Matrix e = Matrix::Zero(1, 1);
  Vector t = Vector::Zero(1);
  CHECK(m.LogLikelihoodRatio(e, t) ==
        doctest::Approx(-0.5 * (std::log(3.0) - 2 * std::log(2.0))).epsilon(1e-14));
}

TEST_CASE("llr is symmetric for single sessions") {
  Rng rng(13);
  PldaModel m = RandomModel(rng, 4);
  Vector a = rng.NormalVector(4), b = rng.NormalVector(4);
  CHECK(std::abs(m.LogLikelihoodRatio(a.transpose(), b) -
                 m.LogLikelihoodRatio(b.transpose(), a)) < 1e-12);
}

TEST_CASE("zero between-speaker covariance gives zero llr") {
  PldaModel m(Vector::Zero(3), Matrix::Zero(3, 3), Matrix::Identity(3, 3));
  Rng rng(14);
  CHECK(std::abs(m.LogLikelihoodRatio(rng.NormalMatrix(2, 3), rng.NormalVector(3))) <
        1e-14);
}

TEST_CASE("singular between-speaker covariance matches oracle") {
  Rng rng(15);
  Matrix f = rng.NormalMatrix(4, 2);
  Matrix b = f * f.transpose();
  b = 0.5 * (b + b.transpose());
  PldaModel m(Vector::Zero(4), b, RandomSpd(rng, 4, 0.5, 1.5));
  Matrix e = rng.NormalMatrix(3, 4);
  Vector t = rng.NormalVector(4);
  // Oracle with a tiny ridge keeps the stacked covariance invertible.
  double ref = StackedLlr(e, t, m.Mean(), b, m.Within());
  CHECK(std::abs(m.LogLikelihoodRatio(e, t) - ref) < 1e-7);
}

TEST_CASE("constructor validation") {
  Matrix i2 = Matrix::Identity(2, 2);
  Matrix asym = i2;
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(PldaModel(Vector::Zero(2), asym, i2), NumericalError);
  CHECK_THROWS_AS(PldaModel(Vector::Zero(2), i2, Matrix::Zero(2, 2)),
                  NumericalError);
  CHECK_THROWS_AS(PldaModel(Vector::Zero(2), -i2, i2), NumericalError);
  CHECK_THROWS_AS(PldaModel(Vector::Zero(3), i2, i2), DataError);
}

TEST_CASE("dimension mismatch at scoring") {
  PldaModel m(Vector::Zero(2), Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  CHECK_THROWS_AS(m.LogLikelihoodRatio(Matrix::Zero(1, 3), Vector::Zero(3)),
                  DataError);
}

TEST_CASE("json round trip reproduces scores") {
  Rng rng(16);
  PldaModel m = RandomModel(rng, 3);
  m.iterations_run = 7;
  auto dir = TempDir("plda");
  std::string path = (dir / "m.json").string();
  m.Save(path);
  PldaModel back = PldaModel::Load(path);
  CHECK(back.iterations_run == 7);
  Matrix e = rng.NormalMatrix(2, 3);
  Vector t = rng.NormalVector(3);
  CHECK(back.LogLikelihoodRatio(e, t) == doctest::Approx(m.LogLikelihoodRatio(e, t)).epsilon(1e-13));
  std::filesystem::remove_all(dir);
}

namespace {

SynthSpec SmallSpec(int d, int speakers, int sessions, std::uint64_t seed) {
  SynthSpec s;
  s.d = d;
  s.n_speakers = speakers;
  s.sessions_per_speaker = sessions;
  s.languages = {{"eng", Vector::Zero(d), 1.0}};
  Rng rng(seed + 100);
  s.between = RandomSpd(rng, d, 0.5, 2.0);
  s.within = RandomSpd(rng, d, 0.3, 1.0);
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("EM log-likelihood is monotone and recovers covariances") {
  SynthSpec spec = SmallSpec(5, 800, 8, 21);
  EmbeddingSet set = Sample(spec);
  TrainOptions opts;
  opts.iterations = 30;
  opts.tol = 0;
  TrainResult r = TrainPlda(set, opts);
  for (std::size_t i = 1; i < r.loglik.size(); ++i)
    CHECK(r.loglik[i] - r.loglik[i - 1] >= -1e-8 * std::abs(r.loglik[i - 1]));
  double eb = (r.model.Between() - spec.between).norm() / spec.between.norm();
  double ew = (r.model.Within() - spec.within).norm() / spec.within.norm();
  CHECK(eb < 0.15);
  CHECK(ew < 0.05);
}

TEST_CASE("low-rank EM is monotone and respects rank") {
  const int d = 6;
  SynthSpec spec = SmallSpec(d, 600, 6, 22);
  Rng rng(5);
  Matrix f = rng.NormalMatrix(d, 2);
  spec.between = f * f.transpose();
  spec.between = 0.5 * (spec.between + spec.between.transpose()).eval();
  EmbeddingSet set = Sample(spec);
  TrainOptions opts;
  opts.iterations = 25;
  opts.subspace_rank = 2;
  opts.tol = 0;
  TrainResult r = TrainPlda(set, opts);
  for (std::size_t i = 1; i < r.loglik.size(); ++i)
    CHECK(r.loglik[i] - r.loglik[i - 1] >= -1e-8 * std::abs(r.loglik[i - 1]));
  Eigen::SelfAdjointEigenSolver<Matrix> es(r.model.Between());
  CHECK(es.eigenvalues()(d - 3) < 1e-8 * es.eigenvalues()(d - 1));
  CHECK(r.model.subspace_rank == 2);
}

TEST_CASE("training is deterministic") {
  EmbeddingSet set = Sample(SmallSpec(4, 100, 4, 23));
  TrainOptions opts;
  opts.iterations = 5;
  TrainResult a = TrainPlda(set, opts), b = TrainPlda(set, opts);
  CHECK(a.model.Between() == b.model.Between());
  CHECK(a.model.Within() == b.model.Within());
}

TEST_CASE("training errors") {
  // Every speaker has identical rows: within-speaker scatter is exactly zero.
  std::vector<std::string> ids = {"a1", "a2", "b1", "b2"};
  Matrix v(4, 2);
  v << 1, 0, 1, 0, 0, 1, 0, 1;
  std::vector<SegmentMeta> meta(4);
  meta[0].speaker_id = meta[1].speaker_id = "a";
  meta[2].speaker_id = meta[3].speaker_id = "b";
  EmbeddingSet dup(ids, v, meta);
  CHECK_THROWS_AS(TrainPlda(dup, TrainOptions{}), NumericalError);
  EmbeddingSet unlabeled(ids, v);
  CHECK_THROWS_AS(TrainPlda(unlabeled, TrainOptions{}), DataError);
  TrainOptions bad;
  bad.subspace_rank = 5;
  CHECK_THROWS_AS(TrainPlda(Sample(SmallSpec(3, 10, 3, 1)), bad), UsageError);
}
