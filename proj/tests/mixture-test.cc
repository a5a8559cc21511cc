// tests/mixture-test.cc

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

#include "svback/mixture.h"
#include "svback/random.h"
#include "svback/scoring.h"
#include "svback/synth.h"
#include "test-util.h"

using namespace svback;
using namespace svback::testing;

namespace {

PldaModel RandomModel(Rng &rng, Eigen::Index d, double shift) {
  return PldaModel(Vector::Constant(d, shift), RandomSpd(rng, d, 0.3, 2.0),
                   RandomSpd(rng, d, 0.3, 1.0));
}

PldaMixture RandomMixture(Rng &rng, Eigen::Index d) {
  return PldaMixture({{"eng", RandomModel(rng, d, 0.0)},
                      {"cmn", RandomModel(rng, d, 2.0)},
                      {"yue", RandomModel(rng, d, -2.0)}});
}

}  // namespace

TEST_CASE("posterior from log values") {
  Vector l(3);
  l << -1000, -1001, -1002;
  Vector p = PosteriorFromLog(l);
  CHECK(std::abs(p.sum() - 1.0) < 1e-15);
  CHECK(p(0) > p(1));
  Vector inf = Vector::Constant(2, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(PosteriorFromLog(inf), NumericalError);
}

TEST_CASE("weights hand computed") {
  // Two identical components: weights are the prior.
  PldaModel m(Vector::Zero(2), Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  Vector prior(2);
  prior << 0.25, 0.75;
  PldaMixture mix({{"a", m}, {"b", m}}, prior);
  Vector w = mix.TrialWeights(Matrix::Ones(1, 2), Vector::Zero(2));
  CHECK(std::abs(w(0) - 0.25) < 1e-15);
  CHECK(std::abs(w(1) - 0.75) < 1e-15);
}

TEST_CASE("weights sum to one and score is convex combination") {
  Rng rng(1);
  PldaMixture mix = RandomMixture(rng, 3);
  for (int i = 0; i < 200; ++i) {
    int ne = 1 + static_cast<int>(rng.Below(3));
    Matrix e = rng.NormalMatrix(ne, 3) * 2;
    Vector t = rng.NormalVector(3) * 2;
    Vector w = mix.TrialWeights(e, t);
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);
    Vector llr = mix.ComponentScores(e, t);
    double s = mix.Score(e, t);
    CHECK(s >= llr.minCoeff() - 1e-12);
    CHECK(s <= llr.maxCoeff() + 1e-12);
    // Posterior oracle: prior times stacked density, normalized.
    Vector post(3);
    for (int p = 0; p < 3; ++p) {
      const PldaModel &m = mix.Components()[p].model;
      post(p) = std::exp(StackedLogLikelihood(e, m.Mean(), m.Between(), m.Within()) -
                         std::log(3.0));
    }
    post /= post.sum();
    Vector lw = mix.LanguageWeights(e);
    CHECK((lw - post).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("backend matches direct mixture scoring") {
  Rng rng(2);
  PldaMixture mix = RandomMixture(rng, 3);
  MixtureBackend backend(mix);
  Matrix e = rng.NormalMatrix(3, 3);
  Vector t = rng.NormalVector(3);
  std::size_t h = backend.AddSets({e, Matrix(t.transpose())});
  CHECK(std::abs(backend.Score(h, h + 1) - mix.Score(e, t)) < 1e-10);
  // Tabulated LLRs agree with the direct formula for every count pair,
  // including sets added after the tables were first built.
  PldaModel m = mix.Components()[0].model;
  MixtureBackend plain(m);
  std::vector<Matrix> sets;
  for (int n = 1; n <= 3; ++n) sets.push_back(rng.NormalMatrix(n, 3));
  plain.AddSets(sets);
  sets.push_back(rng.NormalMatrix(5, 3));
  plain.AddSets({sets.back()});
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j)
      CHECK(std::abs(plain.Score(i, j) -
                     m.LogLikelihoodRatio(m.Stats(sets[i]), m.Stats(sets[j]))) <
            1e-10);
}

TEST_CASE("single-component mixture equals plain PLDA bit for bit") {
  Rng rng(3);
  PldaModel m = RandomModel(rng, 4, 0.5);
  MixtureBackend plain(m);
  MixtureBackend mix(PldaMixture({{"eng", m}}));
  std::vector<Matrix> sets;
  for (int i = 0; i < 20; ++i) sets.push_back(rng.NormalMatrix(1 + i % 3, 4));
  plain.AddSets(sets);
  mix.AddSets(sets);
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j)
      CHECK(plain.Score(i, j) == mix.Score(i, j));
  CHECK(plain.Name() == "plda");
}

TEST_CASE("prior and language validation") {
  Rng rng(4);
  PldaModel m = RandomModel(rng, 2, 0);
  Vector bad(2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(PldaMixture({{"a", m}, {"b", m}}, bad), DataError);
  CHECK_THROWS_AS(PldaMixture({{"a", m}, {"a", m}}), DataError);
}

TEST_CASE("train mixture") {
  SynthSpec spec;
  spec.d = 4;
  spec.n_speakers = 120;
  spec.sessions_per_speaker = 4;
  spec.languages = {{"eng", Vector::Constant(4, 1.0), 0.5},
                    {"cmn", Vector::Constant(4, -1.0), 0.5}};
  spec.between = Matrix::Identity(4, 4);
  spec.within = 0.5 * Matrix::Identity(4, 4);
  spec.seed = 9;
  EmbeddingSet set = Sample(spec);
  TrainOptions opts;
  opts.iterations = 5;
  PldaMixture mix = TrainMixture(set, {"eng", "cmn"}, opts);
  CHECK(mix.NumComponents() == 2);
  CHECK(mix.Components()[0].model.Mean()(0) > 0.5);
  CHECK(mix.Components()[1].model.Mean()(0) < -0.5);
  CHECK_THROWS_AS(TrainMixture(set, {"eng", "yue"}, opts), DataError);
  auto dir = TempDir("mix");
  mix.Save((dir / "m.json").string());
  PldaMixture back = PldaMixture::Load((dir / "m.json").string());
  Matrix e = set.Vectors().topRows(2);
  Vector t = set.Vectors().row(5).transpose();
  CHECK(back.Score(e, t) == doctest::Approx(mix.Score(e, t)).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}
