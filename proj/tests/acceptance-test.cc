// tests/acceptance-test.cc

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

// Acceptance checks. Prints one "CRITERION <n> PASS|FAIL" line per
// criterion and exits nonzero if any criterion fails.
//
//   acceptance-test [--only N] [--keep]

#include <sys/resource.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"
#include "svback/json-util.h"
#include "svback/logit-space.h"
#include "svback/metrics.h"
#include "svback/mixture.h"
#include "svback/plda.h"
#include "svback/preprocess.h"
#include "svback/random.h"
#include "svback/score-norm.h"
#include "svback/scoring.h"
#include "svback/synth.h"
#include "test-util.h"

using namespace svback;
using namespace svback::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path &WorkDir() {
  static fs::path dir;
  return dir;
}

std::string P(const std::string &name) { return (WorkDir() / name).string(); }

std::string Slurp(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void WriteText(const std::string &path, const std::string &text) {
  std::ofstream(path) << text;
}

std::string Fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

struct ChildResult {
  int exit_code = -1;
  double seconds = 0.0;
  long max_rss_kb = 0;
};

// Runs the CLI as a child process with stdout/stderr sent to files, and
// reports wall time and the child's peak resident set size.
ChildResult RunCli(const std::vector<std::string> &args,
                   const std::string &log_stem) {
  std::vector<std::string> argv_s = {SVBACK_CLI_PATH};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);
  const std::string out_path = log_stem + ".stdout", err_path = log_stem + ".stderr";
  Timer timer;
  pid_t pid = fork();
  if (pid == 0) {
    int out = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    int err = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (out >= 0) dup2(out, 1);
    if (err >= 0) dup2(err, 2);
    execv(argv[0], argv.data());
    _exit(127);
  }
  ChildResult r;
  if (pid < 0) return r;
  int status = 0;
  struct rusage usage;
  std::memset(&usage, 0, sizeof(usage));
  wait4(pid, &status, 0, &usage);
  r.seconds = timer.Seconds();
  r.max_rss_kb = usage.ru_maxrss;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

SynthSpec BaseSpec(int d, int speakers, int sessions, std::uint64_t seed) {
  SynthSpec spec;
  spec.d = d;
  spec.n_speakers = speakers;
  spec.sessions_per_speaker = sessions;
  spec.languages = {{"eng", Vector::Zero(d), 1.0}};
  spec.mean = Vector::Zero(d);
  spec.gender_shift = Vector::Zero(d);
  spec.channel_shift = Vector::Zero(d);
  spec.between = Matrix::Identity(d, d);
  spec.within = 0.5 * Matrix::Identity(d, d);
  spec.seed = seed;
  return spec;
}

// Three languages with mean shifts along the first axes, plus gender and
// channel shifts.
SynthSpec ThreeLanguageSpec(int d, int speakers, int sessions, std::uint64_t seed) {
  SynthSpec spec = BaseSpec(d, speakers, sessions, seed);
  const char *names[] = {"eng", "cmn", "yue"};
  const double shares[] = {0.4, 0.3, 0.3};
  spec.languages.clear();
  for (int l = 0; l < 3; ++l) {
    Vector shift = Vector::Zero(d);
    shift(l) = 2.0;
    spec.languages.push_back({names[l], shift, shares[l]});
  }
  spec.gender_shift(3) = 1.5;
  spec.channel_shift(4) = 0.5;
  return spec;
}

Matrix Rows(const EmbeddingSet &set, const std::vector<std::string> &ids) {
  Matrix m(static_cast<Eigen::Index>(ids.size()), set.Dim());
  for (std::size_t i = 0; i < ids.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) =
        set.Vectors().row(static_cast<Eigen::Index>(set.IndexOf(ids[i])));
  return m;
}

// 1. PLDA LLR versus the stacked joint Gaussian.
Outcome PldaOracle() {
  Timer timer;
  Rng rng(101);
  double worst = 0.0;
  int trials = 0;
  for (int m = 0; m < 200; ++m) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.Below(4));
    Vector mu = rng.NormalVector(d);
    Matrix w = RandomSpd(rng, d, 0.2, 2.0);
    Matrix b;
    if (m % 4 == 3) {
      // Rank-deficient between-speaker covariance.
      Matrix f = rng.NormalMatrix(d, d - 1);
      b = d > 1 ? Matrix(0.5 * (f * f.transpose() + (f * f.transpose()).transpose()))
                : Matrix::Zero(1, 1);
    } else {
      b = RandomSpd(rng, d, 0.05, 3.0);
    }
    PldaModel model(mu, b, w);
    MixtureBackend backend(model);
    for (int t = 0; t < 10; ++t) {
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.Below(3));
      Vector spk = rng.NormalVector(d);
      Matrix enroll(n, d);
      for (Eigen::Index i = 0; i < n; ++i)
        enroll.row(i) = (mu + spk + 0.7 * rng.NormalVector(d)).transpose();
      Vector test = mu + (t % 2 == 0 ? spk : rng.NormalVector(d)) +
                    0.7 * rng.NormalVector(d);
      const double ref = StackedLlr(enroll, test, mu, b, w);
      const double direct = model.LogLikelihoodRatio(enroll, test);
      std::size_t h = backend.AddSets({enroll, Matrix(test.transpose())});
      const double tabulated = backend.Score(h, h + 1);
      worst = std::max({worst, std::abs(direct - ref), std::abs(tabulated - ref)});
      ++trials;
    }
  }
  const double secs = timer.Seconds();
  return {worst <= 1e-8 && secs < 10.0,
          StrCat("200 models, ", trials, " trials, max |llr - oracle| = ", Fmt(worst),
                 ", ", Fmt(secs), " s")};
}

// 2. Cosine of explicit logits versus the compact factor.
Outcome LogitSpace() {
  Timer timer;
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Matrix k = rng.NormalMatrix(500, 64);
    Vector re = rng.NormalVector(64), rt = rng.NormalVector(64);
    CompactFactor f = ComputeCompactFactor(ClassifierHead(k));
    double compact = CosineScore(ProjectCompact(f, re), ProjectCompact(f, rt));
    worst = std::max(worst, std::abs(compact - LogitCosine(k, re, rt)));
  }
  const double secs = timer.Seconds();
  return {worst < 1e-10 && secs < 5.0,
          StrCat("1000 draws, max diff = ", Fmt(worst), ", ", Fmt(secs), " s")};
}

// 3. Fused compact score versus cosine of the weighted logit sum.
Outcome Fusion() {
  Rng rng(303);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    Matrix k1 = rng.NormalMatrix(300, 32), k2 = rng.NormalMatrix(300, 48);
    const double w1 = 0.1 + 2.0 * rng.Uniform(), w2 = 0.1 + 2.0 * rng.Uniform();
    Vector e1 = rng.NormalVector(32), t1 = rng.NormalVector(32);
    Vector e2 = rng.NormalVector(48), t2 = rng.NormalVector(48);
    CompactFactor f = FuseHeads(ClassifierHead(k1), ClassifierHead(k2));
    double compact = CosineScore(ProjectCompact(f, FuseEmbedding(e1, e2, w1, w2)),
                                 ProjectCompact(f, FuseEmbedding(t1, t2, w1, w2)));
    Vector le = w1 * k1 * e1 + w2 * k2 * e2;
    Vector lt = w1 * k1 * t1 + w2 * k2 * t2;
    double explicit_score = le.dot(lt) / (le.norm() * lt.norm());
    worst = std::max(worst, std::abs(compact - explicit_score));
  }
  return {worst < 1e-10, StrCat("200 head pairs, max diff = ", Fmt(worst))};
}

// 4. Mixture weights, convexity and the one-component CLI equivalence.
Outcome MixtureContract() {
  SynthSpec spec = ThreeLanguageSpec(10, 600, 6, 404);
  EmbeddingSet set = Sample(spec);
  TrainOptions opts;
  opts.iterations = 10;
  PldaMixture mix = TrainMixture(set, {"eng", "cmn", "yue"}, opts);
  double worst_sum = 0.0, worst_convex = 0.0, worst_backend = 0.0;
  double min_weight = 1.0;
  std::size_t n = 0;
  for (int spm : {1, 3}) {
    TrialList trials = MakeTrials(set, 1000, 4000, spm, 40 + spm);
    MixtureBackend backend(mix);
    ScoreSet scored = ScoreTrials(backend, trials, set);
    for (std::size_t i = 0; i < trials.trials.size(); ++i) {
      const Trial &t = trials.trials[i];
      Matrix enroll = Rows(set, trials.models.at(t.model_id));
      Vector test = set.Vectors().row(static_cast<Eigen::Index>(set.IndexOf(t.test_id))).transpose();
      Vector w = mix.TrialWeights(enroll, test);
      Vector c = mix.ComponentScores(enroll, test);
      double s = mix.Score(enroll, test);
      worst_sum = std::max(worst_sum, std::abs(w.sum() - 1.0));
      min_weight = std::min(min_weight, w.minCoeff());
      double tol = 1e-9 * (1.0 + std::abs(s));
      double outside = std::max({0.0, c.minCoeff() - s, s - c.maxCoeff()});
      double mismatch = std::abs(s - w.dot(c));
      worst_convex = std::max({worst_convex, outside, mismatch > tol ? mismatch : 0.0});
      worst_backend = std::max(worst_backend, std::abs(scored.entries[i].score - s) /
                                                  (1.0 + std::abs(s)));
      ++n;
    }
  }

  // One-component mixture versus plain PLDA through the CLI.
  WriteEmbeddings(set, P("c4.tsv"), EmbeddingFormat::kTsv);
  WriteTrials(MakeTrials(set, 500, 2000, 3, 7), P("c4.trials"), P("c4.models"));
  TrainResult plda = TrainPlda(set, opts);
  plda.model.Save(P("c4_plda.json"));
  PldaMixture single({{"all", plda.model}});
  single.Save(P("c4_mix1.json"));
  const std::vector<std::string> common = {
      "--embeddings", P("c4.tsv"), "--trials", P("c4.trials"), "--models", P("c4.models")};
  auto run = [&](const std::string &backend, const std::string &model,
                 const std::string &out) {
    std::vector<std::string> args = {"score", "--backend", backend, "--model", model,
                                     "--out", out};
    args.insert(args.end(), common.begin(), common.end());
    return RunCli(args, P("c4_" + backend)).exit_code;
  };
  bool cli_ok = run("plda", P("c4_plda.json"), P("c4_plda.scores")) == 0 &&
                run("mixture", P("c4_mix1.json"), P("c4_mix1.scores")) == 0;
  bool identical = cli_ok && !Slurp(P("c4_plda.scores")).empty() &&
                   Slurp(P("c4_plda.scores")) == Slurp(P("c4_mix1.scores"));
  bool pass = worst_sum <= 1e-12 && min_weight >= 0.0 && worst_convex == 0.0 &&
              worst_backend <= 1e-9 && identical;
  return {pass, StrCat(n, " trials, max |sum w - 1| = ", Fmt(worst_sum),
                       ", min weight = ", Fmt(min_weight),
                       ", convexity violation = ", Fmt(worst_convex),
                       ", backend vs direct = ", Fmt(worst_backend),
                       ", CLI one-component bytes ", identical ? "identical" : "DIFFER")};
}

// 5. EM recovers B and W, with a non-decreasing log-likelihood.
Outcome EmRecovery() {
  Timer timer;
  const int d = 20;
  // Sampling error of the estimated B grows like tr(B + W/n) / |B|_F, so the
  // between-speaker spectrum decays quickly and dominates W.
  const char *env_seed = std::getenv("SVBACK_C5_SEED");
  const std::uint64_t seed = env_seed ? std::strtoull(env_seed, nullptr, 10) : 505;
  Rng rng(seed);
  Matrix q = RandomOrthonormal(rng, d, d);
  Vector ev(d);
  for (int k = 0; k < d; ++k) ev(k) = 4.0 * std::pow(0.5, k);
  Matrix b = q * ev.asDiagonal() * q.transpose();
  b = 0.5 * (b + b.transpose());
  Matrix w = RandomSpd(rng, d, 0.5, 1.5);
  SynthSpec spec = BaseSpec(d, 1000, 8, seed * 10);
  spec.between = b;
  spec.within = w;
  EmbeddingSet set = Sample(spec);
  TrainOptions opts;
  opts.iterations = 500;
  TrainResult r = TrainPlda(set, opts);
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < r.loglik.size(); ++i)
    worst_drop = std::max(worst_drop, r.loglik[i - 1] - r.loglik[i]);
  const double err_b = (r.model.Between() - b).norm() / b.norm();
  const double err_w = (r.model.Within() - w).norm() / w.norm();
  const double secs = timer.Seconds();
  bool pass = err_b < 0.10 && err_w < 0.10 && worst_drop <= 1e-8 && secs < 60.0;
  return {pass, StrCat("rel. Frobenius error B = ", Fmt(err_b), ", W = ", Fmt(err_w),
                       ", ", r.model.iterations_run, " iterations, largest log-lik decrease = ",
                       Fmt(worst_drop), ", ", Fmt(secs), " s")};
}

// 6. Pooled PLDA, language mixture and gender NAP + mixture on a fixed
// synthetic benchmark. Language, gender and channel shifts sit in the first
// five axes, which carry little speaker variance.
SynthSpec BenchmarkSpec(int speakers, int sessions, std::uint64_t seed) {
  SynthSpec spec = ThreeLanguageSpec(20, speakers, sessions, seed);
  Vector bdiag = Vector::Constant(20, 0.3);
  bdiag.head(5).setConstant(0.05);
  spec.between = bdiag.asDiagonal();
  spec.within = 0.5 * Matrix::Identity(20, 20);
  return spec;
}

struct PipelineResult {
  double eer = 0.0;
  double min_c = 0.0;
  double seconds = 0.0;
};

PipelineResult RunPipeline(const std::string &recipe, bool mixture,
                           const EmbeddingSet &train, const EmbeddingSet &eval,
                           const TrialList &trials) {
  Timer timer;
  PreprocessChain chain;
  if (!recipe.empty()) chain = FitChain(ParseRecipe(recipe), train);
  EmbeddingSet tr = chain.Empty() ? train : ApplyChain(chain, train);
  EmbeddingSet ev = chain.Empty() ? eval : ApplyChain(chain, eval);
  TrainOptions opts;
  opts.iterations = 20;
  std::unique_ptr<MixtureBackend> backend;
  if (mixture)
    backend = std::make_unique<MixtureBackend>(TrainMixture(tr, {"eng", "cmn", "yue"}, opts));
  else
    backend = std::make_unique<MixtureBackend>(TrainPlda(tr, opts).model);
  ScoreSet scores = ScoreTrials(*backend, trials, ev);
  MetricReport rep = Evaluate(scores, CostParams::Default());
  return {rep.eer, rep.min_c, timer.Seconds()};
}

Outcome Benchmark() {
  EmbeddingSet train = Sample(BenchmarkSpec(2000, 8, 6060));
  EmbeddingSet eval = Sample(BenchmarkSpec(2000, 6, 6161));
  // Every synthetic speaker has one language, so a cross-language pair is
  // always a nontarget. The benchmark therefore draws nontargets matched in
  // gender and language; the unmatched list is reported for reference.
  TrialList trials = MakeTrials(eval, 2000, 18000, 3, 6262, true, true);
  PipelineResult pooled = RunPipeline("", false, train, eval, trials);
  PipelineResult mix = RunPipeline("", true, train, eval, trials);
  PipelineResult nap = RunPipeline("nap:gender:1", true, train, eval, trials);
  PipelineResult full = RunPipeline("nap:gender:1,center,lda:16,ln", true, train, eval, trials);
  TrialList open_trials = MakeTrials(eval, 2000, 18000, 3, 6262, true, false);
  PipelineResult open_pooled = RunPipeline("", false, train, eval, open_trials);
  PipelineResult open_mix = RunPipeline("", true, train, eval, open_trials);
  double slowest = std::max({pooled.seconds, mix.seconds, nap.seconds, full.seconds});
  bool pass = mix.eer <= pooled.eer && nap.eer <= mix.eer && slowest < 120.0;
  auto show = [](const char *name, const PipelineResult &r) {
    return StrCat(name, " EER ", Fmt(100 * r.eer), "% minC ", Fmt(r.min_c), " (",
                  Fmt(r.seconds), " s)");
  };
  return {pass, StrCat(show("pooled", pooled), "; ", show("mixture", mix), "; ",
                       show("nap+mixture", nap), "; ", show("nap+center+lda+ln+mixture", full),
                       "; reference with cross-language nontargets: pooled EER ",
                       Fmt(100 * open_pooled.eer), "%, mixture EER ", Fmt(100 * open_mix.eer),
                       "%")};
}

// Between-class covariance of per-gender means, weighted by class size.
Matrix BetweenGender(const Matrix &x, const EmbeddingSet &set) {
  auto groups = GroupByLabel(set, LabelKind::kGender);
  Vector global = x.colwise().mean().transpose();
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  for (const auto &[g, idx] : groups) {
    Vector m = Vector::Zero(x.cols());
    for (std::size_t i : idx) m += x.row(static_cast<Eigen::Index>(i)).transpose();
    m /= static_cast<double>(idx.size());
    s += static_cast<double>(idx.size()) * (m - global) * (m - global).transpose();
  }
  return s / static_cast<double>(x.rows());
}

// 7. Gender NAP removes the between-gender direction and is idempotent.
Outcome NapCorrectness() {
  Rng rng(707);
  SynthSpec spec = BaseSpec(12, 1500, 4, 7070);
  spec.gender_shift = 2.0 * rng.NormalVector(12).normalized();
  spec.languages = {{"eng", rng.NormalVector(12), 0.5}, {"cmn", rng.NormalVector(12), 0.5}};
  EmbeddingSet set = Sample(spec);
  Transform nap = FitNap(set, LabelKind::kGender, 1);
  Matrix after = nap.ApplyRows(set.Vectors());
  Eigen::SelfAdjointEigenSolver<Matrix> before_es(BetweenGender(set.Vectors(), set));
  Eigen::SelfAdjointEigenSolver<Matrix> after_es(BetweenGender(after, set));
  const double top_before = before_es.eigenvalues().maxCoeff();
  const double top_after = std::max(after_es.eigenvalues().maxCoeff(), 0.0);
  const double ratio = top_after / top_before;
  const double idem = (nap.ApplyRows(after) - after).cwiseAbs().maxCoeff();
  return {ratio < 1e-10 && idem <= 1e-10,
          StrCat("top eigenvalue before ", Fmt(top_before), ", after/before = ",
                 Fmt(ratio), ", max |P(Px) - Px| = ", Fmt(idem))};
}

// 8. EER and min_C against the exhaustive sweep.
Outcome MetricOracle() {
  Rng rng(808);
  double worst_eer = 0.0;
  int cost_mismatch = 0;
  CostParams params = CostParams::Default();
  for (int rep = 0; rep < 100; ++rep) {
    LabeledScores s;
    const bool ties = rep % 2 == 1;
    for (int i = 0; i < 10000; ++i) {
      const bool target = i < 1000 + 20 * rep;
      double x = rng.Normal() + (target ? 2.0 : 0.0);
      if (ties) x = std::round(x * 8.0) / 8.0;
      (target ? s.target : s.nontarget).push_back(x);
    }
    auto pts = SweepOracle(s.target, s.nontarget);
    worst_eer = std::max(worst_eer, std::abs(ComputeEer(s).eer - SweepEer(pts)));
    std::vector<double> per_point;
    double min_c = ComputeMinCost(s, params, &per_point);
    double ref = 0.0;
    for (std::size_t k = 0; k < params.points.size(); ++k) {
      const auto &op = params.points[k];
      double r = SweepMinCost(pts, op.p_target, op.c_miss, op.c_fa);
      if (per_point[k] != r) ++cost_mismatch;
      ref += r;
    }
    ref /= static_cast<double>(params.points.size());
    if (min_c != ref) ++cost_mismatch;
  }
  LabeledScores perfect;
  for (int i = 0; i < 5000; ++i) {
    perfect.target.push_back(1.0 + rng.Uniform());
    perfect.nontarget.push_back(-rng.Uniform());
  }
  const double perfect_eer = ComputeEer(perfect).eer;
  const double perfect_c = ComputeMinCost(perfect, params);
  bool pass = worst_eer <= 1e-12 && cost_mismatch == 0 && perfect_eer == 0.0 &&
              perfect_c == 0.0;
  return {pass, StrCat("100 lists of 10k trials, max EER diff = ", Fmt(worst_eer),
                       ", min_C mismatches = ", cost_mismatch, "; perfect separation EER ",
                       perfect_eer, " min_C ", perfect_c)};
}

// 9. Spectra decomposition identity and construction levels.
Outcome Spectra() {
  std::vector<std::pair<std::string, EmbeddingSet>> sets;
  SynthSpec iso = BaseSpec(4, 20000, 8, 909);
  const double b = 1.0, w = 0.5, n = 8.0;
  EmbeddingSet iso_set = Sample(iso);
  sets.emplace_back("isotropic", iso_set);
  EmbeddingSet shifted = Sample(ThreeLanguageSpec(10, 1500, 5, 910));
  sets.emplace_back("three-language", shifted);
  sets.emplace_back("after nap+lda+ln",
                    ApplyChain(FitChain(ParseRecipe("nap:gender:1,center,lda:6,ln"), shifted),
                               shifted));
  {
    // Unbalanced session counts, anisotropic random data.
    Rng rng(911);
    Matrix a = rng.NormalMatrix(6, 6);
    std::vector<std::string> ids;
    std::vector<SegmentMeta> meta;
    std::vector<Vector> rows;
    for (int s = 0; s < 800; ++s) {
      Vector y = a * rng.NormalVector(6);
      const int count = 1 + static_cast<int>(rng.Below(10));
      for (int j = 0; j < count; ++j) {
        rows.push_back(y + rng.NormalVector(6).cwiseProduct(Vector::LinSpaced(6, 0.2, 2.0)));
        ids.push_back(StrCat("u", s, "_", j));
        SegmentMeta m;
        m.speaker_id = StrCat("u", s);
        meta.push_back(m);
      }
    }
    Matrix x(static_cast<Eigen::Index>(rows.size()), 6);
    for (std::size_t i = 0; i < rows.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    sets.emplace_back("unbalanced", EmbeddingSet(ids, x, meta));
  }
  double worst_identity = 0.0;
  for (const auto &[name, set] : sets) {
    CovarianceSpectra sp = ComputeCovarianceSpectra(set);
    worst_identity = std::max(
        worst_identity, (sp.within_diag + sp.across_diag - sp.total_eigs).cwiseAbs().maxCoeff());
  }
  CovarianceSpectra sp = ComputeCovarianceSpectra(iso_set);
  const double within_level = w * (n - 1.0) / n, across_level = b + w / n;
  double worst_level = 0.0;
  for (Eigen::Index i = 0; i < sp.total_eigs.size(); ++i) {
    worst_level = std::max(worst_level, std::abs(sp.within_diag(i) / within_level - 1.0));
    worst_level = std::max(worst_level, std::abs(sp.across_diag(i) / across_level - 1.0));
  }
  return {worst_identity <= 1e-8 && worst_level <= 0.05,
          StrCat(sets.size(), " datasets, max |within + across - total| = ",
                 Fmt(worst_identity), "; isotropic levels ", within_level, " / ",
                 across_level, ", max relative deviation ", Fmt(worst_level))};
}

// 10. Channel normalization, hand-checked s-norm and the combined order.
Outcome Normalization() {
  // Channel statistics applied to the set they were fitted on.
  Rng rng(1010);
  ScoreSet dev;
  const TrialType types[] = {TrialType::kTelTel, TrialType::kMicMic, TrialType::kTelMic,
                             TrialType::kMicTel};
  for (int i = 0; i < 8000; ++i) {
    ScoreEntry e;
    e.model_id = StrCat("m", i);
    e.test_id = StrCat("t", i);
    const int k = static_cast<int>(rng.Below(4));
    e.type = types[k];
    e.score = 3.0 * k - 1.0 + (0.5 + k) * rng.Normal();
    dev.entries.push_back(e);
  }
  ScoreSet normed = ChannelNorm(dev, FitChannelStats(dev));
  double worst_moment = 0.0;
  for (TrialType t : types) {
    std::vector<double> v;
    for (const auto &e : normed.entries)
      if (e.type == t) v.push_back(e.score);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    worst_moment = std::max({worst_moment, std::abs(mean), std::abs(sd - 1.0)});
  }

  // Three-speaker cohort on the unit axes, cosine scoring. The enrollment
  // vector (3, 4, 0)/5 scores 0.6, 0.8, 0 against the cohort; the test
  // vector e3 scores 0, 0, 1; the trial score is 0. With sample standard
  // deviations the s-norm score is 1/2 (-7/sqrt(39) - 1/sqrt(3)).
  Matrix cohort_rows = Matrix::Identity(3, 3);
  std::vector<SegmentMeta> cohort_meta(3);
  for (int i = 0; i < 3; ++i) cohort_meta[i].speaker_id = StrCat("c", i);
  EmbeddingSet cohort_set({"c0_a", "c1_a", "c2_a"}, cohort_rows, cohort_meta);
  Matrix trial_rows(2, 3);
  trial_rows << 0.6, 0.8, 0.0, 0.0, 0.0, 1.0;
  EmbeddingSet rep({"enr", "tst"}, trial_rows);
  TrialList trials;
  trials.models["m"] = {"enr"};
  trials.trials.push_back({"m", "tst", TrialKey::kUnknown, TrialType::kUnknown});
  CosineBackend backend(3);
  CohortScores cs = ScoreCohort(backend, trials, rep, BuildCohort(cohort_set));
  ScoreSet raw = ScoreTrials(backend, trials, rep);
  ScoreSet sn = AdaptiveSnorm(raw, cs.models, cs.tests, 3);
  const double hand = 0.5 * (-7.0 / std::sqrt(39.0) - 1.0 / std::sqrt(3.0));
  const double hand_err = std::abs(sn.entries[0].score - hand);

  // Combined path through the CLI: s-norm output, dumped intermediate and
  // channel norm applied to the dump must agree byte for byte.
  SynthSpec spec = ThreeLanguageSpec(8, 150, 6, 1011);
  EmbeddingSet set = Sample(spec);
  WriteEmbeddings(set, P("c10.tsv"), EmbeddingFormat::kTsv);
  TrialList tl = MakeTrials(set, 200, 800, 1, 1012);
  WriteTrials(tl, P("c10.trials"), P("c10.models"));
  std::ostringstream model_cohort, test_cohort;
  for (const auto &[model, segs] : tl.models)
    for (int i = 0; i < 40; ++i) model_cohort << model << '\t' << rng.Normal() << '\n';
  std::map<std::string, bool> seen;
  for (const auto &t : tl.trials) {
    if (seen[t.test_id]) continue;
    seen[t.test_id] = true;
    for (int i = 0; i < 40; ++i) test_cohort << t.test_id << '\t' << rng.Normal() << '\n';
  }
  WriteText(P("c10.cm"), model_cohort.str());
  WriteText(P("c10.ct"), test_cohort.str());
  WriteScores(dev, P("c10.dev"));
  bool cli_ok =
      RunCli({"score", "--backend", "cosine", "--embeddings", P("c10.tsv"), "--trials",
              P("c10.trials"), "--models", P("c10.models"), "--out", P("c10.raw")},
             P("c10_score")).exit_code == 0;
  const std::vector<std::string> cohort_args = {
      "--top-n", "20", "--cohort-model-scores", P("c10.cm"), "--cohort-test-scores",
      P("c10.ct")};
  auto with = [&](std::vector<std::string> a, bool cohort) {
    if (cohort) a.insert(a.end(), cohort_args.begin(), cohort_args.end());
    return a;
  };
  cli_ok = cli_ok &&
           RunCli(with({"normalize", "--snorm", "--scores", P("c10.raw"), "--out",
                        P("c10.snorm")}, true), P("c10_n1")).exit_code == 0 &&
           RunCli(with({"normalize", "--snorm", "--channel-norm", "--dev-scores",
                        P("c10.dev"), "--dump-intermediate", P("c10.mid"), "--scores",
                        P("c10.raw"), "--out", P("c10.both")}, true),
                  P("c10_n2")).exit_code == 0 &&
           RunCli({"normalize", "--channel-norm", "--dev-scores", P("c10.dev"), "--scores",
                   P("c10.mid"), "--out", P("c10.chn")}, P("c10_n3")).exit_code == 0 &&
           RunCli({"normalize", "--channel-norm", "--dev-scores", P("c10.dev"), "--scores",
                   P("c10.raw"), "--out", P("c10.chn_first")}, P("c10_n4")).exit_code == 0 &&
           RunCli(with({"normalize", "--snorm", "--scores", P("c10.chn_first"), "--out",
                        P("c10.reversed")}, true), P("c10_n5")).exit_code == 0;
  const bool dump_is_snorm = cli_ok && Slurp(P("c10.mid")) == Slurp(P("c10.snorm"));
  // Score files carry 9 significant digits, so channel norm applied to the
  // reloaded dump can differ from the in-memory result in the last digit.
  auto max_rel_diff = [](const std::string &a, const std::string &b) {
    ScoreSet x = LoadScores(a), y = LoadScores(b);
    if (x.entries.size() != y.entries.size()) return 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.entries.size(); ++i) {
      if (x.entries[i].model_id != y.entries[i].model_id ||
          x.entries[i].test_id != y.entries[i].test_id)
        return 1.0;
      worst = std::max(worst, std::abs(x.entries[i].score - y.entries[i].score) /
                                  std::max(1.0, std::abs(x.entries[i].score)));
    }
    return worst;
  };
  const double dump_diff = cli_ok ? max_rel_diff(P("c10.both"), P("c10.chn")) : 1.0;
  const double reversed_diff = cli_ok ? max_rel_diff(P("c10.both"), P("c10.reversed")) : 0.0;
  const bool final_is_chn_of_dump = dump_diff <= 1e-7;
  const bool order_matters = reversed_diff > 1e-6;
  bool pass = worst_moment <= 1e-10 && hand_err <= 1e-12 && dump_is_snorm &&
              final_is_chn_of_dump && order_matters;
  return {pass, StrCat("channel norm max |mean|, |std - 1| = ", Fmt(worst_moment),
                       "; s-norm vs hand = ", Fmt(hand_err), "; dump == s-norm output: ",
                       dump_is_snorm ? "yes" : "no",
                       "; final vs channel norm of dump max rel. diff ", Fmt(dump_diff),
                       "; channel norm then s-norm differs by ", Fmt(reversed_diff))};
}

// 11. One million mixture trials at d = 100 through the CLI.
Outcome Performance() {
  const int d = 100, n_enroll_segs = 40000, n_test_segs = 80000, n_models = 20000;
  Rng rng(1111);
  std::vector<MixtureComponent> comps;
  const char *names[] = {"eng", "cmn", "yue"};
  for (int c = 0; c < 3; ++c)
    comps.push_back({names[c], PldaModel(0.3 * rng.NormalVector(d), RandomSpd(rng, d, 0.1, 3.0),
                                         RandomSpd(rng, d, 0.3, 1.5))});
  PldaMixture(comps).Save(P("c11_mix.json"));
  std::vector<std::string> ids;
  ids.reserve(n_enroll_segs + n_test_segs);
  for (int i = 0; i < n_enroll_segs + n_test_segs; ++i) ids.push_back(StrCat("seg", i));
  Matrix x(n_enroll_segs + n_test_segs, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = rng.NormalVector(d).transpose();
  WriteEmbeddings(EmbeddingSet(ids, std::move(x)), P("c11.f32"), EmbeddingFormat::kRaw);
  TrialList tl;
  int next_seg = 0;
  for (int m = 0; m < n_models; ++m) {
    const int count = m % 2 == 0 ? 1 : 3;
    auto &segs = tl.models[StrCat("m", m)];
    for (int j = 0; j < count; ++j) segs.push_back(ids[static_cast<std::size_t>(next_seg++ % n_enroll_segs)]);
    for (int j = 0; j < 50; ++j) {
      const int t = n_enroll_segs + (m * 7919 + j * 1601) % n_test_segs;
      tl.trials.push_back({StrCat("m", m), ids[static_cast<std::size_t>(t)],
                           TrialKey::kUnknown, TrialType::kUnknown});
    }
  }
  WriteTrials(tl, P("c11.trials"), P("c11.models"));
  auto run = [&](int threads, const std::string &out) {
    return RunCli({"--threads", std::to_string(threads), "score", "--backend", "mixture",
                   "--model", P("c11_mix.json"), "--embeddings", P("c11.f32"), "--trials",
                   P("c11.trials"), "--models", P("c11.models"), "--out", out},
                  P(StrCat("c11_t", threads)));
  };
  ChildResult r8 = run(8, P("c11_t8.scores"));
  ChildResult r1 = run(1, P("c11_t1.scores"));
  ChildResult r3 = run(3, P("c11_t3.scores"));
  const std::string s8 = Slurp(P("c11_t8.scores"));
  const bool ok = r8.exit_code == 0 && r1.exit_code == 0 && r3.exit_code == 0;
  const bool identical = ok && !s8.empty() && s8 == Slurp(P("c11_t1.scores")) &&
                         s8 == Slurp(P("c11_t3.scores"));
  const long lines = std::count(s8.begin(), s8.end(), '\n');
  const double rss_mb = static_cast<double>(std::max({r8.max_rss_kb, r1.max_rss_kb, r3.max_rss_kb})) / 1024.0;
  const bool pass = ok && identical && r8.seconds < 30.0 && rss_mb < 2048.0;
  return {pass, StrCat(tl.trials.size(), " trials (", lines, " output lines), ",
                       std::thread::hardware_concurrency(), " hardware threads; wall time ",
                       Fmt(r8.seconds), " s with --threads 8, ", Fmt(r1.seconds),
                       " s with --threads 1; peak RSS ", Fmt(rss_mb),
                       " MB; outputs for 1/3/8 threads ", identical ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char **argv) {
  int only = 0;
  bool keep = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--keep") {
      keep = true;
    } else {
      std::cerr << "usage: acceptance-test [--only N] [--keep]\n";
      return 1;
    }
  }
  SetWarningSink([](std::string_view) {});
  WorkDir() = TempDir("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"PLDA LLR matches stacked joint-Gaussian oracle", PldaOracle},
      {"logit-space cosine equals compact-factor cosine", LogitSpace},
      {"fused compact score equals fused-logit cosine", Fusion},
      {"mixture weights, convexity, one-component equivalence", MixtureContract},
      {"EM recovers B and W with monotone log-likelihood", EmRecovery},
      {"mixture and NAP improve EER on synthetic benchmark", Benchmark},
      {"gender NAP removes between-gender variance, idempotent", NapCorrectness},
      {"EER and min_C match exhaustive sweep", MetricOracle},
      {"covariance spectra identity and isotropic levels", Spectra},
      {"channel norm, s-norm arithmetic, s-norm before channel norm", Normalization},
      {"1M mixture trials at d=100: time, memory, thread invariance", Performance},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (only != 0 && only != number) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, StrCat("exception: ", e.what())};
    }
    failures += !o.pass;
    std::cout << "CRITERION " << number << (o.pass ? " PASS: " : " FAIL: ")
              << criteria[i].first << " (" << o.detail << ")" << std::endl;
  }
  if (!keep) fs::remove_all(WorkDir());
  else std::cout << "work files kept in " << WorkDir().string() << std::endl;
  return failures == 0 ? 0 : 1;
}
