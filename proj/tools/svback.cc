// tools/svback.cc

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

// Command-line front end: fit-chain, train, score, normalize, eval, diagnose,
// synth. Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numerical
// failure. Failures print one line "svback-error<TAB>kind=..<TAB>code=..<TAB>
// message=.." on stderr.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
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

namespace fs = std::filesystem;
using namespace svback;

namespace {

// Options from --config; command-line flags take precedence.
struct PipelineConfig {
  std::string recipe;
  std::string backend;
  std::vector<std::string> languages;
  std::string enroll_mode;
  int iterations = -1;
  int subspace_rank = -1;
  bool snorm = false;
  int top_n = kDefaultTopN;
  std::string cohort;
  bool channel_norm = false;
  std::string channel_stats;
  std::string dev_scores;
  std::optional<CostParams> cost;
  std::optional<std::uint64_t> seed;
  std::string format;
  int threads = 0;
};

void CheckKeys(const nlohmann::json &j, const std::set<std::string> &allowed,
               const std::string &where) {
  if (!j.is_object()) throw UsageError(StrCat(where, " must be a JSON object"));
  for (const auto &[key, value] : j.items())
    if (!allowed.count(key))
      throw UsageError(StrCat("unknown key '", key, "' in ", where));
}

PipelineConfig LoadConfig(const std::string &path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  nlohmann::json j;
  try {
    j = ReadJsonFile(path);
  } catch (const DataError &e) {
    throw UsageError(e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string &p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).string();
  };
  CheckKeys(j,
            {"recipe", "backend", "languages", "enroll_mode", "plda", "snorm",
             "channel_norm", "cost", "seed", "format", "threads"},
            "config");
  try {
    cfg.recipe = j.value("recipe", std::string());
    cfg.backend = j.value("backend", std::string());
    if (j.contains("languages"))
      cfg.languages = j.at("languages").get<std::vector<std::string>>();
    cfg.enroll_mode = j.value("enroll_mode", std::string());
    if (j.contains("plda")) {
      const auto &p = j.at("plda");
      CheckKeys(p, {"iterations", "subspace_rank"}, "config.plda");
      cfg.iterations = p.value("iterations", -1);
      cfg.subspace_rank = p.value("subspace_rank", -1);
    }
    if (j.contains("snorm")) {
      const auto &s = j.at("snorm");
      CheckKeys(s, {"enabled", "top_n", "cohort"}, "config.snorm");
      cfg.snorm = s.value("enabled", false);
      cfg.top_n = s.value("top_n", kDefaultTopN);
      cfg.cohort = resolve(s.value("cohort", std::string()));
    }
    if (j.contains("channel_norm")) {
      const auto &c = j.at("channel_norm");
      CheckKeys(c, {"enabled", "stats_path", "dev_scores"}, "config.channel_norm");
      cfg.channel_norm = c.value("enabled", false);
      cfg.channel_stats = resolve(c.value("stats_path", std::string()));
      cfg.dev_scores = resolve(c.value("dev_scores", std::string()));
    }
    if (j.contains("cost")) cfg.cost = CostParams::FromJson(j.at("cost"));
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.format = j.value("format", std::string());
    cfg.threads = j.value("threads", 0);
  } catch (const nlohmann::json::exception &e) {
    throw UsageError(StrCat("bad config ", path, ": ", e.what()));
  }
  return cfg;
}

std::vector<std::string> SplitList(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct Globals {
  std::string config_path;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string format;
  PipelineConfig cfg;

  EmbeddingFormat Format(const std::string &path) const {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ".f32") == 0)
      return EmbeddingFormat::kRaw;
    const std::string &f = !format.empty() ? format : cfg.format;
    return f.empty() ? EmbeddingFormat::kTsv : ParseEmbeddingFormat(f);
  }
  std::uint64_t Seed() const { return seed ? *seed : cfg.seed.value_or(0); }
};

EmbeddingSet LoadSet(const Globals &g, const std::string &path,
                     const std::string &meta = "") {
  if (path.empty()) throw UsageError("missing embeddings path");
  return LoadEmbeddings(path, g.Format(path), meta);
}

PreprocessChain LoadChainOrEmpty(const std::string &path) {
  return path.empty() ? PreprocessChain() : PreprocessChain::Load(path);
}

EnrollMode ParseEnrollMode(const std::string &s) {
  if (s.empty() || s == "set") return EnrollMode::kSetLikelihood;
  if (s == "average") return EnrollMode::kAverage;
  throw UsageError(StrCat("enroll mode must be set|average, got '", s, "'"));
}

std::string Pick(const std::string &flag, const std::string &config) {
  return flag.empty() ? config : flag;
}

// ---------------------------------------------------------------------------
// fit-chain

struct FitChainArgs {
  std::string train, meta, recipe, out, factor, head;
};

void CmdFitChain(const Globals &g, const FitChainArgs &a) {
  const std::string recipe_text = Pick(a.recipe, g.cfg.recipe);
  if (a.out.empty()) throw UsageError("fit-chain needs --out");
  std::vector<RecipeStep> recipe = ParseRecipe(recipe_text);
  EmbeddingSet train = LoadSet(g, a.train, a.meta);
  PreprocessChain prefix;
  if (!a.factor.empty() || !a.head.empty()) {
    CompactFactor f = !a.factor.empty()
                          ? CompactFactor::Load(a.factor)
                          : ComputeCompactFactor(ClassifierHead::Load(a.head));
    prefix.Append(Transform::LinearMap(f.m).SetTag("cl-factor"));
    prefix.Append(Transform::LengthNorm(f.m.rows()).SetTag("ln"));
  }
  PreprocessChain chain = FitChain(recipe, train, std::move(prefix));
  chain.Save(a.out);
  Eigen::Index dim = train.Dim();
  for (const auto &step : chain.Steps()) {
    std::cout << step.Tag() << '\t' << dim << " -> " << step.OutDim() << '\n';
    dim = step.OutDim();
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string chain, train, meta, backend, languages, out;
  int iterations = -1, rank = -1;
};

void CmdTrain(const Globals &g, const TrainArgs &a) {
  const std::string backend = Pick(a.backend, g.cfg.backend);
  if (backend != "plda" && backend != "mixture")
    throw UsageError(StrCat("train supports backends plda|mixture, got '",
                            backend, "'"));
  if (a.out.empty()) throw UsageError("train needs --out");
  TrainOptions opts;
  opts.seed = g.Seed();
  int iters = a.iterations >= 0 ? a.iterations : g.cfg.iterations;
  if (iters >= 0) opts.iterations = iters;
  int rank = a.rank >= 0 ? a.rank : g.cfg.subspace_rank;
  if (rank >= 0) opts.subspace_rank = rank;
  EmbeddingSet train = ApplyChain(LoadChainOrEmpty(a.chain), LoadSet(g, a.train, a.meta));
  if (backend == "plda") {
    TrainResult r = TrainPlda(train, opts);
    r.model.Save(a.out);
    std::cout << "plda\tdim=" << r.model.Dim() << "\titerations="
              << r.model.iterations_run << "\tloglik=" << r.model.final_loglik
              << '\n';
    return;
  }
  std::vector<std::string> langs =
      a.languages.empty() ? g.cfg.languages : SplitList(a.languages);
  if (langs.empty()) throw UsageError("mixture training needs --languages");
  PldaMixture mix = TrainMixture(train, langs, opts);
  mix.Save(a.out);
  std::cout << "plda_mixture\tcomponents=" << mix.NumComponents() << "\tdim="
            << mix.Dim() << '\n';
}

// ---------------------------------------------------------------------------
// score (and shared backend construction for normalize)

struct ScoreArgs {
  std::string backend, model, chain, embeddings, meta, trials, models, out;
  std::string dump_weights;
  std::string head, head2, factor, embeddings2;
  double w1 = 0.5, w2 = 0.5;
  std::string enroll_mode;
};

// Everything needed to turn embeddings into scores.
struct ScoringSetup {
  std::unique_ptr<ScoringBackend> backend;
  EmbeddingSet rep;  // representation the backend consumes
  EnrollMode mode = EnrollMode::kSetLikelihood;
  // Maps raw embeddings (e.g. cohort means) into `rep` space.
  std::function<Matrix(const Matrix &)> represent;
  std::string provenance;
};

nlohmann::json ReadModelFile(const std::string &path) {
  if (path.empty()) throw UsageError("--model is required for this backend");
  return ReadJsonFile(path);
}

ScoringSetup BuildScoring(const Globals &g, const ScoreArgs &a) {
  ScoringSetup s;
  const std::string backend = Pick(a.backend, g.cfg.backend);
  s.mode = ParseEnrollMode(Pick(a.enroll_mode, g.cfg.enroll_mode));
  EmbeddingSet raw = LoadSet(g, a.embeddings, a.meta);
  if (backend == "cosine-cl") {
    if (!a.chain.empty())
      throw UsageError("cosine-cl scores raw embeddings; drop --chain");
    CompactFactor f;
    if (!a.embeddings2.empty()) {
      if (a.head.empty() || a.head2.empty())
        throw UsageError("fused cosine-cl needs --head and --head2");
      EmbeddingSet raw2 = LoadSet(g, a.embeddings2);
      f = FuseHeads(ClassifierHead::Load(a.head), ClassifierHead::Load(a.head2));
      raw = FuseEmbeddingSets(raw, raw2, a.w1, a.w2);
      s.represent = [](const Matrix &) -> Matrix {
        throw UsageError("s-norm cohorts are not supported for fused scoring");
      };
    } else {
      if (!a.factor.empty()) {
        f = CompactFactor::Load(a.factor);
      } else if (!a.head.empty()) {
        f = ComputeCompactFactor(ClassifierHead::Load(a.head));
      } else {
        throw UsageError("cosine-cl needs --head or --factor");
      }
      s.represent = [f](const Matrix &m) { return ProjectCompactRows(f, m); };
    }
    s.rep = raw.WithVectors(ProjectCompactRows(f, raw.Vectors()));
    s.backend = std::make_unique<CosineBackend>(f.Dim());
    // Raw enrollment embeddings are averaged before projection; M is linear
    // so this equals averaging in the projected space.
    s.mode = EnrollMode::kAverage;
    s.provenance = "cosine-cl";
    return s;
  }
  PreprocessChain chain = LoadChainOrEmpty(a.chain);
  s.rep = ApplyChain(chain, raw);
  s.represent = [chain](const Matrix &m) { return chain.ApplyRows(m); };
  if (backend == "cosine") {
    s.backend = std::make_unique<CosineBackend>(s.rep.Dim());
    s.provenance = "cosine";
  } else if (backend == "plda" || backend == "mixture") {
    nlohmann::json j = ReadModelFile(a.model);
    const std::string type = j.value("type", "");
    if (backend == "plda") {
      if (type != "plda")
        throw UsageError(StrCat("backend plda needs a plda model, got '", type, "'"));
      s.backend = std::make_unique<MixtureBackend>(PldaModel::FromJson(j));
    } else {
      if (type != "plda_mixture")
        throw UsageError(StrCat("backend mixture needs a plda_mixture model, got '",
                                type, "'"));
      s.backend = std::make_unique<MixtureBackend>(PldaMixture::FromJson(j));
    }
    if (s.backend->Dim() != s.rep.Dim())
      throw DataError(StrCat("model dimension ", s.backend->Dim(),
                             " does not match chain output ", s.rep.Dim()));
    s.provenance = backend;
  } else {
    throw UsageError(StrCat("unknown backend '", backend,
                            "' (plda|mixture|cosine|cosine-cl)"));
  }
  return s;
}

TrialList LoadTrialArgs(const std::string &trials, const std::string &models) {
  if (trials.empty() || models.empty())
    throw UsageError("need --trials and --models");
  return LoadTrials(trials, models);
}

// Per trial and component: log p(R_e | M_p), log p(R_t | M_p) and the trial
// weight, before any normalization over components.
void DumpMixtureWeights(const ScoringSetup &s, const TrialList &trials,
                        const std::string &path) {
  const auto *backend = dynamic_cast<const MixtureBackend *>(s.backend.get());
  if (!backend) throw UsageError("--dump-weights needs the plda or mixture backend");
  const PldaMixture &mix = backend->Mixture();
  auto set_rows = [&](const std::vector<std::string> &ids) {
    Matrix rows(static_cast<Eigen::Index>(ids.size()), s.rep.Dim());
    for (std::size_t i = 0; i < ids.size(); ++i)
      rows.row(static_cast<Eigen::Index>(i)) =
          s.rep.Vectors().row(static_cast<Eigen::Index>(s.rep.IndexOf(ids[i])));
    if (s.mode == EnrollMode::kAverage && rows.rows() > 1)
      return Matrix(rows.colwise().mean());
    return rows;
  };
  struct SetInfo {
    Vector loglik, posterior;
  };
  auto info = [&](const Matrix &rows) {
    SetInfo out;
    out.loglik.resize(static_cast<Eigen::Index>(mix.NumComponents()));
    for (std::size_t p = 0; p < mix.NumComponents(); ++p)
      out.loglik(static_cast<Eigen::Index>(p)) =
          mix.Components()[p].model.MarginalLogLikelihood(rows);
    out.posterior = mix.LanguageWeights(rows);
    return out;
  };
  std::map<std::string, SetInfo> models, tests;
  std::ofstream os(path);
  if (!os) throw DataError(StrCat("cannot write ", path));
  os << "model_id\ttest_segment_id";
  for (const auto &c : mix.Components())
    os << "\tloglik_enroll:" << c.language << "\tloglik_test:" << c.language
       << "\tweight:" << c.language;
  os << '\n';
  char buf[32];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    os << '\t' << buf;
  };
  for (const auto &t : trials.trials) {
    auto m = models.find(t.model_id);
    if (m == models.end())
      m = models.emplace(t.model_id, info(set_rows(trials.models.at(t.model_id)))).first;
    auto x = tests.find(t.test_id);
    if (x == tests.end()) x = tests.emplace(t.test_id, info(set_rows({t.test_id}))).first;
    os << t.model_id << '\t' << t.test_id;
    for (Eigen::Index p = 0; p < m->second.loglik.size(); ++p) {
      put(m->second.loglik(p));
      put(x->second.loglik(p));
      put(0.5 * (m->second.posterior(p) + x->second.posterior(p)));
    }
    os << '\n';
  }
  os.flush();
  if (!os) throw DataError(StrCat("I/O failure writing ", path));
}

void CmdScore(const Globals &g, const ScoreArgs &a) {
  if (a.out.empty()) throw UsageError("score needs --out");
  TrialList trials = LoadTrialArgs(a.trials, a.models);
  ScoringSetup s = BuildScoring(g, a);
  ScoreSet scores = ScoreTrials(*s.backend, trials, s.rep, s.mode, s.provenance);
  WriteScores(scores, a.out);
  if (!a.dump_weights.empty()) DumpMixtureWeights(s, trials, a.dump_weights);
}

// ---------------------------------------------------------------------------
// normalize

struct NormalizeArgs {
  ScoreArgs score;  // backend and data for cohort scoring
  std::string scores, out, cohort, cohort_meta, dump;
  std::string cohort_model_scores, cohort_test_scores;
  std::string dev_scores, channel_stats, save_stats;
  bool snorm = false, no_snorm = false, chnorm = false, no_chnorm = false;
  int top_n = 0;
};

// id <TAB> score lines, one per cohort score.
std::map<std::string, std::vector<double>> LoadCohortScoreList(
    const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DataError(StrCat("cannot open ", path));
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(StrCat(path, ":", n, ": expected 'id<TAB>score'"));
    std::string id = line.substr(0, tab), value = line.substr(tab + 1);
    auto tab2 = value.find('\t');
    if (tab2 != std::string::npos) value = value.substr(tab2 + 1);  // id cohort score
    char *end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0' || !std::isfinite(v))
      throw DataError(StrCat(path, ":", n, ": bad score '", value, "'"));
    out[id].push_back(v);
  }
  return out;
}

void CmdNormalize(const Globals &g, const NormalizeArgs &a) {
  if (a.scores.empty() || a.out.empty())
    throw UsageError("normalize needs --scores and --out");
  const bool snorm = a.snorm || (g.cfg.snorm && !a.no_snorm);
  const bool chnorm = a.chnorm || (g.cfg.channel_norm && !a.no_chnorm);
  const int top_n = a.top_n != 0 ? a.top_n : g.cfg.top_n;
  const std::string dev = Pick(a.dev_scores, g.cfg.dev_scores);
  const std::string stats_path = Pick(a.channel_stats, g.cfg.channel_stats);
  if (chnorm && dev.empty() && stats_path.empty())
    throw UsageError("channel normalization needs --dev-scores or --channel-stats");

  if (!snorm && !chnorm) {
    // Pass-through: copy bytes so the output is identical to the input.
    std::error_code ec;
    fs::copy_file(a.scores, a.out, fs::copy_options::overwrite_existing, ec);
    if (ec) throw DataError(StrCat("cannot copy ", a.scores, " to ", a.out));
    if (!a.dump.empty())
      fs::copy_file(a.scores, a.dump, fs::copy_options::overwrite_existing);
    return;
  }
  ScoreSet scores = LoadScores(a.scores);
  if (snorm) {
    std::map<std::string, std::vector<double>> enroll, test;
    if (!a.cohort_model_scores.empty() || !a.cohort_test_scores.empty()) {
      if (a.cohort_model_scores.empty() || a.cohort_test_scores.empty())
        throw UsageError("need both --cohort-model-scores and --cohort-test-scores");
      enroll = LoadCohortScoreList(a.cohort_model_scores);
      test = LoadCohortScoreList(a.cohort_test_scores);
    } else {
      const std::string cohort_path = Pick(a.cohort, g.cfg.cohort);
      if (cohort_path.empty())
        throw UsageError("s-norm needs --cohort embeddings or cohort score lists");
      TrialList trials = LoadTrialArgs(a.score.trials, a.score.models);
      ScoringSetup s = BuildScoring(g, a.score);
      Cohort cohort = BuildCohort(LoadSet(g, cohort_path, a.cohort_meta));
      if (top_n > 0 && cohort.Size() < static_cast<std::size_t>(top_n))
        Warn(StrCat("cohort has ", cohort.Size(), " speakers, fewer than top_n=",
                    top_n));
      cohort.vectors = s.represent(cohort.vectors);
      CohortScores cs = ScoreCohort(*s.backend, trials, s.rep, cohort, s.mode);
      enroll = std::move(cs.models);
      test = std::move(cs.tests);
    }
    scores = AdaptiveSnorm(scores, enroll, test, top_n);
    if (!a.dump.empty()) WriteScores(scores, a.dump);
  }
  if (chnorm) {
    ChannelStats stats = !stats_path.empty() && dev.empty()
                             ? ChannelStats::Load(stats_path)
                             : FitChannelStats(LoadScores(dev));
    if (!a.save_stats.empty()) stats.Save(a.save_stats);
    scores = ChannelNorm(scores, stats);
  }
  WriteScores(scores, a.out);
}

// ---------------------------------------------------------------------------
// eval, diagnose, synth

struct EvalArgs {
  std::string scores, cost, det;
};

void CmdEval(const Globals &g, const EvalArgs &a) {
  if (a.scores.empty()) throw UsageError("eval needs --scores");
  CostParams params = g.cfg.cost.value_or(CostParams::Default());
  if (!a.cost.empty()) {
    nlohmann::json j;
    try {
      j = ReadJsonFile(a.cost);
    } catch (const DataError &e) {
      throw UsageError(e.what());
    }
    params = CostParams::FromJson(j);
  }
  ScoreSet scores = LoadScores(a.scores);
  MetricReport report = Evaluate(scores, params);
  if (!a.det.empty()) WriteDetPoints(DetPoints(SplitByKey(scores)), a.det);
  std::cout << report.ToJson(params).dump(1) << '\n';
}

struct DiagnoseArgs {
  std::string chain, embeddings, meta, out;
};

void CmdDiagnose(const Globals &g, const DiagnoseArgs &a) {
  EmbeddingSet set = ApplyChain(LoadChainOrEmpty(a.chain),
                                LoadSet(g, a.embeddings, a.meta));
  CovarianceSpectra sp = ComputeCovarianceSpectra(set);
  std::ofstream file;
  std::ostream *os = &std::cout;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw DataError(StrCat("cannot write ", a.out));
    os = &file;
  }
  *os << "index\ttotal_eig\twithin_diag\tacross_diag\n";
  char buf[128];
  for (Eigen::Index i = 0; i < sp.total_eigs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%ld\t%.17g\t%.17g\t%.17g\n",
                  static_cast<long>(i), sp.total_eigs(i), sp.within_diag(i),
                  sp.across_diag(i));
    *os << buf;
  }
}

struct SynthArgs {
  std::string spec, out_prefix;
};

void CmdSynth(const Globals &g, const SynthArgs &a) {
  if (a.spec.empty() || a.out_prefix.empty())
    throw UsageError("synth needs --spec and --out-prefix");
  SynthSpec spec = SynthSpec::Load(a.spec);
  if (g.seed) spec.seed = *g.seed;
  EmbeddingSet set = Sample(spec);
  const bool raw = g.Format("") == EmbeddingFormat::kRaw;
  const std::string emb = a.out_prefix + (raw ? ".f32" : ".tsv");
  WriteEmbeddings(set, emb, raw ? EmbeddingFormat::kRaw : EmbeddingFormat::kTsv);
  std::cout << "embeddings\t" << emb << '\n';
  if (spec.trials) {
    const SynthTrialConfig &t = *spec.trials;
    std::uint64_t seed = t.seed != 0 ? t.seed : DeriveSeed(spec.seed, 1ULL << 40);
    TrialList list = MakeTrials(set, t.n_target, t.n_nontarget,
                                t.sessions_per_model, seed, t.same_gender,
                                t.same_language);
    WriteTrials(list, a.out_prefix + ".trials", a.out_prefix + ".models");
    std::cout << "trials\t" << a.out_prefix << ".trials\t" << list.trials.size()
              << '\n';
  }
}

int ReportError(const char *kind, int code, const std::string &msg) {
  std::string flat = msg;
  for (char &c : flat)
    if (c == '\n' || c == '\t') c = ' ';
  std::cerr << "svback-error\tkind=" << kind << "\tcode=" << code
            << "\tmessage=" << flat << '\n';
  return code;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"svback: speaker verification back-end"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline config");
  app.add_option("--threads", g.threads, "worker threads (default: all cores)")
      ->check(CLI::PositiveNumber);
  std::uint64_t seed = 0;
  auto *seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--format", g.format, "embedding format tsv|raw")
      ->check(CLI::IsMember({"tsv", "raw"}));

  FitChainArgs fit;
  auto *c_fit = app.add_subcommand("fit-chain", "fit a preprocessing chain");
  c_fit->add_option("--train", fit.train, "training embeddings")->required();
  c_fit->add_option("--meta", fit.meta, "metadata TSV (default: sidecar)");
  c_fit->add_option("--recipe", fit.recipe, "e.g. nap:gender:1,center,lda:100,ln");
  c_fit->add_option("--out", fit.out, "output chain JSON");
  c_fit->add_option("--factor", fit.factor, "prepend a compact factor and ln");
  c_fit->add_option("--head", fit.head, "prepend the factor of this head and ln");

  TrainArgs train;
  auto *c_train = app.add_subcommand("train", "train a PLDA model or mixture");
  c_train->add_option("--chain", train.chain, "preprocessing chain");
  c_train->add_option("--train", train.train, "training embeddings")->required();
  c_train->add_option("--meta", train.meta, "metadata TSV");
  c_train->add_option("--backend", train.backend, "plda|mixture");
  c_train->add_option("--languages", train.languages, "e.g. eng,cmn,yue");
  c_train->add_option("--iterations", train.iterations, "EM iterations");
  c_train->add_option("--rank", train.rank, "speaker subspace rank (0 = full)");
  c_train->add_option("--out", train.out, "output model JSON");

  auto add_score_opts = [](CLI::App *c, ScoreArgs &s, bool need_out) {
    c->add_option("--backend", s.backend, "plda|mixture|cosine|cosine-cl");
    c->add_option("--model", s.model, "model JSON");
    c->add_option("--chain", s.chain, "preprocessing chain");
    c->add_option("--embeddings", s.embeddings, "trial embeddings");
    c->add_option("--meta", s.meta, "metadata TSV");
    c->add_option("--trials", s.trials, "trial list");
    c->add_option("--models", s.models, "model enrollment list");
    c->add_option("--head", s.head, "classifier head stem");
    c->add_option("--head2", s.head2, "second classifier head stem (fusion)");
    c->add_option("--factor", s.factor, "compact factor JSON");
    c->add_option("--embeddings2", s.embeddings2, "second extractor embeddings");
    c->add_option("--w1", s.w1, "fusion weight of the first extractor");
    c->add_option("--w2", s.w2, "fusion weight of the second extractor");
    c->add_option("--enroll-mode", s.enroll_mode, "set|average");
    if (need_out) c->add_option("--out", s.out, "output scores TSV");
  };
  ScoreArgs score;
  auto *c_score = app.add_subcommand("score", "score a trial list");
  add_score_opts(c_score, score, true);
  c_score->add_option("--dump-weights", score.dump_weights,
                      "write per-component log-likelihoods and weights (TSV)");

  NormalizeArgs norm;
  auto *c_norm = app.add_subcommand("normalize", "s-norm and channel norm");
  add_score_opts(c_norm, norm.score, false);
  c_norm->add_option("--scores", norm.scores, "input scores TSV");
  c_norm->add_option("--out", norm.out, "output scores TSV");
  c_norm->add_flag("--snorm", norm.snorm, "enable adaptive s-norm");
  c_norm->add_flag("--no-snorm", norm.no_snorm, "disable adaptive s-norm");
  c_norm->add_flag("--channel-norm", norm.chnorm, "enable channel normalization");
  c_norm->add_flag("--no-channel-norm", norm.no_chnorm, "disable channel norm");
  c_norm->add_option("--top-n", norm.top_n, "cohort scores used per side");
  c_norm->add_option("--cohort", norm.cohort, "raw cohort embeddings");
  c_norm->add_option("--cohort-meta", norm.cohort_meta, "cohort metadata TSV");
  c_norm->add_option("--cohort-model-scores", norm.cohort_model_scores,
                     "precomputed model cohort scores (id<TAB>score)");
  c_norm->add_option("--cohort-test-scores", norm.cohort_test_scores,
                     "precomputed test cohort scores (id<TAB>score)");
  c_norm->add_option("--dev-scores", norm.dev_scores, "development scores TSV");
  c_norm->add_option("--channel-stats", norm.channel_stats, "channel stats JSON");
  c_norm->add_option("--save-stats", norm.save_stats, "write fitted channel stats");
  c_norm->add_option("--dump-intermediate", norm.dump,
                     "write scores after s-norm, before channel norm");

  EvalArgs eval;
  auto *c_eval = app.add_subcommand("eval", "EER and min_C of keyed scores");
  c_eval->add_option("--scores", eval.scores, "scores TSV with key column");
  c_eval->add_option("--cost", eval.cost, "cost params JSON");
  c_eval->add_option("--det", eval.det, "write DET points TSV");

  DiagnoseArgs diag;
  auto *c_diag = app.add_subcommand("diagnose", "covariance spectra");
  c_diag->add_option("--chain", diag.chain, "preprocessing chain");
  c_diag->add_option("--embeddings", diag.embeddings, "embeddings")->required();
  c_diag->add_option("--meta", diag.meta, "metadata TSV");
  c_diag->add_option("--out", diag.out, "output TSV (default stdout)");

  SynthArgs synth;
  auto *c_synth = app.add_subcommand("synth", "sample synthetic embeddings");
  c_synth->add_option("--spec", synth.spec, "synth spec JSON")->required();
  c_synth->add_option("--out-prefix", synth.out_prefix, "output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return ReportError("usage", 1, e.what());
  }
  try {
    if (seed_opt->count() > 0) g.seed = seed;
    g.cfg = LoadConfig(g.config_path);
    int threads = g.threads > 0 ? g.threads : g.cfg.threads;
    if (threads > 0) SetNumThreads(threads);
    if (*c_fit) CmdFitChain(g, fit);
    else if (*c_train) CmdTrain(g, train);
    else if (*c_score) CmdScore(g, score);
    else if (*c_norm) CmdNormalize(g, norm);
    else if (*c_eval) CmdEval(g, eval);
    else if (*c_diag) CmdDiagnose(g, diag);
    else if (*c_synth) CmdSynth(g, synth);
  } catch (const UsageError &e) {
    return ReportError("usage", 1, e.what());
  } catch (const DataError &e) {
    return ReportError("data", 2, e.what());
  } catch (const NumericalError &e) {
    return ReportError("numerical", 3, e.what());
  } catch (const std::exception &e) {
    return ReportError("data", 2, e.what());
  }
  return 0;
}
