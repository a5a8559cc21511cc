// src/synth.cc

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

#include "svback/synth.h"

#include <cmath>
#include <cstdio>
#include <set>

#include "svback/json-util.h"
#include "svback/plda.h"
#include "svback/random.h"

namespace svback {

namespace {

Vector ParseShift(const nlohmann::json &j, const char *key, int d) {
  if (!j.contains(key)) return Vector::Zero(d);
  const auto &v = j.at(key);
  if (v.is_number()) return Vector::Constant(d, v.get<double>());
  Vector out = VectorFromJson(v, key);
  if (out.size() != d)
    throw UsageError(StrCat("synth spec '", key, "' has length ", out.size(),
                            ", expected ", d));
  return out;
}

Matrix ParseCovariance(const nlohmann::json &j, const char *key, int d) {
  if (!j.contains(key)) throw UsageError(StrCat("synth spec needs '", key, "'"));
  const auto &v = j.at(key);
  if (v.is_number()) return v.get<double>() * Matrix::Identity(d, d);
  if (!v.is_array()) throw UsageError(StrCat("synth spec '", key, "' is malformed"));
  if (!v.empty() && v.front().is_array()) {
    if (static_cast<int>(v.size()) != d)
      throw UsageError(StrCat("synth spec '", key, "' must have ", d, " rows"));
    Matrix m(d, d);
    for (int r = 0; r < d; ++r) {
      Vector row = VectorFromJson(v[static_cast<std::size_t>(r)], key);
      if (row.size() != d)
        throw UsageError(StrCat("synth spec '", key, "' row ", r, " has length ",
                                row.size()));
      m.row(r) = row.transpose();
    }
    return m;
  }
  if (static_cast<int>(v.size()) == d)
    return VectorFromJson(v, key).asDiagonal();
  if (static_cast<long>(v.size()) == static_cast<long>(d) * d)
    return MatrixFromJson(v, d, d, key);
  throw UsageError(StrCat("synth spec '", key, "' has ", v.size(),
                          " entries; expected 1, ", d, " or ", d * d));
}

void CheckKeys(const nlohmann::json &j, const std::set<std::string> &allowed,
               const char *where) {
  if (!j.is_object()) throw UsageError(StrCat(where, " must be a JSON object"));
  for (const auto &[key, value] : j.items())
    if (!allowed.count(key))
      throw UsageError(StrCat("unknown key '", key, "' in ", where));
}

// Square-root factor of a PSD matrix: A A^T = m.
Matrix PsdFactor(const Matrix &m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal();
}

std::string SpeakerName(int s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%05d", s);
  return buf;
}

}  // namespace

void SynthSpec::Validate() const {
  if (d < 1) throw UsageError("synth spec: d must be >= 1");
  if (n_speakers < 1) throw UsageError("synth spec: n_speakers must be >= 1");
  if (sessions_per_speaker < 1)
    throw UsageError("synth spec: sessions_per_speaker must be >= 1");
  if (languages.empty()) throw UsageError("synth spec: need >= 1 language");
  double total = 0.0;
  std::set<std::string> names;
  for (const auto &l : languages) {
    if (l.name.empty() || l.name == kUnknownLabel)
      throw UsageError("synth spec: language names must be non-empty");
    if (!names.insert(l.name).second)
      throw UsageError(StrCat("synth spec: duplicate language '", l.name, "'"));
    if (l.mean_shift.size() != d)
      throw UsageError(StrCat("synth spec: language '", l.name,
                              "' mean_shift has wrong length"));
    if (!(l.share >= 0.0)) throw UsageError("synth spec: negative language share");
    total += l.share;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw UsageError(StrCat("synth spec: language shares sum to ", total));
  auto check_vec = [&](const Vector &v, const char *what) {
    if (v.size() != 0 && v.size() != d)
      throw UsageError(StrCat("synth spec: ", what, " has wrong length"));
    if (!v.allFinite()) throw UsageError(StrCat("synth spec: ", what, " not finite"));
  };
  check_vec(mean, "mean");
  check_vec(gender_shift, "gender_shift");
  check_vec(channel_shift, "channel_shift");
  if (between.rows() != d || between.cols() != d || within.rows() != d ||
      within.cols() != d)
    throw UsageError("synth spec: B and W must be d x d");
  try {
    PldaModel check(Vector::Zero(d), between, within);
  } catch (const std::exception &e) {
    throw UsageError(StrCat("synth spec: invalid covariances: ", e.what()));
  }
  if (trials) {
    if (trials->sessions_per_model != 1 && trials->sessions_per_model != 3)
      throw UsageError("synth spec: sessions_per_model must be 1 or 3");
    if (trials->n_target < 0 || trials->n_nontarget < 0)
      throw UsageError("synth spec: negative trial counts");
  }
}

SynthSpec SynthSpec::FromJson(const nlohmann::json &j) {
  CheckKeys(j,
            {"d", "n_speakers", "sessions_per_speaker", "languages", "mean",
             "gender_shift", "channel_shift", "B", "W", "seed", "dataset",
             "trials"},
            "synth spec");
  SynthSpec spec;
  try {
    spec.d = j.at("d").get<int>();
    if (spec.d < 1) throw UsageError("synth spec: d must be >= 1");
    spec.n_speakers = j.at("n_speakers").get<int>();
    spec.sessions_per_speaker = j.at("sessions_per_speaker").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.dataset = j.value("dataset", std::string("synth"));
    if (j.contains("languages")) {
      for (const auto &lj : j.at("languages")) {
        CheckKeys(lj, {"name", "mean_shift", "share"}, "synth language");
        SynthLanguage l;
        l.name = lj.at("name").get<std::string>();
        l.mean_shift = ParseShift(lj, "mean_shift", spec.d);
        l.share = lj.at("share").get<double>();
        spec.languages.push_back(std::move(l));
      }
    } else {
      spec.languages.push_back({"eng", Vector::Zero(spec.d), 1.0});
    }
    spec.mean = ParseShift(j, "mean", spec.d);
    spec.gender_shift = ParseShift(j, "gender_shift", spec.d);
    spec.channel_shift = ParseShift(j, "channel_shift", spec.d);
    spec.between = ParseCovariance(j, "B", spec.d);
    spec.within = ParseCovariance(j, "W", spec.d);
    if (j.contains("trials")) {
      const auto &tj = j.at("trials");
      CheckKeys(tj,
                {"n_target", "n_nontarget", "sessions_per_model", "same_gender",
                 "same_language", "seed"},
                "synth trials");
      SynthTrialConfig t;
      t.n_target = tj.at("n_target").get<int>();
      t.n_nontarget = tj.at("n_nontarget").get<int>();
      t.sessions_per_model = tj.value("sessions_per_model", 1);
      t.same_gender = tj.value("same_gender", false);
      t.same_language = tj.value("same_language", false);
      t.seed = tj.value("seed", std::uint64_t{0});
      spec.trials = t;
    }
  } catch (const nlohmann::json::exception &e) {
    throw UsageError(StrCat("malformed synth spec: ", e.what()));
  } catch (const DataError &e) {
    throw UsageError(StrCat("malformed synth spec: ", e.what()));
  }
  spec.Validate();
  return spec;
}

nlohmann::ordered_json SynthSpec::ToJson() const {
  nlohmann::ordered_json j;
  j["d"] = d;
  j["n_speakers"] = n_speakers;
  j["sessions_per_speaker"] = sessions_per_speaker;
  j["languages"] = nlohmann::ordered_json::array();
  for (const auto &l : languages)
    j["languages"].push_back({{"name", l.name},
                              {"mean_shift", VectorToJson(l.mean_shift)},
                              {"share", l.share}});
  if (mean.size() != 0) j["mean"] = VectorToJson(mean);
  if (gender_shift.size() != 0) j["gender_shift"] = VectorToJson(gender_shift);
  if (channel_shift.size() != 0) j["channel_shift"] = VectorToJson(channel_shift);
  j["B"] = MatrixToJson(between);
  j["W"] = MatrixToJson(within);
  j["seed"] = seed;
  j["dataset"] = dataset;
  if (trials) {
    j["trials"] = {{"n_target", trials->n_target},
                   {"n_nontarget", trials->n_nontarget},
                   {"sessions_per_model", trials->sessions_per_model},
                   {"same_gender", trials->same_gender},
                   {"same_language", trials->same_language},
                   {"seed", trials->seed}};
  }
  return j;
}

SynthSpec SynthSpec::Load(const std::string &path) {
  nlohmann::json j;
  try {
    j = ReadJsonFile(path);
  } catch (const DataError &e) {
    throw UsageError(e.what());
  }
  return FromJson(j);
}

EmbeddingSet Sample(const SynthSpec &spec) {
  spec.Validate();
  const int d = spec.d, n = spec.n_speakers, m = spec.sessions_per_speaker;
  const Vector mean = spec.mean.size() ? spec.mean : Vector::Zero(d);
  const Vector gshift = spec.gender_shift.size() ? spec.gender_shift : Vector::Zero(d);
  const Vector cshift = spec.channel_shift.size() ? spec.channel_shift : Vector::Zero(d);
  const Matrix fb = PsdFactor(spec.between);
  const Matrix fw = Eigen::LLT<Matrix>(spec.within).matrixL();

  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(m);
  Matrix vectors(static_cast<Eigen::Index>(total), d);
  std::vector<std::string> ids(total);
  std::vector<SegmentMeta> meta(total);
  ParallelFor(static_cast<std::size_t>(n), 64, [&](std::size_t begin, std::size_t end) {
    char buf[48];
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(DeriveSeed(spec.seed, s));
      double u = rng.Uniform(), acc = 0.0;
      std::size_t lang = spec.languages.size() - 1;
      for (std::size_t l = 0; l < spec.languages.size(); ++l) {
        acc += spec.languages[l].share;
        if (u < acc) {
          lang = l;
          break;
        }
      }
      const bool female = rng.Below(2) == 1;
      const double g = female ? 1.0 : -1.0;
      Vector speaker = mean + spec.languages[lang].mean_shift + g * gshift +
                       fb * rng.NormalVector(d);
      const std::string spk = SpeakerName(static_cast<int>(s));
      for (int k = 0; k < m; ++k) {
        const bool mic = rng.Below(2) == 1;
        Vector r = speaker + fw * rng.NormalVector(d);
        if (mic) r += cshift;
        const std::size_t row = s * static_cast<std::size_t>(m) + static_cast<std::size_t>(k);
        vectors.row(static_cast<Eigen::Index>(row)) = r.transpose();
        std::snprintf(buf, sizeof(buf), "%s_%02d", spk.c_str(), k);
        ids[row] = buf;
        SegmentMeta &md = meta[row];
        md.speaker_id = spk;
        md.language = spec.languages[lang].name;
        md.gender = female ? Gender::kFemale : Gender::kMale;
        md.channel = mic ? Channel::kMic : Channel::kTel;
        md.dataset = spec.dataset;
      }
    }
  });
  return EmbeddingSet(std::move(ids), std::move(vectors), std::move(meta));
}

TrialList MakeTrials(const EmbeddingSet &set, int n_target, int n_nontarget,
                     int sessions_per_model, std::uint64_t seed,
                     bool same_gender, bool same_language) {
  if (sessions_per_model != 1 && sessions_per_model != 3)
    throw UsageError("sessions_per_model must be 1 or 3");
  if (n_target < 0 || n_nontarget < 0) throw UsageError("negative trial count");
  const std::size_t spm = static_cast<std::size_t>(sessions_per_model);
  Rng rng(seed);
  auto groups = GroupByLabel(set, LabelKind::kSpeaker);

  struct Model {
    std::string id;
    std::string speaker;
    std::string match;  // nontarget segments must carry the same key
    std::vector<std::size_t> rest;  // segments not used for enrollment
  };
  auto match_key = [&](const SegmentMeta &m) {
    std::string key;
    if (same_gender) key += ToString(m.gender);
    key += '/';
    if (same_language) key += m.language;
    return key;
  };
  std::vector<Model> models;
  TrialList all;
  for (auto &[spk, rows_in] : groups) {
    if (rows_in.size() < spm) continue;
    std::vector<std::size_t> rows = rows_in;
    for (std::size_t i = 0; i < spm; ++i) {
      std::size_t j = i + rng.Below(rows.size() - i);
      std::swap(rows[i], rows[j]);
    }
    Model model;
    model.id = StrCat("m_", spk);
    model.speaker = spk;
    model.match = match_key(set.Meta()[rows.front()]);
    std::vector<std::string> enroll;
    for (std::size_t i = 0; i < spm; ++i) enroll.push_back(set.Ids()[rows[i]]);
    all.models[model.id] = std::move(enroll);
    model.rest.assign(rows.begin() + static_cast<long>(spm), rows.end());
    models.push_back(std::move(model));
  }
  if (models.size() < 2)
    throw DataError("insufficient segments: need >= 2 speakers with enough "
                    "segments for trials");

  std::vector<std::pair<std::size_t, std::size_t>> target_pool;
  for (std::size_t mi = 0; mi < models.size(); ++mi)
    for (std::size_t r : models[mi].rest) target_pool.emplace_back(mi, r);
  if (target_pool.size() < static_cast<std::size_t>(n_target))
    throw DataError(StrCat("insufficient segments: ", target_pool.size(),
                           " possible target trials, ", n_target, " requested"));

  std::vector<Trial> trials;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_target); ++i) {
    std::size_t j = i + rng.Below(target_pool.size() - i);
    std::swap(target_pool[i], target_pool[j]);
    const auto &[mi, r] = target_pool[i];
    trials.push_back({models[mi].id, set.Ids()[r], TrialKey::kTarget,
                      TrialType::kUnknown});
  }

  // Nontarget capacity, then rejection sampling without repeats.
  std::map<std::string, std::size_t> by_key;
  std::map<std::string, std::size_t> seg_count;
  for (std::size_t i = 0; i < set.Size(); ++i) {
    if (set.Meta()[i].speaker_id == kUnknownLabel) continue;
    ++by_key[match_key(set.Meta()[i])];
    ++seg_count[set.Meta()[i].speaker_id];
  }
  std::size_t capacity = 0;
  for (const auto &m : models) capacity += by_key[m.match] - seg_count[m.speaker];
  if (capacity < static_cast<std::size_t>(n_nontarget))
    throw DataError(StrCat("insufficient segments: ", capacity,
                           " possible nontarget trials, ", n_nontarget,
                           " requested"));
  std::set<std::pair<std::size_t, std::size_t>> used;
  const std::size_t max_attempts = 100 * static_cast<std::size_t>(n_nontarget) + 1000;
  std::size_t attempts = 0;
  while (used.size() < static_cast<std::size_t>(n_nontarget)) {
    if (++attempts > max_attempts)
      throw DataError("insufficient segments: could not draw enough distinct "
                      "nontarget trials");
    std::size_t mi = rng.Below(models.size());
    std::size_t r = rng.Below(set.Size());
    const SegmentMeta &md = set.Meta()[r];
    if (md.speaker_id == kUnknownLabel || md.speaker_id == models[mi].speaker)
      continue;
    if ((same_gender || same_language) && match_key(md) != models[mi].match)
      continue;
    if (!used.emplace(mi, r).second) continue;
    trials.push_back({models[mi].id, set.Ids()[r], TrialKey::kNontarget,
                      TrialType::kUnknown});
  }

  for (std::size_t i = trials.size(); i > 1; --i)
    std::swap(trials[i - 1], trials[rng.Below(i)]);

  TrialList out;
  for (const auto &t : trials) out.models[t.model_id] = all.models.at(t.model_id);
  out.trials = std::move(trials);
  for (auto &t : out.trials) t.type = ResolveTrialType(t, out, set);
  return out;
}

}  // namespace svback
