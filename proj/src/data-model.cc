// src/data-model.cc

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

#include "svback/data-model.h"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace svback {

namespace {

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Reads all non-empty lines; strips a trailing '\r'.
std::vector<std::string> ReadLines(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DataError(StrCat("cannot open ", path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

double ParseDouble(std::string_view s, const std::string &where) {
  // from_chars rejects a leading '+', which some writers emit.
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError(StrCat("cannot parse number '", s, "' in ", where));
  if (!std::isfinite(value))
    throw DataError(StrCat("non-finite value in ", where));
  return value;
}

std::ofstream OpenForWrite(const std::string &path,
                           std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw DataError(StrCat("cannot write ", path));
  return os;
}

void CheckWritten(std::ofstream &os, const std::string &path) {
  os.flush();
  if (!os) throw DataError(StrCat("I/O failure writing ", path));
}

std::string StripEmbeddingExtension(const std::string &path) {
  for (std::string_view ext : {".tsv", ".f32"}) {
    if (path.size() > ext.size() &&
        path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
      return path.substr(0, path.size() - ext.size());
  }
  return path;
}

EmbeddingSet LoadTsvEmbeddings(const std::string &path) {
  std::vector<std::string> lines = ReadLines(path);
  if (lines.empty()) throw DataError(StrCat("no records in ", path));
  std::vector<std::string> ids;
  ids.reserve(lines.size());
  Eigen::Index dim = -1;
  Matrix vectors;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto fields = SplitTabs(lines[i]);
    if (fields.size() < 2)
      throw DataError(StrCat(path, ":", i + 1, ": expected id and values"));
    Eigen::Index d = static_cast<Eigen::Index>(fields.size() - 1);
    if (dim < 0) {
      dim = d;
      vectors.resize(static_cast<Eigen::Index>(lines.size()), dim);
    } else if (d != dim) {
      throw DataError(StrCat(path, ":", i + 1, ": dimension mismatch (", d,
                             " vs ", dim, ")"));
    }
    ids.emplace_back(fields[0]);
    std::string where = StrCat(path, ":", i + 1);
    for (Eigen::Index j = 0; j < dim; ++j)
      vectors(static_cast<Eigen::Index>(i), j) =
          ParseDouble(fields[static_cast<std::size_t>(j) + 1], where);
  }
  return EmbeddingSet(std::move(ids), std::move(vectors));
}

EmbeddingSet LoadRawEmbeddings(const std::string &stem) {
  const std::string json_path = stem + ".json";
  const std::string data_path = stem + ".f32";
  const std::string ids_path = stem + ".ids";
  std::ifstream js(json_path);
  if (!js) throw DataError(StrCat("cannot open ", json_path));
  nlohmann::json header;
  std::int64_t dim = 0, count = 0;
  try {
    js >> header;
    dim = header.at("dim").get<std::int64_t>();
    count = header.at("count").get<std::int64_t>();
    if (header.value("dtype", "f32") != "f32" ||
        header.value("order", "row-major") != "row-major")
      throw DataError("unsupported dtype/order");
  } catch (const std::exception &e) {
    throw DataError(StrCat("malformed header ", json_path, ": ", e.what()));
  }
  if (dim < 1 || count < 0)
    throw DataError(StrCat("malformed header ", json_path, ": bad dim/count"));
  if (count == 0) throw DataError(StrCat("no records in ", stem));

  std::error_code ec;
  auto bytes = std::filesystem::file_size(data_path, ec);
  if (ec) throw DataError(StrCat("cannot open ", data_path));
  const std::uint64_t expected =
      static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(count) * 4;
  if (bytes != expected)
    throw DataError(StrCat("size mismatch: ", data_path, " has ", bytes,
                           " bytes, header declares ", expected));

  std::vector<std::string> ids = ReadLines(ids_path);
  if (static_cast<std::int64_t>(ids.size()) != count)
    throw DataError(StrCat("size mismatch: ", ids_path, " has ", ids.size(),
                           " ids, header declares ", count));

  std::ifstream ds(data_path, std::ios::binary);
  std::vector<float> buf(static_cast<std::size_t>(dim * count));
  ds.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!ds) throw DataError(StrCat("short read on ", data_path));
  if constexpr (std::endian::native == std::endian::big) {
    for (float &f : buf) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  Matrix vectors(count, dim);
  for (std::int64_t i = 0; i < count; ++i)
    for (std::int64_t j = 0; j < dim; ++j)
      vectors(i, j) = static_cast<double>(buf[static_cast<std::size_t>(i * dim + j)]);
  if (!vectors.allFinite())
    throw DataError(StrCat("non-finite value in ", data_path));
  return EmbeddingSet(std::move(ids), std::move(vectors));
}

}  // namespace

std::string_view ToString(Gender g) {
  switch (g) {
    case Gender::kMale: return "m";
    case Gender::kFemale: return "f";
    default: return "unk";
  }
}

std::string_view ToString(Channel c) {
  switch (c) {
    case Channel::kTel: return "tel";
    case Channel::kMic: return "mic";
    default: return "unk";
  }
}

std::string_view ToString(TrialKey k) {
  switch (k) {
    case TrialKey::kTarget: return "target";
    case TrialKey::kNontarget: return "nontarget";
    default: return "unknown";
  }
}

std::string_view ToString(TrialType t) {
  switch (t) {
    case TrialType::kTelTel: return "tel-tel";
    case TrialType::kMicMic: return "mic-mic";
    case TrialType::kTelMic: return "tel-mic";
    case TrialType::kMicTel: return "mic-tel";
    default: return "unknown";
  }
}

std::string_view ToString(LabelKind k) {
  switch (k) {
    case LabelKind::kSpeaker: return "speaker";
    case LabelKind::kGender: return "gender";
    case LabelKind::kLanguage: return "language";
    default: return "dataset";
  }
}

Gender ParseGender(std::string_view s) {
  if (s == "m") return Gender::kMale;
  if (s == "f") return Gender::kFemale;
  if (s == "unk" || s.empty()) return Gender::kUnknown;
  throw DataError(StrCat("bad gender '", s, "' (expected m, f or unk)"));
}

Channel ParseChannel(std::string_view s) {
  if (s == "tel") return Channel::kTel;
  if (s == "mic") return Channel::kMic;
  if (s == "unk" || s.empty()) return Channel::kUnknown;
  throw DataError(StrCat("bad channel '", s, "' (expected tel, mic or unk)"));
}

TrialKey ParseTrialKey(std::string_view s) {
  if (s == "target") return TrialKey::kTarget;
  if (s == "nontarget") return TrialKey::kNontarget;
  if (s == "unknown" || s == "unk" || s.empty()) return TrialKey::kUnknown;
  throw DataError(StrCat("bad trial key '", s, "'"));
}

TrialType ParseTrialType(std::string_view s) {
  if (s == "tel-tel") return TrialType::kTelTel;
  if (s == "mic-mic") return TrialType::kMicMic;
  if (s == "tel-mic") return TrialType::kTelMic;
  if (s == "mic-tel") return TrialType::kMicTel;
  if (s == "unknown" || s == "unk" || s.empty()) return TrialType::kUnknown;
  throw DataError(StrCat("bad trial type '", s, "'"));
}

LabelKind ParseLabelKind(std::string_view s) {
  if (s == "speaker") return LabelKind::kSpeaker;
  if (s == "gender") return LabelKind::kGender;
  if (s == "language" || s == "lang") return LabelKind::kLanguage;
  if (s == "dataset" || s == "db") return LabelKind::kDataset;
  throw UsageError(StrCat("bad label kind '", s, "'"));
}

EmbeddingFormat ParseEmbeddingFormat(std::string_view s) {
  if (s == "tsv") return EmbeddingFormat::kTsv;
  if (s == "raw") return EmbeddingFormat::kRaw;
  throw UsageError(StrCat("bad embedding format '", s, "' (tsv or raw)"));
}

TrialType MakeTrialType(Channel enroll, Channel test) {
  if (enroll == Channel::kUnknown || test == Channel::kUnknown)
    return TrialType::kUnknown;
  if (enroll == Channel::kTel)
    return test == Channel::kTel ? TrialType::kTelTel : TrialType::kTelMic;
  return test == Channel::kTel ? TrialType::kMicTel : TrialType::kMicMic;
}

std::string LabelOf(const SegmentMeta &meta, LabelKind kind) {
  switch (kind) {
    case LabelKind::kSpeaker: return meta.speaker_id;
    case LabelKind::kGender: return std::string(ToString(meta.gender));
    case LabelKind::kLanguage: return meta.language;
    default: return meta.dataset;
  }
}

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, Matrix vectors,
                           std::vector<SegmentMeta> meta)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), meta_(std::move(meta)) {
  if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
    throw DataError(StrCat("embedding set has ", ids_.size(), " ids but ",
                           vectors_.rows(), " rows"));
  if (!ids_.empty() && vectors_.cols() < 1)
    throw DataError("embedding dimension must be >= 1");
  if (!vectors_.allFinite()) throw DataError("non-finite embedding value");
  if (meta_.empty()) meta_.resize(ids_.size());
  if (meta_.size() != ids_.size())
    throw DataError("metadata count does not match embedding count");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second)
      throw DataError(StrCat("duplicate segment id '", ids_[i], "'"));
  }
}

std::optional<std::size_t> EmbeddingSet::Find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::IndexOf(std::string_view id) const {
  auto found = Find(id);
  if (!found) throw DataError(StrCat("unknown segment id '", id, "'"));
  return *found;
}

EmbeddingSet EmbeddingSet::WithVectors(Matrix vectors) const {
  return EmbeddingSet(ids_, std::move(vectors), meta_);
}

EmbeddingSet EmbeddingSet::Subset(const std::vector<std::size_t> &rows) const {
  std::vector<std::string> ids;
  std::vector<SegmentMeta> meta;
  Matrix vectors(static_cast<Eigen::Index>(rows.size()), Dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(ids_.at(rows[i]));
    meta.push_back(meta_.at(rows[i]));
    vectors.row(static_cast<Eigen::Index>(i)) =
        vectors_.row(static_cast<Eigen::Index>(rows[i]));
  }
  return EmbeddingSet(std::move(ids), std::move(vectors), std::move(meta));
}

std::map<std::string, std::vector<std::size_t>> GroupByLabel(
    const EmbeddingSet &set, LabelKind kind) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < set.Size(); ++i) {
    std::string label = LabelOf(set.Meta()[i], kind);
    if (label == kUnknownLabel) continue;
    groups[label].push_back(i);
  }
  return groups;
}

TrialType ResolveTrialType(const Trial &trial, const TrialList &list,
                           const EmbeddingSet &set) {
  if (trial.type != TrialType::kUnknown) return trial.type;
  auto model = list.models.find(trial.model_id);
  if (model == list.models.end()) return TrialType::kUnknown;
  int tel = 0, mic = 0;
  for (const auto &seg : model->second) {
    auto idx = set.Find(seg);
    if (!idx) continue;
    Channel c = set.Meta()[*idx].channel;
    tel += c == Channel::kTel;
    mic += c == Channel::kMic;
  }
  Channel enroll = tel > mic   ? Channel::kTel
                   : mic > tel ? Channel::kMic
                               : Channel::kUnknown;
  auto test = set.Find(trial.test_id);
  if (!test) return TrialType::kUnknown;
  return MakeTrialType(enroll, set.Meta()[*test].channel);
}

std::string MetadataSidecarPath(const std::string &embedding_path) {
  return StripEmbeddingExtension(embedding_path) + ".meta.tsv";
}

EmbeddingSet LoadEmbeddings(const std::string &path, EmbeddingFormat format,
                            const std::string &meta_path) {
  EmbeddingSet set = format == EmbeddingFormat::kTsv
                         ? LoadTsvEmbeddings(path)
                         : LoadRawEmbeddings(StripEmbeddingExtension(path));
  std::string sidecar = meta_path;
  if (sidecar.empty()) {
    std::string candidate = MetadataSidecarPath(path);
    if (std::filesystem::exists(candidate)) sidecar = candidate;
  }
  if (sidecar.empty()) return set;
  std::vector<SegmentMeta> meta = LoadMetadata(sidecar, set.Ids());
  return EmbeddingSet(set.Ids(), set.Vectors(), std::move(meta));
}

void WriteEmbeddings(const EmbeddingSet &set, const std::string &path,
                     EmbeddingFormat format) {
  if (format == EmbeddingFormat::kTsv) {
    auto os = OpenForWrite(path);
    char buf[32];
    for (std::size_t i = 0; i < set.Size(); ++i) {
      os << set.Ids()[i];
      for (Eigen::Index j = 0; j < set.Dim(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g",
                      set.Vectors()(static_cast<Eigen::Index>(i), j));
        os << '\t' << buf;
      }
      os << '\n';
    }
    CheckWritten(os, path);
  } else {
    const std::string stem = StripEmbeddingExtension(path);
    nlohmann::ordered_json header = {{"dim", set.Dim()},
                                     {"count", set.Size()},
                                     {"dtype", "f32"},
                                     {"order", "row-major"}};
    {
      auto js = OpenForWrite(stem + ".json");
      js << header.dump() << '\n';
      CheckWritten(js, stem + ".json");
    }
    {
      auto ids = OpenForWrite(stem + ".ids");
      for (const auto &id : set.Ids()) ids << id << '\n';
      CheckWritten(ids, stem + ".ids");
    }
    std::vector<float> buf(set.Size() * static_cast<std::size_t>(set.Dim()));
    for (std::size_t i = 0; i < set.Size(); ++i)
      for (Eigen::Index j = 0; j < set.Dim(); ++j)
        buf[i * static_cast<std::size_t>(set.Dim()) + static_cast<std::size_t>(j)] =
            static_cast<float>(set.Vectors()(static_cast<Eigen::Index>(i), j));
    if constexpr (std::endian::native == std::endian::big) {
      for (float &f : buf) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    auto ds = OpenForWrite(stem + ".f32", std::ios::binary);
    ds.write(reinterpret_cast<const char *>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    CheckWritten(ds, stem + ".f32");
  }
  WriteMetadata(set, MetadataSidecarPath(path));
}

std::vector<SegmentMeta> LoadMetadata(const std::string &path,
                                      const std::vector<std::string> &ids) {
  std::vector<std::string> lines = ReadLines(path);
  static const std::vector<std::string_view> kHeader = {
      "segment_id", "speaker_id", "language", "gender", "channel", "dataset"};
  if (lines.empty() || SplitTabs(lines[0]) != kHeader)
    throw DataError(StrCat("malformed header in ", path,
                           " (expected segment_id speaker_id language gender "
                           "channel dataset)"));
  std::unordered_map<std::string, SegmentMeta> by_id;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = SplitTabs(lines[i]);
    if (f.size() != kHeader.size())
      throw DataError(StrCat(path, ":", i + 1, ": expected 6 columns"));
    SegmentMeta m;
    m.speaker_id = f[1].empty() ? std::string(kUnknownLabel) : std::string(f[1]);
    m.language = f[2].empty() ? std::string(kUnknownLabel) : std::string(f[2]);
    m.gender = ParseGender(f[3]);
    m.channel = ParseChannel(f[4]);
    m.dataset = f[5].empty() ? std::string(kUnknownLabel) : std::string(f[5]);
    by_id[std::string(f[0])] = std::move(m);
  }
  std::vector<SegmentMeta> meta(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = by_id.find(ids[i]);
    if (it != by_id.end()) meta[i] = it->second;
  }
  return meta;
}

void WriteMetadata(const EmbeddingSet &set, const std::string &path) {
  auto os = OpenForWrite(path);
  os << "segment_id\tspeaker_id\tlanguage\tgender\tchannel\tdataset\n";
  for (std::size_t i = 0; i < set.Size(); ++i) {
    const SegmentMeta &m = set.Meta()[i];
    os << set.Ids()[i] << '\t' << m.speaker_id << '\t' << m.language << '\t'
       << ToString(m.gender) << '\t' << ToString(m.channel) << '\t'
       << m.dataset << '\n';
  }
  CheckWritten(os, path);
}

TrialList LoadTrials(const std::string &trials_path,
                     const std::string &models_path) {
  TrialList list;
  std::vector<std::string> model_lines = ReadLines(models_path);
  for (std::size_t i = 0; i < model_lines.size(); ++i) {
    auto f = SplitTabs(model_lines[i]);
    if (f.size() != 2)
      throw DataError(StrCat(models_path, ":", i + 1,
                             ": expected model_id<TAB>seg[,seg[,seg]]"));
    std::vector<std::string> segs;
    std::string_view rest = f[1];
    while (!rest.empty()) {
      std::size_t comma = rest.find(',');
      std::string_view seg = rest.substr(0, comma);
      if (!seg.empty()) segs.emplace_back(seg);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (segs.empty() || segs.size() > 3)
      throw DataError(StrCat("model '", f[0], "' has ", segs.size(),
                             " enrollment segments (expected 1 to 3)"));
    if (!list.models.emplace(std::string(f[0]), std::move(segs)).second)
      throw DataError(StrCat("duplicate model id '", f[0], "'"));
  }

  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::string> trial_lines = ReadLines(trials_path);
  for (std::size_t i = 0; i < trial_lines.size(); ++i) {
    auto f = SplitTabs(trial_lines[i]);
    if (f.size() < 2 || f.size() > 4)
      throw DataError(StrCat(trials_path, ":", i + 1,
                             ": expected 2 to 4 columns"));
    Trial t;
    t.model_id = std::string(f[0]);
    t.test_id = std::string(f[1]);
    if (f.size() > 2) t.key = ParseTrialKey(f[2]);
    if (f.size() > 3) t.type = ParseTrialType(f[3]);
    if (!list.models.count(t.model_id))
      throw DataError(StrCat("trial references model '", t.model_id,
                             "' absent from ", models_path));
    if (!seen.emplace(t.model_id, t.test_id).second)
      throw DataError(StrCat("duplicate trial (", t.model_id, ", ", t.test_id,
                             ")"));
    list.trials.push_back(std::move(t));
  }
  return list;
}

void WriteTrials(const TrialList &list, const std::string &trials_path,
                 const std::string &models_path) {
  {
    auto os = OpenForWrite(models_path);
    for (const auto &[model, segs] : list.models) {
      os << model << '\t';
      for (std::size_t i = 0; i < segs.size(); ++i)
        os << (i ? "," : "") << segs[i];
      os << '\n';
    }
    CheckWritten(os, models_path);
  }
  auto os = OpenForWrite(trials_path);
  for (const auto &t : list.trials) {
    os << t.model_id << '\t' << t.test_id << '\t' << ToString(t.key);
    if (t.type != TrialType::kUnknown) os << '\t' << ToString(t.type);
    os << '\n';
  }
  CheckWritten(os, trials_path);
}

std::string FormatScore(double score) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", score);
  return buf;
}

void WriteScores(const ScoreSet &scores, const std::string &path) {
  bool labelled = false;
  for (const auto &e : scores.entries)
    labelled |= e.key != TrialKey::kUnknown || e.type != TrialType::kUnknown;
  auto os = OpenForWrite(path);
  os << "model_id\ttest_segment_id\tscore";
  if (labelled) os << "\tkey\ttrial_type";
  os << '\n';
  for (const auto &e : scores.entries) {
    os << e.model_id << '\t' << e.test_id << '\t' << FormatScore(e.score);
    if (labelled) os << '\t' << ToString(e.key) << '\t' << ToString(e.type);
    os << '\n';
  }
  CheckWritten(os, path);
}

ScoreSet LoadScores(const std::string &path) {
  std::ifstream probe(path);
  if (!probe) throw DataError(StrCat("cannot open ", path));
  std::vector<std::string> lines = ReadLines(path);
  ScoreSet scores;
  std::size_t first = 0;
  if (!lines.empty() && lines[0].rfind("model_id\t", 0) == 0) first = 1;
  for (std::size_t i = first; i < lines.size(); ++i) {
    auto f = SplitTabs(lines[i]);
    if (f.size() < 3 || f.size() > 5)
      throw DataError(StrCat(path, ":", i + 1, ": expected 3 to 5 columns"));
    ScoreEntry e;
    e.model_id = std::string(f[0]);
    e.test_id = std::string(f[1]);
    e.score = ParseDouble(f[2], StrCat(path, ":", i + 1));
    if (f.size() > 3) e.key = ParseTrialKey(f[3]);
    if (f.size() > 4) e.type = ParseTrialType(f[4]);
    scores.entries.push_back(std::move(e));
  }
  return scores;
}

}  // namespace svback
