// svback/data-model.h

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

#ifndef SVBACK_DATA_MODEL_H_
#define SVBACK_DATA_MODEL_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svback/common.h"

namespace svback {

enum class Gender { kMale, kFemale, kUnknown };
enum class Channel { kTel, kMic, kUnknown };
enum class TrialKey { kTarget, kNontarget, kUnknown };
enum class TrialType { kTelTel, kMicMic, kTelMic, kMicTel, kUnknown };
enum class EmbeddingFormat { kTsv, kRaw };

/// Metadata attribute used to partition segments into classes.
enum class LabelKind { kSpeaker, kGender, kLanguage, kDataset };

std::string_view ToString(Gender g);
std::string_view ToString(Channel c);
std::string_view ToString(TrialKey k);
std::string_view ToString(TrialType t);
std::string_view ToString(LabelKind k);
Gender ParseGender(std::string_view s);
Channel ParseChannel(std::string_view s);
TrialKey ParseTrialKey(std::string_view s);
TrialType ParseTrialType(std::string_view s);
LabelKind ParseLabelKind(std::string_view s);
EmbeddingFormat ParseEmbeddingFormat(std::string_view s);

/// Channel-pair label of an (enrollment, test) combination.
TrialType MakeTrialType(Channel enroll, Channel test);

inline constexpr std::string_view kUnknownLabel = "unk";

struct SegmentMeta {
  std::string speaker_id{kUnknownLabel};
  std::string language{kUnknownLabel};
  Gender gender = Gender::kUnknown;
  Channel channel = Channel::kUnknown;
  std::string dataset{kUnknownLabel};

  bool operator==(const SegmentMeta &) const = default;
};

/// Returns the label of `meta` for the given attribute; "unk" when unknown.
std::string LabelOf(const SegmentMeta &meta, LabelKind kind);

/// Segment embeddings (one row per segment) with their metadata. Immutable
/// after construction.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  /// Validates: unique ids, finite values, d >= 1, one meta record per row.
  /// An empty `meta` means all-unknown metadata.
  EmbeddingSet(std::vector<std::string> ids, Matrix vectors,
               std::vector<SegmentMeta> meta = {});

  std::size_t Size() const { return ids_.size(); }
  Eigen::Index Dim() const { return vectors_.cols(); }
  const std::vector<std::string> &Ids() const { return ids_; }
  const Matrix &Vectors() const { return vectors_; }
  const std::vector<SegmentMeta> &Meta() const { return meta_; }

  std::optional<std::size_t> Find(std::string_view id) const;
  /// Like Find but throws DataError naming the id.
  std::size_t IndexOf(std::string_view id) const;

  /// Same ids and metadata, different vectors (row count must match).
  EmbeddingSet WithVectors(Matrix vectors) const;
  EmbeddingSet Subset(const std::vector<std::size_t> &rows) const;

 private:
  std::vector<std::string> ids_;
  Matrix vectors_;
  std::vector<SegmentMeta> meta_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Groups row indices by label value, skipping "unk" labels. Groups are
/// ordered by label string.
std::map<std::string, std::vector<std::size_t>> GroupByLabel(
    const EmbeddingSet &set, LabelKind kind);

struct Trial {
  std::string model_id;
  std::string test_id;
  TrialKey key = TrialKey::kUnknown;
  TrialType type = TrialType::kUnknown;
};

struct TrialList {
  /// model id -> 1..3 enrollment segment ids
  std::map<std::string, std::vector<std::string>> models;
  std::vector<Trial> trials;
};

/// Trial type of `trial`: its own label when present, otherwise derived from
/// segment channels (the enrollment channel is the majority channel of the
/// enrollment segments; a tie gives unknown).
TrialType ResolveTrialType(const Trial &trial, const TrialList &list,
                           const EmbeddingSet &set);

struct ScoreEntry {
  std::string model_id;
  std::string test_id;
  double score = 0.0;
  TrialKey key = TrialKey::kUnknown;
  TrialType type = TrialType::kUnknown;
};

struct ScoreSet {
  std::vector<ScoreEntry> entries;
  std::string provenance;
};

/// Default metadata sidecar for an embedding path: "x.tsv" / "x.f32" / "x"
/// all map to "x.meta.tsv".
std::string MetadataSidecarPath(const std::string &embedding_path);

/// Loads embeddings. For kRaw, `path` is the stem (a trailing ".f32" is
/// accepted). Metadata is read from `meta_path` when given, otherwise from
/// the default sidecar when it exists, otherwise all-unknown.
EmbeddingSet LoadEmbeddings(const std::string &path, EmbeddingFormat format,
                            const std::string &meta_path = "");
/// Writes vectors (and the metadata sidecar).
void WriteEmbeddings(const EmbeddingSet &set, const std::string &path,
                     EmbeddingFormat format);

/// Metadata TSV keyed by segment id. Records for ids not in `ids` are
/// ignored; ids missing from the file get all-unknown metadata.
std::vector<SegmentMeta> LoadMetadata(const std::string &path,
                                      const std::vector<std::string> &ids);
void WriteMetadata(const EmbeddingSet &set, const std::string &path);

TrialList LoadTrials(const std::string &trials_path,
                     const std::string &models_path);
void WriteTrials(const TrialList &list, const std::string &trials_path,
                 const std::string &models_path);

/// Scores TSV. Key and trial-type columns are written only when some entry
/// carries them. Scores use 9 significant digits.
void WriteScores(const ScoreSet &scores, const std::string &path);
ScoreSet LoadScores(const std::string &path);

/// Formats a score the way WriteScores does.
std::string FormatScore(double score);

}  // namespace svback

#endif  // SVBACK_DATA_MODEL_H_
