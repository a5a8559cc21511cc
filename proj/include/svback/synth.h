// svback/synth.h

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

#ifndef SVBACK_SYNTH_H_
#define SVBACK_SYNTH_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "svback/common.h"
#include "svback/data-model.h"

namespace svback {

struct SynthLanguage {
  std::string name;
  Vector mean_shift;
  double share = 1.0;
};

struct SynthTrialConfig {
  int n_target = 0;
  int n_nontarget = 0;
  int sessions_per_model = 1;
  /// Nontarget trials only pair speakers of the same gender.
  bool same_gender = false;
  /// Nontarget trials only pair speakers of the same language.
  bool same_language = false;
  /// 0 = derive from the sampling seed.
  std::uint64_t seed = 0;
};

/**
   Generative sampler. Speaker s gets a language (by share), a gender g in
   {-1, +1} and a latent y ~ N(0, B); each session is

     r = mean + lang_shift + g gender_shift + c channel_shift + y + e,

   with e ~ N(0, W) and channel c in {0 (tel), 1 (mic)} drawn per session.
   Speaker s draws from its own stream DeriveSeed(seed, s), so output does
   not depend on the thread count.
*/
struct SynthSpec {
  int d = 0;
  int n_speakers = 0;
  int sessions_per_speaker = 0;
  std::vector<SynthLanguage> languages;
  Vector mean;  // zero when empty
  Vector gender_shift;
  Vector channel_shift;
  Matrix between;
  Matrix within;
  std::uint64_t seed = 0;
  std::string dataset = "synth";
  std::optional<SynthTrialConfig> trials;

  /// Throws UsageError on an inconsistent spec.
  void Validate() const;

  /// Covariances accept a scalar (times I), a length-d diagonal, a d x d
  /// nested array or a flat row-major array. Vectors default to zero.
  static SynthSpec FromJson(const nlohmann::json &j);
  nlohmann::ordered_json ToJson() const;
  static SynthSpec Load(const std::string &path);
};

EmbeddingSet Sample(const SynthSpec &spec);

/// Builds models of `sessions_per_model` segments (one per speaker with
/// enough segments) and samples target and nontarget trials without
/// repeats. Trial types come from the segment channels.
TrialList MakeTrials(const EmbeddingSet &set, int n_target, int n_nontarget,
                     int sessions_per_model, std::uint64_t seed,
                     bool same_gender = false, bool same_language = false);

}  // namespace svback

#endif  // SVBACK_SYNTH_H_
