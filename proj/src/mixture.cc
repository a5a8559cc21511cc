// src/mixture.cc

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

#include "svback/mixture.h"

#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "svback/json-util.h"

namespace svback {

PldaMixture::PldaMixture(std::vector<MixtureComponent> components, Vector prior)
    : components_(std::move(components)), prior_(std::move(prior)) {
  if (components_.empty()) throw DataError("mixture needs >= 1 component");
  const Eigen::Index d = components_.front().model.Dim();
  std::set<std::string> seen;
  for (const auto &c : components_) {
    if (c.model.Dim() != d)
      throw DataError("mixture components have different dimensions");
    if (!seen.insert(c.language).second)
      throw DataError(StrCat("duplicate mixture language '", c.language, "'"));
  }
  const Eigen::Index k = static_cast<Eigen::Index>(components_.size());
  if (prior_.size() == 0) prior_ = Vector::Constant(k, 1.0 / static_cast<double>(k));
  if (prior_.size() != k)
    throw DataError("mixture prior length does not match component count");
  if ((prior_.array() < 0.0).any() || !prior_.allFinite() ||
      std::abs(prior_.sum() - 1.0) > 1e-12)
    throw DataError("mixture prior must be non-negative and sum to 1");
  log_prior_ = prior_.array().log();
}

Vector PosteriorFromLog(const Vector &log_values) {
  const double top = log_values.maxCoeff();
  if (!std::isfinite(top))
    throw NumericalError("all mixture component likelihoods underflow");
  Vector w = (log_values.array() - top).exp();
  return w / w.sum();
}

Vector PldaMixture::JointLogLikelihoods(const Matrix &set) const {
  Vector out(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t p = 0; p < components_.size(); ++p)
    out(static_cast<Eigen::Index>(p)) =
        log_prior_(static_cast<Eigen::Index>(p)) +
        components_[p].model.MarginalLogLikelihood(set);
  return out;
}

Vector PldaMixture::LanguageWeights(const Matrix &set) const {
  return PosteriorFromLog(JointLogLikelihoods(set));
}

Vector PldaMixture::ComponentScores(const Matrix &enroll,
                                    const Vector &test) const {
  Vector out(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t p = 0; p < components_.size(); ++p)
    out(static_cast<Eigen::Index>(p)) =
        components_[p].model.LogLikelihoodRatio(enroll, test);
  return out;
}

Vector PldaMixture::TrialWeights(const Matrix &enroll,
                                 const Vector &test) const {
  return 0.5 * (LanguageWeights(enroll) + LanguageWeights(test.transpose()));
}

double PldaMixture::Score(const Matrix &enroll, const Vector &test) const {
  return TrialWeights(enroll, test).dot(ComponentScores(enroll, test));
}

nlohmann::ordered_json PldaMixture::ToJson() const {
  nlohmann::ordered_json j;
  j["type"] = "plda_mixture";
  j["dim"] = Dim();
  j["prior"] = VectorToJson(prior_);
  j["components"] = nlohmann::ordered_json::array();
  for (const auto &c : components_) {
    nlohmann::ordered_json cj;
    cj["language"] = c.language;
    cj["model"] = c.model.ToJson();
    j["components"].push_back(std::move(cj));
  }
  return j;
}

PldaMixture PldaMixture::FromJson(const nlohmann::json &j) {
  try {
    if (j.value("type", "") != "plda_mixture")
      throw DataError("not a PLDA mixture document");
    std::vector<MixtureComponent> comps;
    for (const auto &cj : j.at("components"))
      comps.push_back({cj.at("language").get<std::string>(),
                       PldaModel::FromJson(cj.at("model"))});
    return PldaMixture(std::move(comps), VectorFromJson(j.at("prior"), "prior"));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed PLDA mixture: ", e.what()));
  }
}

void PldaMixture::Save(const std::string &path) const {
  WriteJsonFile(ToJson(), path);
}

PldaMixture PldaMixture::Load(const std::string &path) {
  return FromJson(ReadJsonFile(path));
}

PldaMixture TrainMixture(const EmbeddingSet &set,
                         const std::vector<std::string> &languages,
                         const TrainOptions &opts) {
  if (languages.empty()) throw UsageError("mixture needs >= 1 language");
  auto groups = GroupByLabel(set, LabelKind::kLanguage);
  std::vector<EmbeddingSet> subsets;
  for (const auto &lang : languages) {
    auto it = groups.find(lang);
    if (it == groups.end())
      throw DataError(StrCat("language '", lang, "' is absent from the ",
                             "training metadata"));
    EmbeddingSet subset = set.Subset(it->second);
    if (GroupByLabel(subset, LabelKind::kSpeaker).size() < 2)
      throw DataError(StrCat("language '", lang, "' has fewer than 2 ",
                             "speakers"));
    subsets.push_back(std::move(subset));
  }
  // Components are independent; train them in parallel.
  std::vector<PldaModel> models(languages.size());
  ParallelFor(languages.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      models[i] = TrainPlda(subsets[i], opts).model;
  });
  std::vector<MixtureComponent> comps;
  for (std::size_t i = 0; i < languages.size(); ++i)
    comps.push_back({languages[i], std::move(models[i])});
  return PldaMixture(std::move(comps));
}

}  // namespace svback
