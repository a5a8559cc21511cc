// svback/json-util.h

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

#ifndef SVBACK_JSON_UTIL_H_
#define SVBACK_JSON_UTIL_H_

#include <string>

#include "json.hpp"
#include "svback/common.h"

namespace svback {

// Matrices are stored row-major as flat arrays; nlohmann writes doubles in
// shortest round-trip form, so a save/load cycle is exact.
nlohmann::json VectorToJson(const Vector &v);
Vector VectorFromJson(const nlohmann::json &j, const char *what);
nlohmann::json MatrixToJson(const Matrix &m);
Matrix MatrixFromJson(const nlohmann::json &j, Eigen::Index rows,
                      Eigen::Index cols, const char *what);

nlohmann::json ReadJsonFile(const std::string &path);
void WriteJsonFile(const nlohmann::ordered_json &j, const std::string &path);

}  // namespace svback

#endif  // SVBACK_JSON_UTIL_H_
