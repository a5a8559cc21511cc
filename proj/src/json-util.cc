// src/json-util.cc

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

#include "svback/json-util.h"

#include <fstream>

namespace svback {

nlohmann::json VectorToJson(const Vector &v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector VectorFromJson(const nlohmann::json &j, const char *what) {
  if (!j.is_array()) throw DataError(StrCat(what, ": expected an array"));
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(StrCat(what, ": non-numeric entry"));
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  if (!v.allFinite()) throw DataError(StrCat(what, ": non-finite entry"));
  return v;
}

nlohmann::json MatrixToJson(const Matrix &m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

Matrix MatrixFromJson(const nlohmann::json &j, Eigen::Index rows,
                      Eigen::Index cols, const char *what) {
  Vector flat = VectorFromJson(j, what);
  if (flat.size() != rows * cols)
    throw DataError(StrCat(what, ": expected ", rows * cols, " entries, got ",
                           flat.size()));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat(r * cols + c);
  return m;
}

nlohmann::json ReadJsonFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DataError(StrCat("cannot open ", path));
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(StrCat("malformed JSON in ", path, ": ", e.what()));
  }
}

void WriteJsonFile(const nlohmann::ordered_json &j, const std::string &path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError(StrCat("cannot write ", path));
  os << j.dump(1) << '\n';
  os.flush();
  if (!os) throw DataError(StrCat("I/O failure writing ", path));
}

}  // namespace svback
