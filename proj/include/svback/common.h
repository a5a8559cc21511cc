// svback/common.h

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

#ifndef SVBACK_COMMON_H_
#define SVBACK_COMMON_H_

#include <cstddef>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace svback {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Errors are split by what the caller can do about them; the CLI maps each
/// class to its own exit code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a message from stream-insertable parts, e.g.
///   throw DataError(StrCat("bad dim ", d));
template <typename... Args>
std::string StrCat(const Args &...args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

/// Warnings go through a replaceable sink so tests can count them.
using WarningSink = std::function<void(std::string_view)>;
void SetWarningSink(WarningSink sink);
void Warn(std::string_view message);

/// Number of worker threads used by parallel loops (>= 1). Defaults to the
/// hardware concurrency.
void SetNumThreads(int n);
int NumThreads();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and block, never on the thread count, so any reduction
/// done per chunk is reproducible across thread counts.
void ParallelFor(std::size_t n, std::size_t block,
                 const std::function<void(std::size_t, std::size_t)> &body);

/// Symmetric eigendecomposition with eigenvalues in descending order and the
/// sign of each eigenvector fixed so its largest-magnitude entry is positive.
struct SortedEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values(i)
};
SortedEigen SymmetricEigenDescending(const Matrix &sym);

/// Flips v so that its largest-magnitude component is positive.
void FixSign(Eigen::Ref<Vector> v);

/// Sample covariance helpers (maximum-likelihood, 1/n).
Vector ColumnMean(const Matrix &rows);
Matrix Covariance(const Matrix &rows);

}  // namespace svback

#endif  // SVBACK_COMMON_H_
