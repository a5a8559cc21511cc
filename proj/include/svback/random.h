// svback/random.h

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

#ifndef SVBACK_RANDOM_H_
#define SVBACK_RANDOM_H_

#include <cstdint>
#include <random>

#include "svback/common.h"

namespace svback {

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t SplitMix64(std::uint64_t x);

/// Seed of sub-stream `stream` of master seed `seed`:
///   SplitMix64(seed ^ SplitMix64(stream + 1)).
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

/// Portable generator: std::mt19937_64 (fully specified by the standard)
/// plus hand-written uniform and normal transforms, because the standard
/// distributions are implementation-defined. Same seed, same numbers on
/// every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform();
  /// Uniform integer in [0, n), n >= 1 (rejection sampling, unbiased).
  std::uint64_t Below(std::uint64_t n);
  /// Standard normal (Box-Muller, both outputs used).
  double Normal();
  Vector NormalVector(Eigen::Index d);
  Matrix NormalMatrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Random matrix with orthonormal columns (d x k), from QR of a Gaussian
/// matrix with column signs fixed.
Matrix RandomOrthonormal(Rng &rng, Eigen::Index d, Eigen::Index k);

}  // namespace svback

#endif  // SVBACK_RANDOM_H_
