// src/common.cc

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

#include "svback/common.h"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>
#include <vector>

namespace svback {

namespace {

std::mutex g_warn_mutex;
WarningSink g_warn_sink;
std::atomic<int> g_num_threads{0};

}  // namespace

void SetWarningSink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  g_warn_sink = std::move(sink);
}

void Warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  if (g_warn_sink) {
    g_warn_sink(message);
  } else {
    std::cerr << "WARNING (svback) " << message << '\n';
  }
}

void SetNumThreads(int n) { g_num_threads = std::max(1, n); }

int NumThreads() {
  int n = g_num_threads.load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void ParallelFor(std::size_t n, std::size_t block,
                 const std::function<void(std::size_t, std::size_t)> &body) {
  if (n == 0) return;
  block = std::max<std::size_t>(1, block);
  const std::size_t num_blocks = (n + block - 1) / block;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(NumThreads()), num_blocks);
  auto run_block = [&](std::size_t b) {
    std::size_t begin = b * block;
    body(begin, std::min(n, begin + block));
  };
  if (workers <= 1) {
    for (std::size_t b = 0; b < num_blocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < num_blocks; b = next++) {
        try {
          run_block(b);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto &t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void FixSign(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return;
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
}

SortedEigen SymmetricEigenDescending(const Matrix &sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw NumericalError("symmetric eigendecomposition failed");
  const Eigen::Index d = sym.rows();
  SortedEigen out;
  out.values.resize(d);
  out.vectors.resize(d, d);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values(i) = es.eigenvalues()(d - 1 - i);
    out.vectors.col(i) = es.eigenvectors().col(d - 1 - i);
    FixSign(out.vectors.col(i));
  }
  return out;
}

Vector ColumnMean(const Matrix &rows) {
  if (rows.rows() == 0) throw DataError("mean of an empty set");
  return rows.colwise().mean().transpose();
}

Matrix Covariance(const Matrix &rows) {
  Vector mean = ColumnMean(rows);
  Matrix centered = rows.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(rows.rows());
}

}  // namespace svback
