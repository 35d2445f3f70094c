#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "spancca/projections.hpp"

namespace test_util {

// Test-side randomness is intentionally independent of the library's own
// generator: std::mt19937_64 plus the standard distributions.
inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
  }
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(gen);
  return v;
}

inline Eigen::VectorXd random_unit(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(gen);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

// Orthonormal factor sampled from the Haar measure (QR of a Gaussian).
inline Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols,
                                          std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(rows, rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = normal(gen);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  return q;
}

// Matrix with a prescribed singular spectrum.
inline Eigen::MatrixXd matrix_with_spectrum(Eigen::Index rows, Eigen::Index cols,
                                            const Eigen::VectorXd& sigma,
                                            std::mt19937_64& gen) {
  const Eigen::Index k = sigma.size();
  const Eigen::MatrixXd u = random_orthonormal(rows, k, gen);
  const Eigen::MatrixXd v = random_orthonormal(cols, k, gen);
  return u * sigma.asDiagonal() * v.transpose();
}

// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<Eigen::Index>> all_subsets(Eigen::Index n, Eigen::Index k) {
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> cur(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  for (;;) {
    out.push_back(cur);
    Eigen::Index i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < k; ++j) {
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

// Brute-force maximizer of a'u over unit vectors with support of size <= s:
// for each support, the optimum is the normalized restriction of a.
inline double brute_force_sparse_objective(const Eigen::VectorXd& a, Eigen::Index s) {
  double best = 0.0;
  for (const auto& support : all_subsets(a.size(), s)) {
    double sq = 0.0;
    for (Eigen::Index i : support) sq += a[i] * a[i];
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

inline double dot(const spancca::SparseVector& u, const Eigen::VectorXd& a) {
  double s = 0.0;
  for (const auto& [i, v] : u.entries) s += a[i] * v;
  return s;
}

}  // namespace test_util
