#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "spancca/errors.hpp"
#include "spancca/linalg.hpp"
#include "spancca/matrix_io.hpp"
#include "spancca/projections.hpp"

namespace spancca {

/// Output of a ground-truth or baseline solver.
struct OracleResult {
  SparseVector u;
  SparseVector v;
  double objective = 0.0;
  std::uint64_t supports_examined = 0;
};

inline double bilinear(const CrossCov& m, const SparseVector& u, const SparseVector& v) {
  double total = 0.0;
  for (const auto& [j, vv] : v.entries) {
    double acc = 0.0;
    for (const auto& [i, uv] : u.entries) acc += uv * m(i, j);
    total += acc * vv;
  }
  return total;
}

namespace oracle_detail {

constexpr std::uint64_t kBinomialCap = std::uint64_t{1} << 62;

// Exact below the cap, saturates at cap + 1 beyond it.
inline std::uint64_t binomial_capped(Eigen::Index n, Eigen::Index k,
                                     std::uint64_t cap = kBinomialCap) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned __int128 r = 1;
  for (Eigen::Index i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned __int128>(n - k + i);
    r /= static_cast<unsigned __int128>(i);
    if (r > cap) return cap + 1;
  }
  return static_cast<std::uint64_t>(r);
}

// rank-th k-subset of {0..n-1} in lexicographic order.
inline void unrank_combination(std::uint64_t rank, Eigen::Index n, Eigen::Index k,
                               std::vector<Eigen::Index>& out) {
  out.resize(static_cast<std::size_t>(k));
  Eigen::Index x = 0;
  for (Eigen::Index pos = 0; pos < k; ++pos) {
    for (;;) {
      const std::uint64_t cnt = binomial_capped(n - 1 - x, k - 1 - pos);
      if (rank < cnt) break;
      rank -= cnt;
      ++x;
    }
    out[static_cast<std::size_t>(pos)] = x++;
  }
}

inline bool next_combination(std::vector<Eigen::Index>& comb, Eigen::Index n) {
  const Eigen::Index k = static_cast<Eigen::Index>(comb.size());
  Eigen::Index i = k - 1;
  while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++comb[static_cast<std::size_t>(i)];
  for (Eigen::Index j = i + 1; j < k; ++j) {
    comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  }
  return true;
}

inline SparseVector embed(const std::vector<Eigen::Index>& support,
                          const Eigen::VectorXd& values, Eigen::Index dim) {
  SparseVector out;
  out.dim = dim;
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (values[static_cast<Eigen::Index>(k)] != 0.0) {
      out.entries.emplace_back(support[k], values[static_cast<Eigen::Index>(k)]);
    }
  }
  return out;
}

struct ChunkBest {
  double objective = -std::numeric_limits<double>::infinity();
  std::uint64_t pair_rank = 0;
  std::vector<Eigen::Index> rows, cols;
  Eigen::VectorXd u, v;
  bool has = false;
};

}  // namespace oracle_detail

/// Optimal solver by support enumeration: for every pair of supports of sizes
/// exactly (s_x, s_y), take the top singular triple of the restricted block
/// and keep the global argmax, ties to the lexicographically smaller pair.
/// Budget-exceeding instances fail loudly instead of being truncated.
inline OracleResult exhaustive_cca(const CrossCov& m, Eigen::Index s_x, Eigen::Index s_y,
                                   std::uint64_t limit = 10'000'000, int threads = 1) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  if (s_x < 1 || s_x > rows || s_y < 1 || s_y > cols) {
    throw UsageError("sparsity budgets outside matrix dimensions");
  }
  const std::uint64_t ci = oracle_detail::binomial_capped(rows, s_x);
  const std::uint64_t cj = oracle_detail::binomial_capped(cols, s_y);
  const unsigned __int128 pairs = static_cast<unsigned __int128>(ci) * cj;
  if (ci > oracle_detail::kBinomialCap || cj > oracle_detail::kBinomialCap ||
      pairs > limit) {
    std::string count = pairs > oracle_detail::kBinomialCap
                            ? std::string("more than 4.6e18")
                            : std::to_string(static_cast<std::uint64_t>(pairs));
    throw CapacityError("support enumeration needs " + count +
                        " pairs, over the limit of " + std::to_string(limit));
  }
  const std::uint64_t total = static_cast<std::uint64_t>(pairs);

  const std::uint64_t want = static_cast<std::uint64_t>(std::max(1, threads));
  const int nthreads = static_cast<int>(std::min(want, total));
  std::vector<oracle_detail::ChunkBest> best(static_cast<std::size_t>(nthreads));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(nthreads));

  auto scan = [&](int w) {
    try {
      auto& mine = best[static_cast<std::size_t>(w)];
      const std::uint64_t lo = static_cast<std::uint64_t>(
          static_cast<unsigned __int128>(total) * static_cast<std::uint64_t>(w) /
          static_cast<std::uint64_t>(nthreads));
      const std::uint64_t hi = static_cast<std::uint64_t>(
          static_cast<unsigned __int128>(total) * (static_cast<std::uint64_t>(w) + 1) /
          static_cast<std::uint64_t>(nthreads));
      if (lo >= hi) return;
      std::vector<Eigen::Index> isup, jsup;
      oracle_detail::unrank_combination(lo / cj, rows, s_x, isup);
      oracle_detail::unrank_combination(lo % cj, cols, s_y, jsup);
      Eigen::MatrixXd block(s_x, s_y);
      for (std::uint64_t t = lo; t < hi; ++t) {
        for (Eigen::Index a = 0; a < s_x; ++a) {
          for (Eigen::Index b = 0; b < s_y; ++b) {
            block(a, b) = m(isup[static_cast<std::size_t>(a)],
                            jsup[static_cast<std::size_t>(b)]);
          }
        }
        const SmallSvd svd = jacobi_svd(block);
        const double obj = svd.S[0];
        if (!mine.has || obj > mine.objective) {
          mine.has = true;
          mine.objective = obj;
          mine.pair_rank = t;
          mine.rows = isup;
          mine.cols = jsup;
          mine.u = svd.U.col(0);
          mine.v = svd.V.col(0);
        }
        if (t + 1 < hi) {
          if (!oracle_detail::next_combination(jsup, cols)) {
            oracle_detail::next_combination(isup, rows);
            oracle_detail::unrank_combination(0, cols, s_y, jsup);
          }
        }
      }
    } catch (...) {
      failures[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };

  if (nthreads == 1) {
    scan(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int w = 0; w < nthreads; ++w) pool.emplace_back(scan, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : failures) {
    if (e) std::rethrow_exception(e);
  }

  int winner = -1;
  for (int w = 0; w < nthreads; ++w) {
    const auto& cand = best[static_cast<std::size_t>(w)];
    if (!cand.has) continue;
    if (winner < 0 || cand.objective > best[static_cast<std::size_t>(winner)].objective ||
        (cand.objective == best[static_cast<std::size_t>(winner)].objective &&
         cand.pair_rank < best[static_cast<std::size_t>(winner)].pair_rank)) {
      winner = w;
    }
  }
  auto& win = best[static_cast<std::size_t>(winner)];

  OracleResult out;
  out.supports_examined = total;
  out.objective = win.objective;
  out.u = oracle_detail::embed(win.rows, win.u, rows);
  out.v = oracle_detail::embed(win.cols, win.v, cols);
  return out;
}

/// Baseline: hard-threshold the unconstrained solution. The top singular pair
/// is truncated to the budgets and rescaled; the objective is re-evaluated on
/// the input matrix.
inline OracleResult threshold_cca(const CrossCov& m, Eigen::Index s_x, Eigen::Index s_y) {
  if (s_x < 1 || s_x > m.rows() || s_y < 1 || s_y > m.cols()) {
    throw UsageError("sparsity budgets outside matrix dimensions");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd u1 = svd.matrixU().col(0);
  Eigen::VectorXd v1 = svd.matrixV().col(0);
  // deterministic joint sign
  Eigen::Index arg = 0;
  u1.cwiseAbs().maxCoeff(&arg);
  if (u1[arg] < 0.0) {
    u1 = -u1;
    v1 = -v1;
  }
  OracleResult out;
  out.u = project_sparse_unit(u1, s_x);
  out.v = project_sparse_unit(v1, s_y);
  out.objective = bilinear(m, out.u, out.v);
  out.supports_examined = 1;
  return out;
}

/// For a symmetric PSD argument the exhaustive optimum must satisfy u = +/-v;
/// runs the enumeration at equal budgets and checks that property.
inline bool psd_symmetry_check(const CrossCov& a, Eigen::Index k) {
  if (a.rows() != a.cols()) {
    throw PrecondError("matrix is not square");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + scale)) {
    throw PrecondError("matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-10 * lmax) {
    throw PrecondError("matrix is not positive semidefinite");
  }

  const OracleResult res = exhaustive_cca(a, k, k);
  if (res.u.entries.size() != res.v.entries.size()) return false;
  double diff_plus = 0.0, diff_minus = 0.0;
  for (std::size_t i = 0; i < res.u.entries.size(); ++i) {
    if (res.u.entries[i].first != res.v.entries[i].first) return false;
    diff_plus = std::max(diff_plus,
                         std::abs(res.u.entries[i].second - res.v.entries[i].second));
    diff_minus = std::max(diff_minus,
                          std::abs(res.u.entries[i].second + res.v.entries[i].second));
  }
  return diff_plus <= 1e-8 || diff_minus <= 1e-8;
}

}  // namespace spancca
