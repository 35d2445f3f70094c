#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "spancca/errors.hpp"
#include "spancca/matrix_io.hpp"
#include "spancca/rng.hpp"

namespace spancca {

/// Rank-r factorization U diag(S) V' with orthonormal U, V and non-increasing
/// nonnegative S. The product B = U diag(S) V' is the surrogate the solver
/// operates on; it is never materialized.
struct RankRFactors {
  Eigen::MatrixXd U;  // m x r
  Eigen::VectorXd S;  // r, descending
  Eigen::MatrixXd V;  // n x r

  Eigen::Index rank() const { return S.size(); }
  Eigen::Index rows() const { return U.rows(); }
  Eigen::Index cols() const { return V.rows(); }
};

struct SpectralEstimates {
  double sigma1 = 0.0;
  double sigma_r_plus_1 = 0.0;
  Eigen::Index r = 0;
};

/// Full SVD of a small dense matrix.
struct SmallSvd {
  Eigen::MatrixXd U;
  Eigen::VectorXd S;
  Eigen::MatrixXd V;
};

namespace linalg_detail {

// Flip each column of U so its largest-magnitude coordinate (lowest index on
// ties) is positive; V columns flip along to keep U diag(S) V' unchanged.
inline void canonicalize_signs(Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = std::abs(u(0, j));
    for (Eigen::Index i = 1; i < u.rows(); ++i) {
      const double m = std::abs(u(i, j));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (u(arg, j) < 0.0) {
      u.col(j) = -u.col(j);
      v.col(j) = -v.col(j);
    }
  }
}

// Fill columns [filled, total) of q with an orthonormal completion drawn from
// the canonical basis (modified Gram-Schmidt).
inline void complete_basis(Eigen::MatrixXd& q, Eigen::Index filled) {
  const Eigen::Index n = q.rows();
  for (Eigen::Index k = 0; k < n && filled < q.cols(); ++k) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    w[k] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < filled; ++j) {
        w -= q.col(j).dot(w) * q.col(j);
      }
    }
    const double nw = w.norm();
    if (nw > 0.5) {
      q.col(filled++) = w / nw;
    }
  }
}

inline Eigen::MatrixXd thin_q(const Eigen::MatrixXd& y) {
  const Eigen::Index k = std::min(y.rows(), y.cols());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), k);
}

}  // namespace linalg_detail

/// Dense SVD by one-sided Jacobi rotations. Intended for small matrices: the
/// reduced factor of the randomized SVD and the support blocks of the
/// exhaustive search. Returns complete orthonormal factors with singular
/// values sorted descending, even for rank-deficient input.
inline SmallSvd jacobi_svd(const Eigen::MatrixXd& a) {
  const bool transposed = a.rows() < a.cols();
  Eigen::MatrixXd w = transposed ? a.transpose() : a;
  const Eigen::Index q = w.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(q, q);

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 60;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index i = 0; i + 1 < q; ++i) {
      for (Eigen::Index j = i + 1; j < q; ++j) {
        const double alpha = w.col(i).squaredNorm();
        const double beta = w.col(j).squaredNorm();
        const double gamma = w.col(i).dot(w.col(j));
        if (gamma == 0.0 || gamma * gamma <= kTol * kTol * alpha * beta) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index k = 0; k < w.rows(); ++k) {
          const double wi = w(k, i);
          const double wj = w(k, j);
          w(k, i) = c * wi - s * wj;
          w(k, j) = s * wi + c * wj;
        }
        for (Eigen::Index k = 0; k < q; ++k) {
          const double vi = v(k, i);
          const double vj = v(k, j);
          v(k, i) = c * vi - s * vj;
          v(k, j) = s * vi + c * vj;
        }
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  Eigen::VectorXd sigma(q);
  for (Eigen::Index j = 0; j < q; ++j) sigma[j] = w.col(j).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index l, Eigen::Index r) { return sigma[l] > sigma[r]; });

  SmallSvd out;
  out.U.resize(w.rows(), q);
  out.V.resize(q, q);
  out.S.resize(q);
  Eigen::Index nonzero = 0;
  const double floor = sigma[order[0]] * 1e-300;
  for (Eigen::Index j = 0; j < q; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.S[j] = sigma[src];
    out.V.col(j) = v.col(src);
    if (sigma[src] > floor && sigma[src] > 0.0) {
      out.U.col(j) = w.col(src) / sigma[src];
      ++nonzero;
    } else {
      out.U.col(j).setZero();
      out.S[j] = 0.0;
    }
  }
  linalg_detail::complete_basis(out.U, nonzero);
  if (transposed) std::swap(out.U, out.V);
  linalg_detail::canonicalize_signs(out.U, out.V);
  return out;
}

/// Rank-r truncated SVD by Gaussian-sketch subspace iteration, finished with
/// the one-sided Jacobi kernel on the reduced factor. Deterministic given
/// (M, r, power_iters, oversample, seed).
inline RankRFactors truncated_svd(const CrossCov& m, Eigen::Index r,
                                  int power_iters = 4, int oversample = 8,
                                  std::uint64_t seed = 0) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  if (r < 1 || r > std::min(rows, cols)) {
    throw RankError("rank " + std::to_string(r) + " outside [1, " +
                    std::to_string(std::min(rows, cols)) + "]");
  }
  const Eigen::Index l =
      std::min(std::min(rows, cols), r + static_cast<Eigen::Index>(oversample));

  RngStream stream(seed, RngDomain::sketch, 0);
  Eigen::MatrixXd sketch(cols, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    for (Eigen::Index i = 0; i < cols; ++i) sketch(i, j) = stream.next_normal();
  }

  Eigen::MatrixXd q = linalg_detail::thin_q(m * sketch);
  for (int it = 0; it < power_iters; ++it) {
    q = linalg_detail::thin_q(m.transpose() * q);
    q = linalg_detail::thin_q(m * q);
  }

  // M ~ Q (Q'M); factor Q'M = R' Q2' via QR of its transpose, then run the
  // dense kernel on the small l x l triangle.
  Eigen::MatrixXd ct = m.transpose() * q;  // n x l
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ct);
  Eigen::MatrixXd q2 = qr.householderQ() * Eigen::MatrixXd::Identity(cols, l);
  Eigen::MatrixXd rt = Eigen::MatrixXd(qr.matrixQR().topRows(l).triangularView<Eigen::Upper>())
                           .transpose();  // l x l

  const SmallSvd small = jacobi_svd(rt);

  RankRFactors f;
  f.U = q * small.U.leftCols(r);
  f.V = q2 * small.V.leftCols(r);
  f.S = small.S.head(r);
  linalg_detail::canonicalize_signs(f.U, f.V);
  return f;
}

/// Matrix-vector products in factor space: U diag(S) c, the range sample of
/// each solver round.
inline Eigen::VectorXd left_apply(const RankRFactors& f, const Eigen::VectorXd& c) {
  if (c.size() != f.rank()) {
    throw ShapeError("left_apply: coefficient length " + std::to_string(c.size()) +
                     " != rank " + std::to_string(f.rank()));
  }
  Eigen::VectorXd sc = f.S.cwiseProduct(c);
  Eigen::VectorXd out(f.rows());
  out.noalias() = f.U * sc;
  return out;
}

/// B'u = V diag(S) U'u without materializing B.
inline Eigen::VectorXd right_apply(const RankRFactors& f, const Eigen::VectorXd& u) {
  if (u.size() != f.rows()) {
    throw ShapeError("right_apply: vector length " + std::to_string(u.size()) +
                     " != " + std::to_string(f.rows()));
  }
  Eigen::VectorXd t(f.rank());
  t.noalias() = f.U.transpose() * u;
  t = f.S.cwiseProduct(t);
  Eigen::VectorXd out(f.cols());
  out.noalias() = f.V * t;
  return out;
}

/// Power-iteration estimate of ||M - B||_2, evaluated through factor-space
/// callbacks so the residual is never materialized. The returned value is
/// ||(M - B)x|| for a unit vector x, hence never overshoots the true
/// residual norm.
inline double residual_spectral_norm(const CrossCov& m, const RankRFactors& f,
                                     int iters = 100, std::uint64_t seed = 0) {
  const Eigen::Index cols = m.cols();
  RngStream stream(seed, RngDomain::residual, 0);
  Eigen::VectorXd x(cols);
  for (Eigen::Index i = 0; i < cols; ++i) x[i] = stream.next_normal();
  const double nx = x.norm();
  if (nx == 0.0) return 0.0;
  x /= nx;

  Eigen::VectorXd y(m.rows()), z(cols), t(f.rank());
  const auto residual_apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out.noalias() = m * in;
    t.noalias() = f.V.transpose() * in;
    t = f.S.cwiseProduct(t);
    out.noalias() -= f.U * t;
  };
  const auto residual_apply_t = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out.noalias() = m.transpose() * in;
    t.noalias() = f.U.transpose() * in;
    t = f.S.cwiseProduct(t);
    out.noalias() -= f.V * t;
  };

  for (int k = 0; k < iters; ++k) {
    residual_apply(x, y);
    residual_apply_t(y, z);
    const double nz = z.norm();
    if (nz == 0.0) return y.norm() < 1e-300 ? 0.0 : y.norm();
    x = z / nz;
  }
  residual_apply(x, y);
  return y.norm();
}

}  // namespace spancca
