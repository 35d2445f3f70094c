#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spancca/errors.hpp"
#include "spancca/linalg.hpp"
#include "spancca/matrix_io.hpp"
#include "spancca/projections.hpp"
#include "spancca/rng.hpp"

namespace spancca {

struct SolverConfig {
  Eigen::Index r = 5;
  std::int64_t samples = 0;  // explicit round count T; 0 defers to epsilon/delta
  double epsilon = 0.0;
  double delta = 0.0;
  ConstraintSpec constraint_u;
  ConstraintSpec constraint_v;
  std::uint64_t seed = 0;
  int workers = 1;
  bool rescore_full = true;    // also report u' Sigma_XY v for the winner
  bool select_on_full = false;  // opt-in: pick the winner by u' Sigma_XY v
  int svd_power_iters = 4;
  int svd_oversample = 8;
  int residual_iters = 100;
};

/// One round's output: the projected pair and its low-rank objective u'Bv.
struct Candidate {
  SparseVector u;
  SparseVector v;
  double obj_lowrank = 0.0;
  std::int64_t round = -1;
};

struct SolveReport {
  Candidate best;
  double obj_full = std::numeric_limits<double>::quiet_NaN();
  double sigma1 = 0.0;
  double sigma_r_plus_1 = 0.0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double theorem1_slack = std::numeric_limits<double>::quiet_NaN();
  std::int64_t samples = 0;  // resolved round count T
  std::int64_t rounds_discarded = 0;
  double svd_ms = 0.0;
  double rounds_ms = 0.0;
  double total_ms = 0.0;
};

/// Additive offset of the approximation guarantee: eps * sigma1 + 2 * sigma_{r+1}.
inline double theorem1_slack(double sigma1, double sigma_r_plus_1, double epsilon) {
  return epsilon * sigma1 + 2.0 * sigma_r_plus_1;
}

/// Number of rounds that makes the sampled directions an eps/2-net of the
/// unit sphere in R^r with probability at least 1 - delta:
/// T = ceil(r * (eps/4)^(-r) * ln(4/(eps*delta))), leading constant 1.
inline std::int64_t samples_for_epsilon(Eigen::Index r, double epsilon, double delta) {
  if (r < 1) throw UsageError("rank must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw UsageError("epsilon must lie strictly inside (0, 1)");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw UsageError("delta must lie strictly inside (0, 1)");
  }
  const long double t =
      static_cast<long double>(r) *
      std::pow(4.0L / static_cast<long double>(epsilon), static_cast<long double>(r)) *
      std::log(4.0L / (static_cast<long double>(epsilon) * static_cast<long double>(delta)));
  if (!(t < 9.2e18L)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3Le", t);
    throw CapacityError(std::string("requested sample count ") + buf +
                        " exceeds the 2^63-1 round limit");
  }
  return static_cast<std::int64_t>(std::ceil(t));
}

/// Uniform sample from the unit sphere in R^r: i.i.d. standard normal
/// coordinates, normalized. A zero draw (possible only through a pathological
/// generator) is redrawn, never surfaced.
inline void sample_sphere_into(Eigen::VectorXd& c, RngStream& stream) {
  const Eigen::Index r = c.size();
  double* data = c.data();
  for (;;) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      data[i] = stream.next_normal();
      sq += data[i] * data[i];
    }
    if (sq > 0.0) {
      if (r == 1) {
        data[0] = data[0] > 0.0 ? 1.0 : -1.0;  // the 0-sphere has two points
      } else {
        const double inv = 1.0 / std::sqrt(sq);
        for (Eigen::Index i = 0; i < r; ++i) data[i] *= inv;
      }
      return;
    }
  }
}

inline Eigen::VectorXd sample_sphere(Eigen::Index r, RngStream& stream) {
  if (r < 1) throw UsageError("sphere dimension must be positive");
  Eigen::VectorXd c(r);
  sample_sphere_into(c, stream);
  return c;
}

namespace solver_detail {

/// Per-thread scratch for the round loop: no allocation happens per round.
struct RoundBuffers {
  Eigen::VectorXd c, a, t, b;
  std::vector<Index> u_idx, v_idx;
  std::vector<double> u_val, v_val;
  Index u_nnz = 0, v_nnz = 0;
  double obj = 0.0;
  ProjectionWorkspace ws;

  RoundBuffers(const RankRFactors& f, const ProjectionOp& pu, const ProjectionOp& pv) {
    c.resize(f.rank());
    a.resize(f.rows());
    t.resize(f.rank());
    b.resize(f.cols());
    u_idx.resize(static_cast<std::size_t>(pu.budget()));
    u_val.resize(static_cast<std::size_t>(pu.budget()));
    v_idx.resize(static_cast<std::size_t>(pv.budget()));
    v_val.resize(static_cast<std::size_t>(pv.budget()));
  }
};

// The two-step maximization of one round. buf.c must hold the sphere sample.
// Returns false when either projection sees a zero argument (the round is
// discarded). Templated on the operator types so that final overriders
// inline into the loop; the generic instantiation goes through the vtable.
template <class PU, class PV>
inline bool round_core(const RankRFactors& f, const PU& pu, const PV& pv,
                       RoundBuffers& buf) {
  const Eigen::Index r = f.rank();
  const Eigen::Index m = f.U.rows();
  const Eigen::Index n = f.V.rows();
  const double* s = f.S.data();
  const double* c = buf.c.data();

  // a = U (S o c), column-major accumulation
  {
    double* a = buf.a.data();
    const double* u = f.U.data();
    const double f0 = s[0] * c[0];
    const double* col = u;
    for (Eigen::Index i = 0; i < m; ++i) a[i] = f0 * col[i];
    for (Eigen::Index q = 1; q < r; ++q) {
      const double fq = s[q] * c[q];
      col = u + q * m;
      for (Eigen::Index i = 0; i < m; ++i) a[i] += fq * col[i];
    }
  }

  buf.u_nnz = pu.apply(buf.a.data(), buf.u_idx.data(), buf.u_val.data(), buf.ws);
  if (buf.u_nnz == 0) return false;

  // b = V (S o (U'u)) exploiting the sparsity of u
  {
    const double* u = f.U.data();
    double* t = buf.t.data();
    for (Eigen::Index q = 0; q < r; ++q) {
      const double* col = u + q * m;
      double acc = 0.0;
      for (Index k = 0; k < buf.u_nnz; ++k) {
        acc += buf.u_val[static_cast<std::size_t>(k)] *
               col[buf.u_idx[static_cast<std::size_t>(k)]];
      }
      t[q] = s[q] * acc;
    }
    double* b = buf.b.data();
    const double* v = f.V.data();
    const double t0 = t[0];
    const double* col = v;
    for (Eigen::Index j = 0; j < n; ++j) b[j] = t0 * col[j];
    for (Eigen::Index q = 1; q < r; ++q) {
      const double tq = t[q];
      col = v + q * n;
      for (Eigen::Index j = 0; j < n; ++j) b[j] += tq * col[j];
    }
  }

  buf.v_nnz = pv.apply(buf.b.data(), buf.v_idx.data(), buf.v_val.data(), buf.ws);
  if (buf.v_nnz == 0) return false;

  double obj = 0.0;
  for (Index k = 0; k < buf.v_nnz; ++k) {
    obj += buf.b[buf.v_idx[static_cast<std::size_t>(k)]] * buf.v_val[static_cast<std::size_t>(k)];
  }
  buf.obj = obj;
  return true;
}

// Fill buf.c with the sample for a given round index. Rank 1 enumerates the
// two points of the 0-sphere in rounds 0 and 1, which makes the rank-1 run
// coincide with the thresholding baseline deterministically.
inline void sample_for_round(std::uint64_t seed, std::int64_t round, RoundBuffers& buf) {
  if (buf.c.size() == 1 && round < 2) {
    buf.c[0] = round == 0 ? 1.0 : -1.0;
    return;
  }
  RngStream stream(seed, RngDomain::rounds, static_cast<std::uint64_t>(round));
  sample_sphere_into(buf.c, stream);
}

inline double sparse_bilinear(const CrossCov& m, const Index* u_idx, const double* u_val,
                              Index u_nnz, const Index* v_idx, const double* v_val,
                              Index v_nnz) {
  double total = 0.0;
  for (Index l = 0; l < v_nnz; ++l) {
    const double* col = m.col(v_idx[l]).data();
    double acc = 0.0;
    for (Index k = 0; k < u_nnz; ++k) acc += u_val[k] * col[u_idx[k]];
    total += acc * v_val[l];
  }
  return total;
}

struct WorkerBest {
  bool has = false;
  double key = -std::numeric_limits<double>::infinity();
  double obj_lowrank = 0.0;
  std::int64_t round = -1;
  std::vector<Index> u_idx, v_idx;
  std::vector<double> u_val, v_val;
  std::int64_t discarded = 0;
};

}  // namespace solver_detail

/// One sampling round against precomputed factors: sample direction c, lift
/// into the row space, project onto the u-constraint, push through B', and
/// project onto the v-constraint. Returns nullopt when the round is discarded
/// because a projection argument vanished.
inline std::optional<Candidate> run_round(const RankRFactors& f, const Eigen::VectorXd& c,
                                          const ProjectionOp& pu, const ProjectionOp& pv,
                                          std::int64_t round) {
  if (c.size() != f.rank()) {
    throw ShapeError("run_round: sample length " + std::to_string(c.size()) +
                     " != rank " + std::to_string(f.rank()));
  }
  if (pu.dim() != f.rows() || pv.dim() != f.cols()) {
    throw ShapeError("run_round: projection dimensions do not match the factors");
  }
  solver_detail::RoundBuffers buf(f, pu, pv);
  buf.c = c;
  if (!solver_detail::round_core(f, pu, pv, buf)) return std::nullopt;
  Candidate cand;
  cand.round = round;
  cand.obj_lowrank = buf.obj;
  cand.u.dim = f.rows();
  cand.v.dim = f.cols();
  for (Index k = 0; k < buf.u_nnz; ++k) {
    cand.u.entries.emplace_back(buf.u_idx[static_cast<std::size_t>(k)],
                                buf.u_val[static_cast<std::size_t>(k)]);
  }
  for (Index k = 0; k < buf.v_nnz; ++k) {
    cand.v.entries.emplace_back(buf.v_idx[static_cast<std::size_t>(k)],
                                buf.v_val[static_cast<std::size_t>(k)]);
  }
  return cand;
}

/// Full run: truncated SVD of the input, T independent sampling rounds over a
/// static partition across workers, argmax selection with ties to the lowest
/// round index. The result is invariant under the worker count.
inline SolveReport solve(const CrossCov& m, const SolverConfig& config) {
  using clock = std::chrono::steady_clock;
  const auto ms_between = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  const auto t_start = clock::now();

  if (config.samples < 0) throw UsageError("sample count must be positive");
  const std::int64_t rounds =
      config.samples > 0 ? config.samples
                         : samples_for_epsilon(config.r, config.epsilon, config.delta);
  auto pu = resolve(config.constraint_u, m.rows());
  auto pv = resolve(config.constraint_v, m.cols());

  const RankRFactors f =
      truncated_svd(m, config.r, config.svd_power_iters, config.svd_oversample, config.seed);
  const auto t_svd = clock::now();

  const int workers = std::max(1, config.workers);
  std::vector<solver_detail::WorkerBest> best(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));

  const CrossCov* full = config.select_on_full ? &m : nullptr;
  const auto run_workers = [&](const auto& cpu, const auto& cpv) {
    const auto worker_fn = [&](int w) {
      try {
        solver_detail::RoundBuffers buf(f, cpu, cpv);
        auto& mine = best[static_cast<std::size_t>(w)];
        const std::int64_t lo =
            static_cast<std::int64_t>(static_cast<__int128>(rounds) * w / workers);
        const std::int64_t hi =
            static_cast<std::int64_t>(static_cast<__int128>(rounds) * (w + 1) / workers);
        for (std::int64_t i = lo; i < hi; ++i) {
          solver_detail::sample_for_round(config.seed, i, buf);
          if (!solver_detail::round_core(f, cpu, cpv, buf)) {
            ++mine.discarded;
            continue;
          }
          const double key =
              full == nullptr
                  ? buf.obj
                  : solver_detail::sparse_bilinear(*full, buf.u_idx.data(),
                                                   buf.u_val.data(), buf.u_nnz,
                                                   buf.v_idx.data(), buf.v_val.data(),
                                                   buf.v_nnz);
          if (!mine.has || key > mine.key) {
            mine.has = true;
            mine.key = key;
            mine.obj_lowrank = buf.obj;
            mine.round = i;
            mine.u_idx.assign(buf.u_idx.begin(), buf.u_idx.begin() + buf.u_nnz);
            mine.u_val.assign(buf.u_val.begin(), buf.u_val.begin() + buf.u_nnz);
            mine.v_idx.assign(buf.v_idx.begin(), buf.v_idx.begin() + buf.v_nnz);
            mine.v_val.assign(buf.v_val.begin(), buf.v_val.begin() + buf.v_nnz);
          }
        }
      } catch (...) {
        failures[static_cast<std::size_t>(w)] = std::current_exception();
      }
    };
    if (workers == 1) {
      worker_fn(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn, w);
      for (auto& th : pool) th.join();
    }
  };

  // devirtualize the common operator pairs so apply() inlines into the loop
  {
    const ProjectionOp& bu = *pu;
    const ProjectionOp& bv = *pv;
    const auto* su = dynamic_cast<const SparseUnitProjection*>(&bu);
    const auto* sv = dynamic_cast<const SparseUnitProjection*>(&bv);
    const auto* uv = dynamic_cast<const UnitProjection*>(&bv);
    if (su != nullptr && sv != nullptr) {
      run_workers(*su, *sv);
    } else if (su != nullptr && uv != nullptr) {
      run_workers(*su, *uv);
    } else {
      run_workers(bu, bv);
    }
  }
  for (auto& e : failures) {
    if (e) std::rethrow_exception(e);
  }
  const auto t_rounds = clock::now();

  SolveReport report;
  report.samples = rounds;
  int winner = -1;
  for (int w = 0; w < workers; ++w) {
    const auto& cand = best[static_cast<std::size_t>(w)];
    report.rounds_discarded += cand.discarded;
    if (!cand.has) continue;
    if (winner < 0 || cand.key > best[static_cast<std::size_t>(winner)].key ||
        (cand.key == best[static_cast<std::size_t>(winner)].key &&
         cand.round < best[static_cast<std::size_t>(winner)].round)) {
      winner = w;
    }
  }
  if (winner < 0) {
    throw DegenerateInput("every sampling round was discarded: the rank-" +
                          std::to_string(config.r) + " surrogate is zero");
  }

  auto& win = best[static_cast<std::size_t>(winner)];
  // joint sign flip: make the largest-magnitude coordinate of u positive
  {
    std::size_t arg = 0;
    double largest = 0.0;
    for (std::size_t k = 0; k < win.u_val.size(); ++k) {
      if (std::abs(win.u_val[k]) > largest) {
        largest = std::abs(win.u_val[k]);
        arg = k;
      }
    }
    if (win.u_val[arg] < 0.0) {
      for (auto& v : win.u_val) v = -v;
      for (auto& v : win.v_val) v = -v;
    }
  }

  report.best.round = win.round;
  report.best.obj_lowrank = win.obj_lowrank;
  report.best.u.dim = m.rows();
  report.best.v.dim = m.cols();
  for (std::size_t k = 0; k < win.u_idx.size(); ++k) {
    report.best.u.entries.emplace_back(win.u_idx[k], win.u_val[k]);
  }
  for (std::size_t k = 0; k < win.v_idx.size(); ++k) {
    report.best.v.entries.emplace_back(win.v_idx[k], win.v_val[k]);
  }

  if (config.rescore_full || config.select_on_full) {
    report.obj_full = solver_detail::sparse_bilinear(
        m, win.u_idx.data(), win.u_val.data(), static_cast<Index>(win.u_idx.size()),
        win.v_idx.data(), win.v_val.data(), static_cast<Index>(win.v_idx.size()));
  }

  report.sigma1 = f.S.size() > 0 ? f.S[0] : 0.0;
  report.sigma_r_plus_1 =
      residual_spectral_norm(m, f, config.residual_iters, config.seed);
  if (config.samples <= 0) {
    report.epsilon = config.epsilon;
    report.theorem1_slack =
        theorem1_slack(report.sigma1, report.sigma_r_plus_1, config.epsilon);
  }

  const auto t_end = clock::now();
  report.svd_ms = ms_between(t_start, t_svd);
  report.rounds_ms = ms_between(t_svd, t_rounds);
  report.total_ms = ms_between(t_start, t_end);
  return report;
}

}  // namespace spancca
