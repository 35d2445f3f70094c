#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spancca/errors.hpp"

namespace spancca {

using Index = Eigen::Index;

/// Unit-norm vector with few nonzero entries, stored as sorted (index, value)
/// pairs. Exact zeros are never stored.
struct SparseVector {
  Index dim = 0;
  std::vector<std::pair<Index, double>> entries;

  Index nnz() const { return static_cast<Index>(entries.size()); }

  double norm() const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += v * v;
    return std::sqrt(s);
  }

  Eigen::VectorXd to_dense() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    for (const auto& [i, v] : entries) out[i] = v;
    return out;
  }

  double dot(const Eigen::VectorXd& dense) const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += dense[i] * v;
    return s;
  }
};

/// Declarative description of a feasible set, resolvable to a projection
/// operator via resolve().
struct ConstraintSpec {
  enum class Kind { sparse, unit, group_sparse };

  Kind kind = Kind::unit;
  Index s = 0;                                // sparse only
  std::vector<std::vector<Index>> groups;     // group_sparse only
  Index g = 0;                                // group_sparse only

  static ConstraintSpec sparse(Index s) {
    ConstraintSpec c;
    c.kind = Kind::sparse;
    c.s = s;
    return c;
  }

  static ConstraintSpec unit() { return ConstraintSpec{}; }

  static ConstraintSpec group_sparse(std::vector<std::vector<Index>> groups, Index g) {
    ConstraintSpec c;
    c.kind = Kind::group_sparse;
    c.groups = std::move(groups);
    c.g = g;
    return c;
  }
};

/// Reusable scratch for the hot-path projection interface. One instance per
/// thread; operators themselves stay stateless.
struct ProjectionWorkspace {
  std::vector<double> mag;
  std::vector<double> group_norm;
  std::vector<unsigned char> selected;
  std::vector<Index> order;
};

/// Maximizer of a'u over one feasible set. apply() is the allocation-free
/// form used by the solver's inner loop; project() is the convenience form.
class ProjectionOp {
 public:
  virtual ~ProjectionOp() = default;

  Index dim() const { return dim_; }

  /// Upper bound on the number of nonzeros any output can have.
  virtual Index budget() const = 0;

  /// Writes the maximizer into (out_idx, out_val): at most budget() entries,
  /// indices strictly increasing, unit 2-norm, exact zeros dropped.
  /// Returns the entry count; 0 signals a zero input (no feasible ascent).
  virtual Index apply(const double* a, Index* out_idx, double* out_val,
                      ProjectionWorkspace& ws) const = 0;

  /// Throwing wrapper around apply(); raises ZeroInput on a zero argument.
  SparseVector project(const Eigen::VectorXd& a) const {
    if (a.size() != dim_) {
      throw ShapeError("projection input has length " + std::to_string(a.size()) +
                       ", expected " + std::to_string(dim_));
    }
    ProjectionWorkspace ws;
    std::vector<Index> idx(static_cast<std::size_t>(budget()));
    std::vector<double> val(static_cast<std::size_t>(budget()));
    const Index n = apply(a.data(), idx.data(), val.data(), ws);
    if (n == 0) throw ZeroInput();
    SparseVector out;
    out.dim = dim_;
    out.entries.reserve(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) out.entries.emplace_back(idx[k], val[k]);
    return out;
  }

 protected:
  explicit ProjectionOp(Index dim) : dim_(dim) {}

  Index dim_;
};

namespace detail {

// Selection of the s largest-magnitude coordinates. Ties on the threshold
// value are broken toward the lower index; exact zeros never enter the
// support. Returns nnz after normalization, 0 iff all candidates are zero.
inline Index select_top_s(const double* a, Index d, Index s, Index* out_idx,
                          double* out_val, ProjectionWorkspace& ws) {
  Index count = 0;
  if (s >= d) {
    for (Index i = 0; i < d; ++i) {
      if (a[i] != 0.0) out_idx[count++] = i;
    }
  } else if (s == 1) {
    Index i1 = -1;
    double m1 = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double m = std::abs(a[i]);
      const bool gt = m > m1;
      i1 = gt ? i : i1;
      m1 = gt ? m : m1;
    }
    if (i1 >= 0) out_idx[count++] = i1;
  } else if (s == 2) {
    Index i1 = -1, i2 = -1;
    double m1 = 0.0, m2 = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double m = std::abs(a[i]);
      const bool gt1 = m > m1;
      const bool gt2 = m > m2;
      i2 = gt1 ? i1 : (gt2 ? i : i2);
      m2 = gt1 ? m1 : (gt2 ? m : m2);
      i1 = gt1 ? i : i1;
      m1 = gt1 ? m : m1;
    }
    if (i2 >= 0) {
      out_idx[0] = std::min(i1, i2);
      out_idx[1] = std::max(i1, i2);
      count = 2;
    } else if (i1 >= 0) {
      out_idx[count++] = i1;
    }
  } else if (s <= 8) {
    // small budgets: insertion selection, no scratch, same tie rule as the
    // quickselect path (first-seen wins among equal magnitudes)
    Index top_idx[8];
    double top_mag[8];
    Index filled = 0;
    for (Index i = 0; i < d; ++i) {
      const double m = std::abs(a[i]);
      if (m == 0.0) continue;
      if (filled == s && m <= top_mag[filled - 1]) continue;
      Index p = filled < s ? filled : s - 1;
      while (p > 0 && m > top_mag[p - 1]) {
        top_mag[p] = top_mag[p - 1];
        top_idx[p] = top_idx[p - 1];
        --p;
      }
      top_mag[p] = m;
      top_idx[p] = i;
      if (filled < s) ++filled;
    }
    for (Index k = 0; k < filled; ++k) {
      Index p = k;
      const Index idx = top_idx[k];
      while (p > 0 && out_idx[p - 1] > idx) {
        out_idx[p] = out_idx[p - 1];
        --p;
      }
      out_idx[p] = idx;
      ++count;
    }
  } else {
    ws.mag.resize(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) ws.mag[static_cast<std::size_t>(i)] = std::abs(a[i]);
    // Quickselect for the s-th order statistic, then a deterministic second
    // pass in index order: all strictly-above-threshold entries, with the
    // remaining slots granted to the lowest-index threshold ties.
    std::nth_element(ws.mag.begin(), ws.mag.begin() + (s - 1), ws.mag.end(),
                     std::greater<double>());
    const double threshold = ws.mag[static_cast<std::size_t>(s - 1)];
    Index above = 0;
    for (Index i = 0; i < d; ++i) {
      if (std::abs(a[i]) > threshold) ++above;
    }
    Index tie_budget = threshold > 0.0 ? s - above : 0;
    for (Index i = 0; i < d && count < s; ++i) {
      const double m = std::abs(a[i]);
      if (m > threshold) {
        out_idx[count++] = i;
      } else if (m == threshold && tie_budget > 0) {
        out_idx[count++] = i;
        --tie_budget;
      }
    }
  }
  double sq = 0.0;
  for (Index k = 0; k < count; ++k) {
    const double v = a[out_idx[k]];
    sq += v * v;
  }
  if (sq == 0.0) return 0;
  const double inv = 1.0 / std::sqrt(sq);
  for (Index k = 0; k < count; ++k) out_val[k] = a[out_idx[k]] * inv;
  return count;
}

}  // namespace detail

/// Keep the s largest-magnitude entries, zero the rest, rescale to unit
/// 2-norm. Exact maximizer of a'u over {u : ||u||_2 = 1, ||u||_0 <= s}.
class SparseUnitProjection final : public ProjectionOp {
 public:
  SparseUnitProjection(Index dim, Index s) : ProjectionOp(dim), s_(s) {
    if (dim < 1) throw UsageError("projection dimension must be positive");
    if (s < 1 || s > dim) {
      throw UsageError("sparsity budget " + std::to_string(s) +
                       " outside [1, " + std::to_string(dim) + "]");
    }
  }

  Index budget() const override { return s_; }

  Index apply(const double* a, Index* out_idx, double* out_val,
              ProjectionWorkspace& ws) const override {
    return detail::select_top_s(a, dim_, s_, out_idx, out_val, ws);
  }

 private:
  Index s_;
};

/// Plain normalization onto the unit sphere.
class UnitProjection final : public ProjectionOp {
 public:
  explicit UnitProjection(Index dim) : ProjectionOp(dim) {
    if (dim < 1) throw UsageError("projection dimension must be positive");
  }

  Index budget() const override { return dim_; }

  Index apply(const double* a, Index* out_idx, double* out_val,
              ProjectionWorkspace& ws) const override {
    return detail::select_top_s(a, dim_, dim_, out_idx, out_val, ws);
  }
};

/// Keep the g groups of largest restricted 2-norm, zero the rest, rescale.
/// Exact maximizer over unit vectors supported on at most g of the disjoint
/// groups. Ties between groups go to the group containing the lowest index.
class GroupSparseProjection final : public ProjectionOp {
 public:
  GroupSparseProjection(Index dim, std::vector<std::vector<Index>> groups, Index g)
      : ProjectionOp(dim), groups_(std::move(groups)), g_(g) {
    if (dim < 1) throw UsageError("projection dimension must be positive");
    const Index ngroups = static_cast<Index>(groups_.size());
    if (g < 1 || g > ngroups) {
      throw UsageError("group budget " + std::to_string(g) + " outside [1, " +
                       std::to_string(ngroups) + "]");
    }
    std::vector<unsigned char> seen(static_cast<std::size_t>(dim), 0);
    Index covered = 0;
    min_index_.reserve(groups_.size());
    for (const auto& grp : groups_) {
      if (grp.empty()) throw UsageError("empty group in group-sparse constraint");
      Index lo = grp.front();
      for (Index i : grp) {
        if (i < 0 || i >= dim) {
          throw UsageError("group index " + std::to_string(i) +
                           " outside [0, " + std::to_string(dim - 1) + "]");
        }
        if (seen[static_cast<std::size_t>(i)]) {
          throw UsageError("groups overlap at index " + std::to_string(i));
        }
        seen[static_cast<std::size_t>(i)] = 1;
        lo = std::min(lo, i);
        ++covered;
      }
      min_index_.push_back(lo);
    }
    if (covered != dim) {
      throw UsageError("groups do not cover all " + std::to_string(dim) + " indices");
    }
  }

  Index budget() const override { return dim_; }

  Index apply(const double* a, Index* out_idx, double* out_val,
              ProjectionWorkspace& ws) const override {
    const std::size_t ngroups = groups_.size();
    ws.group_norm.resize(ngroups);
    for (std::size_t k = 0; k < ngroups; ++k) {
      double sq = 0.0;
      for (Index i : groups_[k]) sq += a[i] * a[i];
      ws.group_norm[k] = sq;
    }
    ws.order.resize(ngroups);
    std::iota(ws.order.begin(), ws.order.end(), Index{0});
    std::sort(ws.order.begin(), ws.order.end(), [&](Index lhs, Index rhs) {
      const double nl = ws.group_norm[static_cast<std::size_t>(lhs)];
      const double nr = ws.group_norm[static_cast<std::size_t>(rhs)];
      if (nl != nr) return nl > nr;
      return min_index_[static_cast<std::size_t>(lhs)] <
             min_index_[static_cast<std::size_t>(rhs)];
    });
    ws.selected.assign(static_cast<std::size_t>(dim_), 0);
    double sq = 0.0;
    for (Index k = 0; k < g_; ++k) {
      const std::size_t gid = static_cast<std::size_t>(ws.order[static_cast<std::size_t>(k)]);
      for (Index i : groups_[gid]) ws.selected[static_cast<std::size_t>(i)] = 1;
      sq += ws.group_norm[gid];
    }
    if (sq == 0.0) return 0;
    const double inv = 1.0 / std::sqrt(sq);
    Index count = 0;
    for (Index i = 0; i < dim_; ++i) {
      if (ws.selected[static_cast<std::size_t>(i)] && a[i] != 0.0) {
        out_idx[count] = i;
        out_val[count] = a[i] * inv;
        ++count;
      }
    }
    return count;
  }

 private:
  std::vector<std::vector<Index>> groups_;
  Index g_;
  std::vector<Index> min_index_;
};

/// Turns a declarative constraint into its projection operator, validating
/// it against the ambient dimension. Structured variants beyond the three
/// shipped here plug in by subclassing ProjectionOp.
inline std::unique_ptr<ProjectionOp> resolve(const ConstraintSpec& spec, Index dim) {
  switch (spec.kind) {
    case ConstraintSpec::Kind::sparse:
      return std::make_unique<SparseUnitProjection>(dim, spec.s);
    case ConstraintSpec::Kind::unit:
      return std::make_unique<UnitProjection>(dim);
    case ConstraintSpec::Kind::group_sparse:
      return std::make_unique<GroupSparseProjection>(dim, spec.groups, spec.g);
  }
  throw UsageError("unknown constraint kind");
}

inline SparseVector project_sparse_unit(const Eigen::VectorXd& a, Index s) {
  return SparseUnitProjection(a.size(), s).project(a);
}

inline SparseVector project_unit(const Eigen::VectorXd& a) {
  return UnitProjection(a.size()).project(a);
}

inline SparseVector project_group_sparse_unit(const Eigen::VectorXd& a,
                                              std::vector<std::vector<Index>> groups,
                                              Index g) {
  return GroupSparseProjection(a.size(), std::move(groups), g).project(a);
}

/// Group structure file: one group per line, comma-separated 0-based indices.
inline std::vector<std::vector<Index>> load_groups(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open group file: " + path.string());
  std::vector<std::vector<Index>> groups;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<Index> group;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      long long value = 0;
      try {
        value = std::stoll(cell, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || cell.find_first_not_of(" \t", pos) != std::string::npos || value < 0) {
        throw UsageError("bad group index '" + cell + "' in " + path.string() +
                         " line " + std::to_string(lineno));
      }
      group.push_back(static_cast<Index>(value));
    }
    if (group.empty()) {
      throw UsageError("empty group in " + path.string() + " line " +
                       std::to_string(lineno));
    }
    groups.push_back(std::move(group));
  }
  if (groups.empty()) throw UsageError("no groups in " + path.string());
  return groups;
}

}  // namespace spancca
