#pragma once

#include <limits>

#include "fsc/kdtree.hpp"

namespace fsc {

namespace detail {

// Exact L1 nearest neighbor: seed with the L2 nearest point, then scan the
// L2 ball of that L1 distance (||.||_2 <= ||.||_1 makes the bound valid).
template <typename Scalar>
Scalar nearest_l1(const KdTree<Scalar>& tree, const Eigen::RowVector3<Scalar>& q) {
  const auto seed = tree.knn(q, 1);
  Scalar best = (tree.points().row(seed[0].index) - q).cwiseAbs().sum();
  for (const Eigen::Index j : tree.radius(q, best)) {
    const Scalar d1 = (tree.points().row(j) - q).cwiseAbs().sum();
    if (d1 < best) best = d1;
  }
  return best;
}

template <typename Scalar, typename PerPoint>
Scalar mean_over_points(const PointMatrix<Scalar>& pts, PerPoint&& per_point) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d(pts.rows());
  parallel_for(pts.rows(), [&](std::int64_t i) { d[i] = per_point(i); });
  Scalar sum = 0;  // fixed-order reduction
  for (Eigen::Index i = 0; i < d.size(); ++i) sum += d[i];
  return sum / Scalar(pts.rows());
}

}  // namespace detail

/// Chamfer distance with L1 point norms: mean_a min_b |a-b|_1 summed with
/// the reverse direction.
template <typename Scalar>
Scalar chamfer_l1(const PointCloud<Scalar>& a, const PointCloud<Scalar>& b) {
  require(!a.empty() && !b.empty(), Errc::EmptyInput, "chamfer_l1: empty cloud");
  const KdTree<Scalar> ta(a.points), tb(b.points);
  const Scalar ab = detail::mean_over_points<Scalar>(
      a.points, [&](std::int64_t i) { return detail::nearest_l1<Scalar>(tb, a.points.row(i)); });
  const Scalar ba = detail::mean_over_points<Scalar>(
      b.points, [&](std::int64_t i) { return detail::nearest_l1<Scalar>(ta, b.points.row(i)); });
  return ab + ba;
}

/// Chamfer distance with squared Euclidean point distances.
template <typename Scalar>
Scalar chamfer_l2(const PointCloud<Scalar>& a, const PointCloud<Scalar>& b) {
  require(!a.empty() && !b.empty(), Errc::EmptyInput, "chamfer_l2: empty cloud");
  const KdTree<Scalar> ta(a.points), tb(b.points);
  const Scalar ab = detail::mean_over_points<Scalar>(a.points, [&](std::int64_t i) {
    const Scalar d = tb.knn(a.points.row(i), 1)[0].distance;
    return d * d;
  });
  const Scalar ba = detail::mean_over_points<Scalar>(b.points, [&](std::int64_t i) {
    const Scalar d = ta.knn(b.points.row(i), 1)[0].distance;
    return d * d;
  });
  return ab + ba;
}

namespace detail {

/// Dense square assignment problem, shortest augmenting path with dual
/// potentials (Jonker-Volgenant style). Returns per-row assigned column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
  std::vector<int> path(n), row4col(n, -1), col4row(n, -1), remaining(n);
  std::vector<char> SR(n), SC(n);
  const double inf = std::numeric_limits<double>::infinity();

  for (int cur = 0; cur < n; ++cur) {
    std::fill(SR.begin(), SR.end(), 0);
    std::fill(SC.begin(), SC.end(), 0);
    std::fill(shortest.begin(), shortest.end(), inf);
    for (int t = 0; t < n; ++t) remaining[t] = n - t - 1;
    int num_remaining = n;
    double min_val = 0.0;
    int sink = -1, i = cur;
    while (sink == -1) {
      SR[i] = 1;
      int index = -1;
      double lowest = inf;
      for (int t = 0; t < num_remaining; ++t) {
        const int j = remaining[t];
        const double r = min_val + cost(i, j) - u[i] - v[j];
        if (r < shortest[j]) {
          shortest[j] = r;
          path[j] = i;
        }
        if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1)) {
          lowest = shortest[j];
          index = t;
        }
      }
      min_val = lowest;
      if (!(min_val < inf)) fail(Errc::NumericError, "assignment: infeasible cost matrix");
      const int j = remaining[index];
      if (row4col[j] == -1)
        sink = j;
      else
        i = row4col[j];
      SC[j] = 1;
      remaining[index] = remaining[--num_remaining];
    }
    u[cur] += min_val;
    for (int k = 0; k < n; ++k)
      if (SR[k] && k != cur) u[k] += min_val - shortest[col4row[k]];
    for (int j = 0; j < n; ++j)
      if (SC[j]) v[j] -= min_val - shortest[j];
    int j = sink;
    for (;;) {
      const int k = path[j];
      row4col[j] = k;
      std::swap(col4row[k], j);
      if (k == cur) break;
    }
  }
  return col4row;
}

}  // namespace detail

/// Optimal bijection between equal-size sets and its mean matched distance.
template <typename Scalar>
struct Assignment {
  std::vector<Eigen::Index> mapping;  // source row i pairs with target row mapping[i]
  Scalar cost;
};

/// Exact earth mover's distance between equal-size sets: the optimal
/// bijection's mean Euclidean distance.
template <typename Scalar>
Assignment<Scalar> emd(const PointCloud<Scalar>& a, const PointCloud<Scalar>& b) {
  require(!a.empty() && !b.empty(), Errc::EmptyInput, "emd: empty cloud");
  require(a.size() == b.size(), Errc::SizeMismatch,
          "emd: sizes differ (" + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()) + ")");
  const Eigen::Index n = a.size();
  Eigen::MatrixXd cost(n, n);
  const auto pa = a.points.template cast<double>().eval();
  const auto pb = b.points.template cast<double>().eval();
  parallel_for(n, [&](std::int64_t i) {
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (pa.row(i) - pb.row(j)).norm();
  });
  const std::vector<int> match = detail::solve_assignment(cost);
  Assignment<Scalar> out;
  out.mapping.resize(static_cast<size_t>(n));
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.mapping[static_cast<size_t>(i)] = match[static_cast<size_t>(i)];
    total += cost(i, match[static_cast<size_t>(i)]);
  }
  out.cost = Scalar(total / static_cast<double>(n));
  return out;
}

struct SinkhornConfig {
  double epsilon = 0.05;   // entropic regularization on unit-scale clouds
  int max_iterations = 200;
  double tolerance = 1e-6;  // max marginal violation
};

template <typename Scalar>
struct SinkhornResult {
  Scalar cost;  // sharp transport cost <P, C>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> plan;
  bool converged;
  int iterations;
};

/// Entropy-regularized EMD with uniform marginals, log-domain updates.
/// Non-convergence within the iteration budget is flagged, never thrown.
template <typename Scalar>
SinkhornResult<Scalar> emd_approx(const PointCloud<Scalar>& a, const PointCloud<Scalar>& b,
                                  const SinkhornConfig& cfg = {}) {
  require(!a.empty() && !b.empty(), Errc::EmptyInput, "emd_approx: empty cloud");
  require(a.size() == b.size(), Errc::SizeMismatch,
          "emd_approx: sizes differ (" + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()) + ")");
  require(cfg.epsilon > 0, Errc::ConfigError, "emd_approx: epsilon must be positive");
  require(cfg.max_iterations > 0, Errc::ConfigError, "emd_approx: max_iterations must be positive");
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = a.size(), m = b.size();
  const Scalar eps = static_cast<Scalar>(cfg.epsilon);
  const Scalar la = -std::log(static_cast<Scalar>(n));
  const Scalar lb = -std::log(static_cast<Scalar>(m));

  Arr C(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) C(i, j) = (a.points.row(i) - b.points.row(j)).norm();

  // log-sum-exp down each row, max-shifted
  auto row_lse = [](const Arr& T) -> Vec {
    const Vec mx = T.rowwise().maxCoeff();
    return mx + (T.colwise() - mx).exp().rowwise().sum().log();
  };

  Vec f = Vec::Zero(n), g = Vec::Zero(m), f_prev;
  bool converged = false;
  int used = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    used = it;
    f_prev = f;
    f = -eps * row_lse((((-C).rowwise() + g.transpose()) / eps) + lb);
    if (it > 1) {
      // the f refresh measures the previous iterate's row-marginal violation
      const Scalar err =
          (((f_prev - f) / eps).exp() - Scalar(1)).abs().maxCoeff() * std::exp(la);
      if (err < static_cast<Scalar>(cfg.tolerance)) {
        converged = true;
        break;
      }
    }
    g = -eps * row_lse(((((-C).colwise() + f) / eps) + la).transpose().eval());
  }

  SinkhornResult<Scalar> res;
  const Arr logP = (((((-C).colwise() + f).rowwise() + g.transpose()) / eps) + la) + lb;
  res.plan = logP.exp().matrix();
  res.cost = (logP.exp() * C).sum();
  res.converged = converged;
  res.iterations = used;
  return res;
}

/// Minimum matching distance of one output against a reference set: the
/// smallest squared-L2 chamfer distance and its argmin (ties -> lowest index).
template <typename Scalar>
std::pair<Scalar, Eigen::Index> mmd(const PointCloud<Scalar>& output,
                                    const std::vector<PointCloud<Scalar>>& references) {
  require(!output.empty(), Errc::EmptyInput, "mmd: empty output cloud");
  require(!references.empty(), Errc::EmptyReferenceSet, "mmd: empty reference set");
  Scalar best = std::numeric_limits<Scalar>::max();
  Eigen::Index best_index = 0;
  for (size_t r = 0; r < references.size(); ++r) {
    const Scalar d = chamfer_l2(output, references[r]);
    if (d < best) {
      best = d;
      best_index = static_cast<Eigen::Index>(r);
    }
  }
  return {best, best_index};
}

}  // namespace fsc
