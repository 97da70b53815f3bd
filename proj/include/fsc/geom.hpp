#pragma once

#include <Eigen/Eigenvalues>
#include <limits>

#include "fsc/kdtree.hpp"

namespace fsc {

template <typename Scalar>
struct NormalsResult {
  PointCloud<Scalar> cloud;
  std::vector<Eigen::Index> degenerate;  // neighborhoods with rank < 2
};

namespace detail {

// Deterministic sign for a normal whose orientation vote is a wash.
template <typename Scalar>
void canonical_sign(Eigen::RowVector3<Scalar>& n) {
  if (n[2] != Scalar(0)) {
    if (n[2] < Scalar(0)) n = -n;
  } else if (n[1] != Scalar(0)) {
    if (n[1] < Scalar(0)) n = -n;
  } else if (n[0] < Scalar(0)) {
    n = -n;
  }
}

}  // namespace detail

/// PCA normals over k-nearest neighborhoods (self included). Normals are
/// flipped to point away from the cloud centroid; degenerate neighborhoods
/// get (0,0,1) and are reported.
template <typename Scalar>
NormalsResult<Scalar> estimate_normals(const PointCloud<Scalar>& in, int k) {
  require(!in.empty(), Errc::EmptyInput, "estimate_normals: empty cloud");
  require(k >= 3, Errc::InvalidArgument, "estimate_normals: k must be at least 3");
  require(static_cast<Eigen::Index>(k) <= in.size(), Errc::InsufficientPoints,
          "estimate_normals: cloud smaller than k");

  const KdTree<Scalar> tree(in.points);
  const Eigen::RowVector3<Scalar> centroid = in.points.colwise().mean();

  NormalsResult<Scalar> res;
  res.cloud.points = in.points;
  res.cloud.id = in.id;
  res.cloud.normals.resize(in.size(), 3);
  std::vector<uint8_t> degen(static_cast<size_t>(in.size()), 0);

  parallel_for(in.size(), [&](std::int64_t i) {
    const auto hits = tree.knn(in.points.row(i), k);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> nbr(k, 3);
    for (int j = 0; j < k; ++j) nbr.row(j) = in.points.row(hits[static_cast<size_t>(j)].index);
    const Eigen::RowVector3<Scalar> mean = nbr.colwise().mean();
    nbr.rowwise() -= mean;
    const Eigen::Matrix<Scalar, 3, 3> cov = nbr.transpose() * nbr / Scalar(k);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> eig(cov);
    const auto& evals = eig.eigenvalues();  // ascending
    Eigen::RowVector3<Scalar> n;
    if (evals[1] <= Scalar(1e-12) * std::max(evals[2], Scalar(1e-30))) {
      n = Eigen::RowVector3<Scalar>(0, 0, 1);  // points are collinear or coincident
      degen[static_cast<size_t>(i)] = 1;
    } else {
      n = eig.eigenvectors().col(0).transpose();
      n.normalize();
      const Scalar vote = n.dot(in.points.row(i) - centroid);
      if (vote < Scalar(0))
        n = -n;
      else if (vote == Scalar(0))
        detail::canonical_sign(n);
    }
    res.cloud.normals.row(i) = n;
  });

  for (Eigen::Index i = 0; i < in.size(); ++i)
    if (degen[static_cast<size_t>(i)]) res.degenerate.push_back(i);
  return res;
}

/// Uniform subsample without replacement; output preserves input order.
/// m == size() returns the cloud unchanged.
template <typename Scalar>
PointCloud<Scalar> subsample_random(const PointCloud<Scalar>& in, Eigen::Index m, uint64_t seed) {
  require(!in.empty(), Errc::EmptyInput, "subsample_random: empty cloud");
  require(m >= 1 && m <= in.size(), Errc::InsufficientPoints,
          "subsample_random: requested " + std::to_string(m) + " of " +
              std::to_string(in.size()) + " points");
  if (m == in.size()) return in;

  // partial Fisher-Yates over the index list, then restore input order
  std::vector<Eigen::Index> idx(static_cast<size_t>(in.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  Rng rng(seed);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = i + static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(in.size() - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(m));
  std::sort(idx.begin(), idx.end());

  PointCloud<Scalar> out;
  out.id = in.id;
  out.points.resize(m, 3);
  const bool with_normals = in.has_normals();
  if (with_normals) out.normals.resize(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.points.row(i) = in.points.row(idx[static_cast<size_t>(i)]);
    if (with_normals) out.normals.row(i) = in.normals.row(idx[static_cast<size_t>(i)]);
  }
  return out;
}

/// Farthest-point sampling. Greedy max-min from start_index; distance ties
/// resolve to the lower index.
template <typename Scalar>
PointCloud<Scalar> farthest_point_sample(const PointCloud<Scalar>& in, Eigen::Index m,
                                         Eigen::Index start_index = 0) {
  require(!in.empty(), Errc::EmptyInput, "farthest_point_sample: empty cloud");
  require(m >= 1 && m <= in.size(), Errc::InsufficientPoints,
          "farthest_point_sample: requested " + std::to_string(m) + " of " +
              std::to_string(in.size()) + " points");
  require(start_index >= 0 && start_index < in.size(), Errc::InvalidArgument,
          "farthest_point_sample: start index out of range");

  std::vector<Eigen::Index> picked;
  picked.reserve(static_cast<size_t>(m));
  std::vector<uint8_t> taken(static_cast<size_t>(in.size()), 0);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> best(in.size());
  best.setConstant(std::numeric_limits<Scalar>::max());
  Eigen::Index cur = start_index;
  for (Eigen::Index round = 0; round < m; ++round) {
    picked.push_back(cur);
    taken[static_cast<size_t>(cur)] = 1;
    best = best.cwiseMin((in.points.rowwise() - in.points.row(cur)).rowwise().squaredNorm());
    Eigen::Index next = -1;
    Scalar far2 = Scalar(-1);
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      if (!taken[static_cast<size_t>(i)] && best[i] > far2) {
        far2 = best[i];
        next = i;
      }
    }
    if (next < 0) break;  // only reachable on the final round
    cur = next;
  }

  PointCloud<Scalar> out;
  out.id = in.id;
  out.points.resize(m, 3);
  const bool with_normals = in.has_normals();
  if (with_normals) out.normals.resize(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.points.row(i) = in.points.row(picked[static_cast<size_t>(i)]);
    if (with_normals) out.normals.row(i) = in.normals.row(picked[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace fsc
