#pragma once

#include <map>
#include <tuple>

#include "fsc/geom.hpp"

namespace fsc {

/// Grid filter: each occupied voxel keeps the member point closest to the
/// voxel centroid (ties to the lowest index). Output follows voxel key
/// order (ix, iy, iz lexicographic).
template <typename Scalar>
PointCloud<Scalar> voxel_downsample(const PointCloud<Scalar>& in, Scalar voxel_size) {
  require(!in.empty(), Errc::EmptyInput, "voxel_downsample: empty cloud");
  require(voxel_size > Scalar(0), Errc::InvalidArgument, "voxel_downsample: voxel size must be positive");

  const Eigen::RowVector3<Scalar> origin = in.points.colwise().minCoeff();
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  struct Best {
    Eigen::Index index;
    Scalar d2;
  };
  std::map<Key, Best> cells;
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    const Eigen::RowVector3<Scalar> rel = (in.points.row(i) - origin) / voxel_size;
    const Key key{static_cast<std::int64_t>(std::floor(rel[0])),
                  static_cast<std::int64_t>(std::floor(rel[1])),
                  static_cast<std::int64_t>(std::floor(rel[2]))};
    const Eigen::RowVector3<Scalar> center =
        origin + (Eigen::RowVector3<Scalar>(Scalar(std::get<0>(key)), Scalar(std::get<1>(key)),
                                            Scalar(std::get<2>(key))) +
                  Eigen::RowVector3<Scalar>::Constant(Scalar(0.5))) *
                     voxel_size;
    const Scalar d2 = (in.points.row(i) - center).squaredNorm();
    auto [it, fresh] = cells.try_emplace(key, Best{i, d2});
    if (!fresh && d2 < it->second.d2) it->second = Best{i, d2};
  }

  PointCloud<Scalar> out;
  out.id = in.id;
  out.points.resize(static_cast<Eigen::Index>(cells.size()), 3);
  const bool with_normals = in.has_normals();
  if (with_normals) out.normals.resize(static_cast<Eigen::Index>(cells.size()), 3);
  Eigen::Index row = 0;
  for (const auto& [key, best] : cells) {
    out.points.row(row) = in.points.row(best.index);
    if (with_normals) out.normals.row(row) = in.normals.row(best.index);
    ++row;
  }
  return out;
}

namespace detail {

/// Darboux-frame pair features. Returns false when the pair is degenerate
/// (coincident points or direction parallel to the source normal).
template <typename Scalar>
bool pair_features(const Eigen::RowVector3<Scalar>& ps, const Eigen::RowVector3<Scalar>& ns_in,
                   const Eigen::RowVector3<Scalar>& pt, const Eigen::RowVector3<Scalar>& nt_in,
                   Scalar& alpha, Scalar& phi, Scalar& theta) {
  Eigen::RowVector3<Scalar> d = pt - ps;
  const Scalar dist = d.norm();
  if (dist == Scalar(0)) return false;
  d /= dist;
  Eigen::RowVector3<Scalar> u = ns_in, nt = nt_in;
  // the point whose normal is closer to the connecting line becomes source
  if (std::abs(u.dot(d)) < std::abs(nt.dot(d))) {
    std::swap(u, nt);
    d = -d;
  }
  Eigen::RowVector3<Scalar> v = d.cross(u);
  const Scalar vn = v.norm();
  if (vn < Scalar(1e-12)) return false;
  v /= vn;
  const Eigen::RowVector3<Scalar> w = u.cross(v);
  alpha = v.dot(nt);
  phi = u.dot(d);
  theta = std::atan2(w.dot(nt), u.dot(nt));
  return true;
}

template <typename Scalar>
int feature_bin(Scalar f, Scalar lo, Scalar hi, int bins) {
  int b = static_cast<int>(std::floor((f - lo) / (hi - lo) * Scalar(bins)));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return b;
}

}  // namespace detail

/// Per-point fast point feature histograms, one row of 3*bins_per_feature
/// raw-weight entries per point. Requires unit normals on the cloud.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> compute_fpfh(const PointCloud<Scalar>& cloud,
                                                                   Scalar radius,
                                                                   int bins_per_feature = 36) {
  require(!cloud.empty(), Errc::EmptyInput, "compute_fpfh: empty cloud");
  require(cloud.has_normals(), Errc::InvalidArgument, "compute_fpfh: cloud lacks normals");
  require(radius > Scalar(0), Errc::InvalidArgument, "compute_fpfh: radius must be positive");
  require(bins_per_feature >= 1, Errc::InvalidArgument, "compute_fpfh: bins must be positive");

  const int B = bins_per_feature;
  const Eigen::Index n = cloud.size();
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Scalar pi = Scalar(EIGEN_PI);

  const KdTree<Scalar> tree(cloud.points);
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    nbrs[static_cast<size_t>(i)] = tree.radius(cloud.points.row(i), radius, i);
  });

  Mat spfh = Mat::Zero(n, 3 * B);
  parallel_for(n, [&](std::int64_t i) {
    for (const Eigen::Index j : nbrs[static_cast<size_t>(i)]) {
      Scalar a, f, t;
      if (!detail::pair_features<Scalar>(cloud.points.row(i), cloud.normals.row(i),
                                         cloud.points.row(j), cloud.normals.row(j), a, f, t))
        continue;
      spfh(i, detail::feature_bin(a, Scalar(-1), Scalar(1), B)) += Scalar(1);
      spfh(i, B + detail::feature_bin(f, Scalar(-1), Scalar(1), B)) += Scalar(1);
      spfh(i, 2 * B + detail::feature_bin(t, -pi, pi, B)) += Scalar(1);
    }
  });

  Mat fpfh = spfh;
  parallel_for(n, [&](std::int64_t i) {
    const auto& nb = nbrs[static_cast<size_t>(i)];
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> acc = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(3 * B);
    Eigen::Index k = 0;
    for (const Eigen::Index j : nb) {
      const Scalar w = (cloud.points.row(i) - cloud.points.row(j)).norm();
      if (w == Scalar(0)) continue;  // duplicate point, weight undefined
      acc += spfh.row(j) / w;
      ++k;
    }
    if (k > 0) fpfh.row(i) += acc / Scalar(k);
  });
  return fpfh;
}

/// L1-normalized sum of per-point histograms; the zero histogram stays zero.
template <typename Scalar>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> cloud_histogram(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& fpfh) {
  require(fpfh.rows() > 0, Errc::EmptyInput, "cloud_histogram: no rows");
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> h = fpfh.colwise().sum();
  const Scalar total = h.sum();
  if (total > Scalar(0)) h /= total;
  return h;
}

/// Shannon entropy in nats; 0 * ln 0 reads as 0.
template <typename Scalar>
Scalar entropy(const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& h) {
  Scalar s = 0;
  for (Eigen::Index b = 0; b < h.size(); ++b) {
    require(h[b] >= Scalar(0), Errc::InvalidArgument, "entropy: negative bin weight");
    if (h[b] > Scalar(0)) s -= h[b] * std::log(h[b]);
  }
  return s;
}

struct EntropyConfig {
  double voxel_size = 0.04;   // 2% of the unit-ball diameter
  double fpfh_radius = 0.25;  // neighborhood for normals-angle statistics
  int normals_k = 10;
  int bins_per_feature = 36;
};

/// Shape-complexity score of a cloud: voxel filter, PCA normals, FPFH,
/// entropy of the pooled histogram.
template <typename Scalar>
Scalar shape_entropy(const PointCloud<Scalar>& cloud, const EntropyConfig& cfg = {}) {
  require(!cloud.empty(), Errc::EmptyInput, "shape_entropy: empty cloud");
  PointCloud<Scalar> filtered = voxel_downsample(cloud, Scalar(cfg.voxel_size));
  const int k = static_cast<int>(std::min<Eigen::Index>(cfg.normals_k, filtered.size()));
  require(k >= 3, Errc::InsufficientPoints, "shape_entropy: too few points after voxel filter");
  filtered = estimate_normals(filtered, k).cloud;
  const auto fpfh = compute_fpfh(filtered, Scalar(cfg.fpfh_radius), cfg.bins_per_feature);
  return entropy<Scalar>(cloud_histogram<Scalar>(fpfh));
}

struct RetentionRow {
  Eigen::Index size;
  double entropy;
  double fraction;  // entropy / entropy at full size
};

struct RetentionCurve {
  double full_entropy = 0;
  std::vector<RetentionRow> rows;
};

/// Entropy retention under random subsampling. Sizes equal to the cloud
/// size evaluate the cloud itself, so their fraction is exactly 1.
template <typename Scalar>
RetentionCurve retention_curve(const PointCloud<Scalar>& cloud, const std::vector<Eigen::Index>& sizes,
                               uint64_t seed, const EntropyConfig& cfg = {}) {
  require(!cloud.empty(), Errc::EmptyInput, "retention_curve: empty cloud");
  RetentionCurve out;
  out.full_entropy = static_cast<double>(shape_entropy(cloud, cfg));
  require(out.full_entropy > 0, Errc::NumericError,
          "retention_curve: full cloud entropy is zero, fractions undefined");
  for (const Eigen::Index m : sizes) {
    require(m >= 1 && m <= cloud.size(), Errc::InsufficientPoints,
            "retention_curve: size " + std::to_string(m) + " out of range");
    const PointCloud<Scalar> sub =
        subsample_random(cloud, m, Rng::derive(seed, {static_cast<uint64_t>(m)}));
    const double s = static_cast<double>(shape_entropy(sub, cfg));
    out.rows.push_back(RetentionRow{m, s, s / out.full_entropy});
  }
  return out;
}

}  // namespace fsc
