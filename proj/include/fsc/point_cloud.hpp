#pragma once

#include <Eigen/Dense>

#include "fsc/common.hpp"

namespace fsc {

template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Point set with optional per-point unit normals (0 rows when absent).
template <typename Scalar>
struct PointCloud {
  PointMatrix<Scalar> points;
  PointMatrix<Scalar> normals;
  std::string id;

  Eigen::Index size() const { return points.rows(); }
  bool empty() const { return points.rows() == 0; }
  bool has_normals() const { return normals.rows() == points.rows() && points.rows() > 0; }
};

using PointCloudd = PointCloud<double>;
using PointCloudf = PointCloud<float>;

template <typename To, typename From>
PointCloud<To> cast_cloud(const PointCloud<From>& c) {
  PointCloud<To> out;
  out.points = c.points.template cast<To>();
  out.normals = c.normals.template cast<To>();
  out.id = c.id;
  return out;
}

template <typename Scalar>
void check_finite(const PointMatrix<Scalar>& m, const std::string& what) {
  if (!m.allFinite()) fail(Errc::NumericError, what + " contains non-finite values");
}

template <typename Scalar>
void check_cloud(const PointCloud<Scalar>& c, const std::string& what) {
  check_finite(c.points, what + " points");
  if (c.normals.rows() != 0) {
    require(c.normals.rows() == c.points.rows(), Errc::SizeMismatch,
            what + ": normal count differs from point count");
    check_finite(c.normals, what + " normals");
    const auto norms = c.normals.rowwise().norm().eval();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
      require(std::abs(norms[i] - Scalar(1)) < Scalar(1e-5), Errc::NumericError,
              what + ": normal " + std::to_string(i) + " is not unit length");
  }
}

template <typename Scalar>
struct NormalizeResult {
  PointCloud<Scalar> cloud;
  Eigen::RowVector3<Scalar> centroid;  // subtracted first
  Scalar scale;                        // multiplier applied after centering
};

/// Centers on the centroid and scales the farthest point onto the unit
/// sphere. Normals, if present, are carried over unchanged.
template <typename Scalar>
NormalizeResult<Scalar> normalize_unit(const PointCloud<Scalar>& in) {
  require(!in.empty(), Errc::EmptyInput, "normalize_unit: empty cloud");
  NormalizeResult<Scalar> r;
  r.centroid = in.points.colwise().mean();
  PointMatrix<Scalar> centered = in.points.rowwise() - r.centroid;
  const Scalar maxdist = centered.rowwise().norm().maxCoeff();
  require(maxdist > Scalar(1e-12), Errc::DegenerateExtent,
          "normalize_unit: cloud has no spatial extent");
  r.scale = Scalar(1) / maxdist;
  r.cloud.points = centered * r.scale;
  r.cloud.normals = in.normals;
  r.cloud.id = in.id;
  return r;
}

}  // namespace fsc
