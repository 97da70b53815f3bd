#include <doctest.h>

#include <cmath>
#include <map>
#include <tuple>

#include "fsc/descriptor.hpp"

using fsc::cloud_histogram;
using fsc::compute_fpfh;
using fsc::entropy;
using fsc::EntropyConfig;
using fsc::Error;
using fsc::PointCloud;
using fsc::retention_curve;
using fsc::Rng;
using fsc::shape_entropy;
using fsc::voxel_downsample;

namespace {

using Mat = Eigen::MatrixXd;
using Row3 = Eigen::RowVector3d;

PointCloud<double> sphere_cloud(Eigen::Index n, uint64_t seed) {
  Rng rng(seed);
  PointCloud<double> c;
  c.points.resize(n, 3);
  c.normals.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Row3 d(rng.normal(), rng.normal(), rng.normal());
    while (d.norm() < 1e-6) d = Row3(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    c.points.row(i) = d;
    c.normals.row(i) = d;
  }
  return c;
}

PointCloud<double> box_cloud(Eigen::Index n, uint64_t seed) {
  Rng rng(seed);
  PointCloud<double> c;
  c.points.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int axis = static_cast<int>(rng.below(3));
    const double side = rng.real01() < 0.5 ? -1.0 : 1.0;
    Row3 p(2.0 * rng.real01() - 1.0, 2.0 * rng.real01() - 1.0, 2.0 * rng.real01() - 1.0);
    p[axis] = side;
    c.points.row(i) = p;
  }
  return c;
}

// Textbook O(n^2) FPFH: Darboux pair angles binned per point, then the
// distance-weighted neighborhood average folded back in.
bool ref_pair(const Row3& ps, const Row3& ns, const Row3& pt, const Row3& nt, double& a, double& f,
              double& t) {
  Row3 d = pt - ps;
  const double dist = d.norm();
  if (dist == 0.0) return false;
  d /= dist;
  Row3 u = ns, n2 = nt;
  if (std::abs(ns.dot(d)) < std::abs(nt.dot(d))) {
    u = nt;
    n2 = ns;
    d = -d;
  }
  Row3 v = d.cross(u);
  if (v.norm() < 1e-12) return false;
  v.normalize();
  const Row3 w = u.cross(v);
  a = v.dot(n2);
  f = u.dot(d);
  t = std::atan2(w.dot(n2), u.dot(n2));
  return true;
}

int ref_bin(double f, double lo, double hi, int bins) {
  const int b = static_cast<int>(std::floor((f - lo) / (hi - lo) * bins));
  return std::min(std::max(b, 0), bins - 1);
}

Mat ref_fpfh(const PointCloud<double>& cloud, double radius, int B) {
  const Eigen::Index n = cloud.size();
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && (cloud.points.row(i) - cloud.points.row(j)).norm() <= radius)
        nbrs[static_cast<size_t>(i)].push_back(j);

  Mat spfh = Mat::Zero(n, 3 * B);
  for (Eigen::Index i = 0; i < n; ++i)
    for (const Eigen::Index j : nbrs[static_cast<size_t>(i)]) {
      double a, f, t;
      if (!ref_pair(cloud.points.row(i), cloud.normals.row(i), cloud.points.row(j),
                    cloud.normals.row(j), a, f, t))
        continue;
      spfh(i, ref_bin(a, -1.0, 1.0, B)) += 1.0;
      spfh(i, B + ref_bin(f, -1.0, 1.0, B)) += 1.0;
      spfh(i, 2 * B + ref_bin(t, -EIGEN_PI, EIGEN_PI, B)) += 1.0;
    }

  Mat fpfh = spfh;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(3 * B);
    Eigen::Index k = 0;
    for (const Eigen::Index j : nbrs[static_cast<size_t>(i)]) {
      const double w = (cloud.points.row(i) - cloud.points.row(j)).norm();
      if (w == 0.0) continue;
      acc += spfh.row(j) / w;
      ++k;
    }
    if (k > 0) fpfh.row(i) += acc / static_cast<double>(k);
  }
  return fpfh;
}

}  // namespace

TEST_CASE("voxel downsample keeps the centroid-nearest point per cell") {
  PointCloud<double> c;
  c.points.resize(4, 3);
  c.points << 0.0, 0.0, 0.0,  //
      0.4, 0.4, 0.4,          // same cell, nearer the center
      1.1, 0.2, 0.2,          //
      0.2, 1.9, 0.0;
  const auto out = voxel_downsample(c, 1.0);
  REQUIRE(out.size() == 3);
  // rows follow (ix, iy, iz) key order
  CHECK(out.points.row(0) == c.points.row(1));
  CHECK(out.points.row(1) == c.points.row(3));
  CHECK(out.points.row(2) == c.points.row(2));
}

TEST_CASE("voxel downsample ties go to the lowest index") {
  PointCloud<double> c;
  c.points.resize(3, 3);
  c.points << 0.0, 0.0, 0.0,  // pins the grid origin
      0.25, 0.5, 0.5,         //
      0.75, 0.5, 0.5;         // same distance to the cell center
  const auto out = voxel_downsample(c, 1.0);
  REQUIRE(out.size() == 1);
  CHECK(out.points.row(0) == c.points.row(1));
}

TEST_CASE("voxel downsample against a brute-force oracle") {
  auto c = sphere_cloud(400, 91);
  c.id = "probe";
  const double vox = 0.37;
  const auto out = voxel_downsample(c, vox);
  CHECK(out.id == "probe");
  REQUIRE(out.has_normals());

  const Row3 origin = c.points.colwise().minCoeff();
  using Key = std::tuple<int64_t, int64_t, int64_t>;
  const auto key_of = [&](const Row3& p) {
    const Row3 rel = (p - origin) / vox;
    return Key{static_cast<int64_t>(std::floor(rel[0])), static_cast<int64_t>(std::floor(rel[1])),
               static_cast<int64_t>(std::floor(rel[2]))};
  };
  std::map<Key, Eigen::Index> best;
  const auto center_d2 = [&](const Row3& p, const Key& k) {
    const Row3 center = origin + vox * (Row3(static_cast<double>(std::get<0>(k)),
                                             static_cast<double>(std::get<1>(k)),
                                             static_cast<double>(std::get<2>(k))) +
                                        Row3::Constant(0.5));
    return (p - center).squaredNorm();
  };
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const Key k = key_of(c.points.row(i));
    const auto it = best.find(k);
    if (it == best.end() || center_d2(c.points.row(i), k) < center_d2(c.points.row(it->second), k))
      best.insert_or_assign(k, i);
  }
  REQUIRE(out.size() == static_cast<Eigen::Index>(best.size()));
  Eigen::Index row = 0;
  for (const auto& [k, idx] : best) {
    CHECK(out.points.row(row) == c.points.row(idx));
    CHECK(out.normals.row(row) == c.normals.row(idx));
    ++row;
  }
}

TEST_CASE("voxel downsample rejects bad input") {
  PointCloud<double> empty;
  CHECK_THROWS_AS(voxel_downsample(empty, 0.1), Error);
  const auto c = sphere_cloud(5, 1);
  CHECK_THROWS_AS(voxel_downsample(c, 0.0), Error);
  CHECK_THROWS_AS(voxel_downsample(c, -1.0), Error);
}

TEST_CASE("fpfh matches the quadratic reference bin for bin") {
  const struct {
    Eigen::Index n;
    double radius;
    int bins;
    uint64_t seed;
  } configs[] = {{300, 0.45, 36, 7}, {300, 0.7, 11, 8}, {120, 0.3, 5, 9}};
  for (const auto& cf : configs) {
    CAPTURE(cf.seed);
    const auto c = sphere_cloud(cf.n, cf.seed);
    const Mat got = compute_fpfh(c, cf.radius, cf.bins);
    const Mat want = ref_fpfh(c, cf.radius, cf.bins);
    REQUIRE(got.rows() == want.rows());
    REQUIRE(got.cols() == want.cols());
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fpfh handles duplicated points") {
  auto c = sphere_cloud(60, 12);
  // exact duplicates: zero-distance pairs carry no angle and no weight
  c.points.row(10) = c.points.row(3);
  c.normals.row(10) = c.normals.row(3);
  c.points.row(41) = c.points.row(3);
  c.normals.row(41) = c.normals.row(3);
  const Mat got = compute_fpfh(c, 0.6, 9);
  const Mat want = ref_fpfh(c, 0.6, 9);
  CHECK(got.allFinite());
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fpfh input validation") {
  PointCloud<double> empty;
  CHECK_THROWS_AS(compute_fpfh(empty, 0.1), Error);
  auto c = sphere_cloud(10, 2);
  CHECK_THROWS_AS(compute_fpfh(c, 0.0), Error);
  CHECK_THROWS_AS(compute_fpfh(c, 0.3, 0), Error);
  c.normals.resize(0, 3);
  CHECK_THROWS_AS(compute_fpfh(c, 0.3), Error);
}

TEST_CASE("uniform histogram entropy equals ln of the bin count") {
  const int bins = 3 * 36;
  const Eigen::RowVectorXd h = Eigen::RowVectorXd::Constant(bins, 1.0 / bins);
  CHECK(std::abs(entropy<double>(h) - std::log(108.0)) < 1e-9);
}

TEST_CASE("entropy basics") {
  Eigen::RowVectorXd delta = Eigen::RowVectorXd::Zero(8);
  delta[3] = 1.0;
  CHECK(entropy<double>(delta) == 0.0);

  Eigen::RowVectorXd h(3);
  h << 0.5, 0.0, 0.5;  // zero bins contribute nothing
  CHECK(entropy<double>(h) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Eigen::RowVectorXd bad(2);
  bad << 1.1, -0.1;
  CHECK_THROWS_AS(entropy<double>(bad), Error);
}

TEST_CASE("cloud histogram is the normalized column sum") {
  Mat fpfh(2, 4);
  fpfh << 1, 0, 3, 0,  //
      1, 2, 1, 0;
  const auto h = cloud_histogram<double>(fpfh);
  CHECK(h.sum() == doctest::Approx(1.0));
  CHECK(h[0] == doctest::Approx(0.25));
  CHECK(h[2] == doctest::Approx(0.5));
  CHECK(h[3] == 0.0);

  const auto zero = cloud_histogram<double>(Mat::Zero(3, 4));
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(cloud_histogram<double>(Mat(0, 4)), Error);
}

TEST_CASE("shape entropy ignores point order") {
  const auto c = box_cloud(2000, 31);
  PointCloud<double> shuffled;
  shuffled.points.resize(c.size(), 3);
  Rng rng(77);
  std::vector<Eigen::Index> perm(static_cast<size_t>(c.size()));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  for (Eigen::Index i = 0; i < c.size(); ++i) shuffled.points.row(perm[static_cast<size_t>(i)]) = c.points.row(i);

  const double a = shape_entropy(c);
  const double b = shape_entropy(shuffled);
  CHECK(a > 0.0);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("shape entropy needs enough surviving points") {
  PointCloud<double> tiny;
  tiny.points.resize(2, 3);
  tiny.points << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(shape_entropy(tiny), Error);
  PointCloud<double> empty;
  CHECK_THROWS_AS(shape_entropy(empty), Error);
}

TEST_CASE("retention curve: full size keeps fraction one, rows stay finite") {
  const auto c = box_cloud(4096, 5);
  const std::vector<Eigen::Index> sizes = {4096, 1024, 256, 64};
  const auto curve = retention_curve(c, sizes, 99);
  REQUIRE(curve.rows.size() == sizes.size());
  CHECK(curve.full_entropy > 0.0);
  CHECK(curve.rows[0].fraction == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < curve.rows.size(); ++i) {
    CAPTURE(i);
    CHECK(curve.rows[i].size == sizes[i]);
    CHECK(std::isfinite(curve.rows[i].entropy));
    CHECK(curve.rows[i].entropy >= 0.0);
    CHECK(curve.rows[i].fraction <= 1.5);
  }
  // heavy subsampling loses structure
  CHECK(curve.rows[3].fraction < curve.rows[0].fraction);

  const auto again = retention_curve(c, sizes, 99);
  for (size_t i = 0; i < curve.rows.size(); ++i) CHECK(curve.rows[i].entropy == again.rows[i].entropy);
}

TEST_CASE("retention curve rejects out-of-range sizes") {
  const auto c = box_cloud(256, 6);
  CHECK_THROWS_AS(retention_curve(c, {0}, 1), Error);
  CHECK_THROWS_AS(retention_curve(c, {257}, 1), Error);
  PointCloud<double> empty;
  CHECK_THROWS_AS(retention_curve(empty, {10}, 1), Error);
}
