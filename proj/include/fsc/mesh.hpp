#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fsc/geom.hpp"

namespace fsc {

struct TriangleMesh {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> triangles;

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index triangle_count() const { return triangles.rows(); }
};

inline void check_mesh(const TriangleMesh& m, const std::string& what) {
  require(m.vertices.rows() > 0, Errc::EmptyInput, what + ": mesh has no vertices");
  require(m.triangles.rows() > 0, Errc::EmptyInput, what + ": mesh has no triangles");
  if (!m.vertices.allFinite()) fail(Errc::NumericError, what + ": non-finite vertex");
  const int n = static_cast<int>(m.vertices.rows());
  for (Eigen::Index t = 0; t < m.triangles.rows(); ++t)
    for (int j = 0; j < 3; ++j)
      require(m.triangles(t, j) >= 0 && m.triangles(t, j) < n, Errc::IoError,
              what + ": triangle index out of range");
}

inline double bbox_diagonal(const TriangleMesh& m) {
  const Eigen::RowVector3d lo = m.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = m.vertices.colwise().maxCoeff();
  return (hi - lo).norm();
}

/// Removes triangles with (near) zero area or repeated vertices.
inline void drop_degenerate_triangles(TriangleMesh& m) {
  if (m.triangles.rows() == 0) return;
  const double diag = bbox_diagonal(m);
  const double min_cross = 1e-12 * diag * diag;
  std::vector<int> keep;
  for (Eigen::Index t = 0; t < m.triangles.rows(); ++t) {
    const auto& tri = m.triangles.row(t);
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
    const Eigen::RowVector3d a = m.vertices.row(tri[0]);
    const Eigen::RowVector3d ab = m.vertices.row(tri[1]) - a;
    const Eigen::RowVector3d ac = m.vertices.row(tri[2]) - a;
    if (ab.cross(ac).norm() > min_cross) keep.push_back(static_cast<int>(t));
  }
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> kept(static_cast<Eigen::Index>(keep.size()), 3);
  for (size_t i = 0; i < keep.size(); ++i) kept.row(static_cast<Eigen::Index>(i)) = m.triangles.row(keep[i]);
  m.triangles = std::move(kept);
}

inline Eigen::VectorXd triangle_areas(const TriangleMesh& m) {
  Eigen::VectorXd areas(m.triangles.rows());
  for (Eigen::Index t = 0; t < m.triangles.rows(); ++t) {
    const Eigen::RowVector3d a = m.vertices.row(m.triangles(t, 0));
    const Eigen::RowVector3d ab = m.vertices.row(m.triangles(t, 1)) - a;
    const Eigen::RowVector3d ac = m.vertices.row(m.triangles(t, 2)) - a;
    areas[t] = 0.5 * ab.cross(ac).norm();
  }
  return areas;
}

inline double surface_area(const TriangleMesh& m) { return triangle_areas(m).sum(); }

/// Centroid of vertices to origin, farthest vertex onto the unit sphere.
inline TriangleMesh normalize_mesh_unit(const TriangleMesh& in) {
  check_mesh(in, "normalize_mesh_unit");
  const Eigen::RowVector3d centroid = in.vertices.colwise().mean();
  TriangleMesh out;
  out.vertices = in.vertices.rowwise() - centroid;
  const double maxdist = out.vertices.rowwise().norm().maxCoeff();
  require(maxdist > 1e-12, Errc::DegenerateExtent, "normalize_mesh_unit: no extent");
  out.vertices /= maxdist;
  out.triangles = in.triangles;
  return out;
}

// ---------------------------------------------------------------------------
// OBJ

inline TriangleMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::IoError, "load_obj: cannot open " + path);
  std::vector<Eigen::RowVector3d> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  Eigen::Index lineno = 0;
  auto bad = [&](const std::string& msg) -> void {
    fail(Errc::IoError, "load_obj " + path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) bad("bad vertex");
      verts.emplace_back(x, y, z);
    } else if (tok == "f") {
      std::vector<int> face;
      std::string ref;
      while (ls >> ref) {
        const size_t slash = ref.find('/');
        const std::string head = slash == std::string::npos ? ref : ref.substr(0, slash);
        int vi = 0;
        const auto res = std::from_chars(head.data(), head.data() + head.size(), vi);
        if (res.ec != std::errc() || vi == 0) bad("bad face index '" + ref + "'");
        if (vi < 0) vi = static_cast<int>(verts.size()) + vi + 1;  // relative
        if (vi < 1 || vi > static_cast<int>(verts.size())) bad("face index out of range");
        face.push_back(vi - 1);
      }
      if (face.size() < 3) bad("face with fewer than 3 vertices");
      for (size_t j = 1; j + 1 < face.size(); ++j)
        tris.push_back({face[0], face[j], face[j + 1]});
    }
    // vn/vt/o/g/s/usemtl/mtllib/# are ignored
  }
  TriangleMesh m;
  m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
  m.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i)
    m.triangles.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  check_mesh(m, "load_obj " + path);
  drop_degenerate_triangles(m);
  require(m.triangles.rows() > 0, Errc::IoError, "load_obj " + path + ": only degenerate faces");
  return m;
}

inline void save_obj(const std::string& path, const TriangleMesh& m) {
  check_mesh(m, "save_obj " + path);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::IoError, "save_obj: cannot open " + path);
  char buf[32];
  auto emit = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
  };
  for (Eigen::Index i = 0; i < m.vertices.rows(); ++i) {
    os << "v ";
    emit(m.vertices(i, 0));
    os << ' ';
    emit(m.vertices(i, 1));
    os << ' ';
    emit(m.vertices(i, 2));
    os << '\n';
  }
  for (Eigen::Index t = 0; t < m.triangles.rows(); ++t)
    os << "f " << m.triangles(t, 0) + 1 << ' ' << m.triangles(t, 1) + 1 << ' '
       << m.triangles(t, 2) + 1 << '\n';
  if (!os) fail(Errc::IoError, "save_obj: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Procedural primitives. Dimensions are drawn from rng in a fixed order, so
// a seeded rng makes each shape reproducible.

namespace meshdetail {

inline void append_mesh(TriangleMesh& dst, const TriangleMesh& part) {
  const Eigen::Index v0 = dst.vertices.rows(), t0 = dst.triangles.rows();
  dst.vertices.conservativeResize(v0 + part.vertices.rows(), 3);
  dst.vertices.bottomRows(part.vertices.rows()) = part.vertices;
  dst.triangles.conservativeResize(t0 + part.triangles.rows(), 3);
  dst.triangles.bottomRows(part.triangles.rows()) =
      part.triangles.array() + static_cast<int>(v0);
}

inline TriangleMesh box(const Eigen::RowVector3d& lo, const Eigen::RowVector3d& hi) {
  TriangleMesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i)
    m.vertices.row(i) << (i & 1 ? hi[0] : lo[0]), (i & 2 ? hi[1] : lo[1]), (i & 4 ? hi[2] : lo[2]);
  static const int F[12][3] = {{0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5},
                               {0, 4, 5}, {0, 5, 1}, {2, 3, 7}, {2, 7, 6},
                               {0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3}};
  m.triangles.resize(12, 3);
  for (int t = 0; t < 12; ++t) m.triangles.row(t) << F[t][0], F[t][1], F[t][2];
  return m;
}

/// Open frustum side wall from ring r0 at z0 to ring r1 at z1.
inline TriangleMesh frustum_side(double r0, double r1, double z0, double z1, int seg) {
  TriangleMesh m;
  m.vertices.resize(2 * seg, 3);
  for (int i = 0; i < seg; ++i) {
    const double a = 2.0 * EIGEN_PI * i / seg;
    m.vertices.row(i) << r0 * std::cos(a), r0 * std::sin(a), z0;
    m.vertices.row(seg + i) << r1 * std::cos(a), r1 * std::sin(a), z1;
  }
  m.triangles.resize(2 * seg, 3);
  for (int i = 0; i < seg; ++i) {
    const int j = (i + 1) % seg;
    m.triangles.row(2 * i) << i, j, seg + i;
    m.triangles.row(2 * i + 1) << j, seg + j, seg + i;
  }
  return m;
}

inline TriangleMesh disk(double r, double z, int seg) {
  TriangleMesh m;
  m.vertices.resize(seg + 1, 3);
  m.vertices.row(0) << 0, 0, z;
  for (int i = 0; i < seg; ++i) {
    const double a = 2.0 * EIGEN_PI * i / seg;
    m.vertices.row(i + 1) << r * std::cos(a), r * std::sin(a), z;
  }
  m.triangles.resize(seg, 3);
  for (int i = 0; i < seg; ++i) m.triangles.row(i) << 0, i + 1, (i + 1) % seg + 1;
  return m;
}

inline TriangleMesh closed_cylinder(double r, double z0, double z1, int seg) {
  TriangleMesh m = frustum_side(r, r, z0, z1, seg);
  append_mesh(m, disk(r, z0, seg));
  append_mesh(m, disk(r, z1, seg));
  return m;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.real01(); }

}  // namespace meshdetail

inline TriangleMesh make_box(Rng& rng) {
  using namespace meshdetail;
  const double hx = uniform(rng, 0.25, 0.9);
  const double hy = uniform(rng, 0.25, 0.9);
  const double hz = uniform(rng, 0.25, 0.9);
  return box({-hx, -hy, -hz}, {hx, hy, hz});
}

inline TriangleMesh make_cylinder(Rng& rng) {
  using namespace meshdetail;
  const double r = uniform(rng, 0.2, 0.5);
  const double hh = uniform(rng, 0.5, 0.95);
  return closed_cylinder(r, -hh, hh, 32);
}

inline TriangleMesh make_sphere(Rng& rng) {
  using namespace meshdetail;
  const double ax = uniform(rng, 0.6, 1.0);
  const double ay = uniform(rng, 0.6, 1.0);
  const double az = uniform(rng, 0.6, 1.0);
  const int nlat = 16, nseg = 24;
  TriangleMesh m;
  m.vertices.resize((nlat - 1) * nseg + 2, 3);
  m.vertices.row(0) << 0, 0, az;  // north pole
  for (int i = 1; i < nlat; ++i) {
    const double th = EIGEN_PI * i / nlat;
    for (int j = 0; j < nseg; ++j) {
      const double ph = 2.0 * EIGEN_PI * j / nseg;
      m.vertices.row(1 + (i - 1) * nseg + j) << ax * std::sin(th) * std::cos(ph),
          ay * std::sin(th) * std::sin(ph), az * std::cos(th);
    }
  }
  const int south = (nlat - 1) * nseg + 1;
  m.vertices.row(south) << 0, 0, -az;
  std::vector<std::array<int, 3>> tris;
  auto ring = [&](int i, int j) { return 1 + i * nseg + j % nseg; };
  for (int j = 0; j < nseg; ++j) tris.push_back({0, ring(0, j), ring(0, j + 1)});
  for (int i = 0; i + 1 < nlat - 1; ++i)
    for (int j = 0; j < nseg; ++j) {
      tris.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      tris.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  for (int j = 0; j < nseg; ++j) tris.push_back({south, ring(nlat - 2, j + 1), ring(nlat - 2, j)});
  m.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t t = 0; t < tris.size(); ++t)
    m.triangles.row(static_cast<Eigen::Index>(t)) << tris[t][0], tris[t][1], tris[t][2];
  return m;
}

inline TriangleMesh make_torus(Rng& rng) {
  using namespace meshdetail;
  const double R = uniform(rng, 0.55, 0.8);
  const double r = uniform(rng, 0.12, 0.3);
  const int nu = 32, nv = 16;
  TriangleMesh m;
  m.vertices.resize(nu * nv, 3);
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * EIGEN_PI * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2.0 * EIGEN_PI * j / nv;
      m.vertices.row(i * nv + j) << (R + r * std::cos(v)) * std::cos(u),
          (R + r * std::cos(v)) * std::sin(u), r * std::sin(v);
    }
  }
  m.triangles.resize(2 * nu * nv, 3);
  int t = 0;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const int a = i * nv + j;
      const int b = ((i + 1) % nu) * nv + j;
      const int c = ((i + 1) % nu) * nv + (j + 1) % nv;
      const int d = i * nv + (j + 1) % nv;
      m.triangles.row(t++) << a, b, c;
      m.triangles.row(t++) << a, c, d;
    }
  return m;
}

inline TriangleMesh make_lbracket(Rng& rng) {
  using namespace meshdetail;
  const double L = uniform(rng, 0.9, 1.4);
  const double W = uniform(rng, 0.35, 0.7);
  const double T = uniform(rng, 0.15, 0.3);
  const double H = uniform(rng, 0.7, 1.2);
  TriangleMesh m = box({0, 0, 0}, {L, W, T});
  meshdetail::append_mesh(m, box({0, 0, T}, {T, W, H}));
  return m;
}

inline TriangleMesh make_lamp(Rng& rng) {
  using namespace meshdetail;
  const double rb = uniform(rng, 0.28, 0.45);
  const double hs = uniform(rng, 0.5, 0.9);
  const double r1 = uniform(rng, 0.25, 0.4);
  const double hsh = uniform(rng, 0.2, 0.35);
  const double hb = 0.08, rs = 0.035;
  TriangleMesh m = closed_cylinder(rb, 0.0, hb, 32);
  append_mesh(m, closed_cylinder(rs, hb, hb + hs, 12));
  append_mesh(m, frustum_side(r1, 0.55 * r1, hb + hs, hb + hs + hsh, 32));  // open shade
  return m;
}

/// Twisted thin strip along a smooth space curve. Quasi-1D: its surface area
/// is tiny, so a few hundred well-placed points already cover it densely, and
/// the twist keeps some width visible from every view direction.
inline TriangleMesh make_ribbon(Rng& rng) {
  using namespace meshdetail;
  const int seg = 160;
  const double a1 = uniform(rng, 0.12, 0.22), k1 = uniform(rng, 1.0, 1.6);
  const double a2 = uniform(rng, 0.06, 0.12), k2 = uniform(rng, 1.2, 1.8);
  const double p1 = uniform(rng, 0.0, 2.0 * EIGEN_PI), p2 = uniform(rng, 0.0, 2.0 * EIGEN_PI);
  const double half_w = uniform(rng, 0.008, 0.011);
  const double twist0 = uniform(rng, 0.0, EIGEN_PI);

  TriangleMesh m;
  m.vertices.resize(2 * (seg + 1), 3);
  Eigen::RowVector3d u(0, 1, 0);  // parallel-transported frame vector
  for (int i = 0; i <= seg; ++i) {
    const double t = -1.0 + 2.0 * i / seg;
    const Eigen::RowVector3d c(0.95 * t, a1 * std::sin(k1 * EIGEN_PI * t + p1),
                               a2 * std::sin(k2 * EIGEN_PI * t + p2));
    const Eigen::RowVector3d d(0.95, a1 * k1 * EIGEN_PI * std::cos(k1 * EIGEN_PI * t + p1),
                               a2 * k2 * EIGEN_PI * std::cos(k2 * EIGEN_PI * t + p2));
    const Eigen::RowVector3d tangent = d.normalized();
    u = (u - u.dot(tangent) * tangent).normalized();
    const Eigen::RowVector3d v = tangent.cross(u);
    const double th = twist0 + EIGEN_PI * (t + 1.0) / 2.0;  // half-turn over the length
    const Eigen::RowVector3d side = std::cos(th) * u + std::sin(th) * v;
    m.vertices.row(2 * i) = c - half_w * side;
    m.vertices.row(2 * i + 1) = c + half_w * side;
  }
  m.triangles.resize(2 * seg, 3);
  for (int i = 0; i < seg; ++i) {
    m.triangles.row(2 * i) << 2 * i, 2 * i + 2, 2 * i + 1;
    m.triangles.row(2 * i + 1) << 2 * i + 1, 2 * i + 2, 2 * i + 3;
  }
  return m;
}

inline const std::vector<std::string>& primitive_categories() {
  static const std::vector<std::string> cats = {"box",   "cylinder", "sphere",
                                                "torus", "lbracket", "lamp"};
  return cats;
}

inline TriangleMesh make_primitive(const std::string& category, Rng& rng) {
  if (category == "box") return make_box(rng);
  if (category == "cylinder") return make_cylinder(rng);
  if (category == "sphere") return make_sphere(rng);
  if (category == "torus") return make_torus(rng);
  if (category == "lbracket") return make_lbracket(rng);
  if (category == "lamp") return make_lamp(rng);
  if (category == "ribbon") return make_ribbon(rng);
  fail(Errc::InvalidArgument, "make_primitive: unknown category " + category);
}

// ---------------------------------------------------------------------------
// Sampling and rendering

/// Area-weighted uniform surface sampling (sqrt barycentric trick).
inline PointCloudd sample_surface(const TriangleMesh& mesh, Eigen::Index n, uint64_t seed) {
  check_mesh(mesh, "sample_surface");
  require(n >= 1, Errc::InvalidArgument, "sample_surface: n must be positive");
  const Eigen::VectorXd areas = triangle_areas(mesh);
  std::vector<double> cum(static_cast<size_t>(areas.size()));
  double acc = 0;
  for (Eigen::Index t = 0; t < areas.size(); ++t) {
    acc += areas[t];
    cum[static_cast<size_t>(t)] = acc;
  }
  require(acc > 0, Errc::DegenerateExtent, "sample_surface: zero total area");

  Rng rng(seed);
  PointCloudd out;
  out.points.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.real01() * acc;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const Eigen::Index t = it == cum.end() ? areas.size() - 1
                                           : static_cast<Eigen::Index>(it - cum.begin());
    const Eigen::RowVector3d a = mesh.vertices.row(mesh.triangles(t, 0));
    const Eigen::RowVector3d b = mesh.vertices.row(mesh.triangles(t, 1));
    const Eigen::RowVector3d c = mesh.vertices.row(mesh.triangles(t, 2));
    const double s = std::sqrt(rng.real01());
    const double v = rng.real01();
    out.points.row(i) = (1.0 - s) * a + s * (1.0 - v) * b + s * v * c;
  }
  return out;
}

struct RenderConfig {
  int width = 160;
  int height = 120;
  double pad = 1.05;  // image half-height as a multiple of the bounding radius
};

/// Orthographic depth render toward the mesh centroid, quantized to uint16
/// codes over [near, far], then back-projected. Self-occluded surface drops
/// out via the z-buffer, which is what makes the view partial.
inline PointCloudd render_partial(const TriangleMesh& mesh, const Eigen::RowVector3d& viewpoint,
                                  Eigen::Index n_points, uint64_t seed,
                                  const RenderConfig& cfg = {}) {
  check_mesh(mesh, "render_partial");
  require(n_points >= 1, Errc::InvalidArgument, "render_partial: n_points must be positive");
  require(cfg.width > 0 && cfg.height > 0 && cfg.pad >= 1.0, Errc::ConfigError,
          "render_partial: bad render config");

  const Eigen::RowVector3d centroid = mesh.vertices.colwise().mean();
  const double rb = (mesh.vertices.rowwise() - centroid).rowwise().norm().maxCoeff();
  const Eigen::RowVector3d to_center = centroid - viewpoint;
  const double dist = to_center.norm();
  require(dist > rb, Errc::InvalidArgument,
          "render_partial: viewpoint must lie outside the bounding sphere");

  const Eigen::RowVector3d fwd = to_center / dist;
  int up_axis = 0;
  Eigen::RowVector3d(std::abs(fwd[0]), std::abs(fwd[1]), std::abs(fwd[2])).minCoeff(&up_axis);
  Eigen::RowVector3d tmp = Eigen::RowVector3d::Zero();
  tmp[up_axis] = 1.0;
  const Eigen::RowVector3d right = fwd.cross(tmp).normalized();
  const Eigen::RowVector3d up = right.cross(fwd);

  const double znear = dist - rb, zfar = dist + rb;
  const double half_y = rb * cfg.pad;
  const double half_x = half_y * cfg.width / cfg.height;
  const int W = cfg.width, H = cfg.height;

  // camera-space vertices: (screen x, screen y, depth)
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> cam(mesh.vertices.rows(), 3);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    const Eigen::RowVector3d q = mesh.vertices.row(i) - viewpoint;
    cam.row(i) << q.dot(right), q.dot(up), q.dot(fwd);
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<size_t>(W) * H, inf);
  auto px_of = [&](double x) { return (x + half_x) / (2.0 * half_x) * W - 0.5; };
  auto py_of = [&](double y) { return (y + half_y) / (2.0 * half_y) * H - 0.5; };

  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    const Eigen::RowVector3d a = cam.row(mesh.triangles(t, 0));
    const Eigen::RowVector3d b = cam.row(mesh.triangles(t, 1));
    const Eigen::RowVector3d c = cam.row(mesh.triangles(t, 2));
    const double ax = px_of(a[0]), ay = py_of(a[1]);
    const double bx = px_of(b[0]), by = py_of(b[1]);
    const double cx = px_of(c[0]), cy = py_of(c[1]);
    const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({ax, bx, cx}))));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(std::max({ax, bx, cx}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({ay, by, cy}))));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(std::max({ay, by, cy}))));
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const double w0 = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / area;
        const double w1 = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w0 * a[2] + w1 * b[2] + w2 * c[2];
        double& cell = zbuf[static_cast<size_t>(py) * W + px];
        if (z < cell) cell = z;
      }
    }
  }

  std::vector<Eigen::RowVector3d> pts;
  for (int py = 0; py < H; ++py) {
    for (int px = 0; px < W; ++px) {
      const double z = zbuf[static_cast<size_t>(py) * W + px];
      if (!(z < inf)) continue;
      const double tq = (z - znear) / (zfar - znear);
      const long code = std::lround(std::min(1.0, std::max(0.0, tq)) * 65535.0);
      const double zq = znear + static_cast<double>(code) / 65535.0 * (zfar - znear);
      const double x = (px + 0.5) / W * 2.0 * half_x - half_x;
      const double y = (py + 0.5) / H * 2.0 * half_y - half_y;
      pts.push_back(viewpoint + right * x + up * y + fwd * zq);
    }
  }
  if (pts.empty()) fail(Errc::EmptyView, "render_partial: no surface visible from viewpoint");

  PointCloudd cloud;
  cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) cloud.points.row(static_cast<Eigen::Index>(i)) = pts[i];

  const Eigen::Index have = cloud.size();
  if (have > n_points) return subsample_random(cloud, n_points, Rng::derive(seed, {0x51u}));
  if (have < n_points) {
    Rng rng(Rng::derive(seed, {0x9adu}));
    PointCloudd padded;
    padded.points.resize(n_points, 3);
    padded.points.topRows(have) = cloud.points;
    for (Eigen::Index i = have; i < n_points; ++i)
      padded.points.row(i) = cloud.points.row(static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(have))));
    return padded;
  }
  return cloud;
}

}  // namespace fsc
