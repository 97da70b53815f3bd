#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <fsc/mesh.hpp>

using fsc::PointCloudd;
using fsc::Rng;
using fsc::TriangleMesh;

namespace {

TriangleMesh one_triangle() {
  TriangleMesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.triangles.resize(1, 3);
  m.triangles << 0, 1, 2;
  return m;
}

std::filesystem::path tmp_obj(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p, std::ios::trunc) << body;
  return p;
}

}  // namespace

TEST_CASE("check_mesh accepts valid meshes and rejects broken ones") {
  TriangleMesh m = one_triangle();
  CHECK_NOTHROW(fsc::check_mesh(m, "test"));

  TriangleMesh empty_v;
  empty_v.triangles = m.triangles;
  CHECK_THROWS_AS(fsc::check_mesh(empty_v, "test"), fsc::Error);

  TriangleMesh empty_t;
  empty_t.vertices = m.vertices;
  CHECK_THROWS_AS(fsc::check_mesh(empty_t, "test"), fsc::Error);

  TriangleMesh nan_v = m;
  nan_v.vertices(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fsc::check_mesh(nan_v, "test"), fsc::Error);

  TriangleMesh bad_idx = m;
  bad_idx.triangles(0, 2) = 3;
  CHECK_THROWS_AS(fsc::check_mesh(bad_idx, "test"), fsc::Error);
  bad_idx.triangles(0, 2) = -1;
  CHECK_THROWS_AS(fsc::check_mesh(bad_idx, "test"), fsc::Error);
}

TEST_CASE("triangle_areas and surface_area goldens") {
  const TriangleMesh tri = one_triangle();
  const Eigen::VectorXd a = fsc::triangle_areas(tri);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));

  // axis-aligned box: total area 2(ab + bc + ca)
  const TriangleMesh box = fsc::meshdetail::box({0, 0, 0}, {1.0, 2.0, 3.0});
  CHECK(box.triangle_count() == 12);
  CHECK(fsc::surface_area(box) == doctest::Approx(2.0 * (1 * 2 + 2 * 3 + 3 * 1)).epsilon(1e-12));

  CHECK(fsc::bbox_diagonal(box) == doctest::Approx(std::sqrt(1.0 + 4.0 + 9.0)).epsilon(1e-12));
}

TEST_CASE("drop_degenerate_triangles removes slivers and repeats") {
  TriangleMesh m = one_triangle();
  m.vertices.conservativeResize(4, 3);
  m.vertices.row(3) << 2, 0, 0;  // collinear with rows 0 and 1
  m.triangles.resize(4, 3);
  m.triangles << 0, 1, 2,  // fine
      0, 1, 1,             // repeated index
      0, 1, 3,             // zero area (collinear)
      2, 1, 0;             // fine, reversed winding
  fsc::drop_degenerate_triangles(m);
  REQUIRE(m.triangle_count() == 2);
  CHECK(m.triangles(0, 0) == 0);
  CHECK(m.triangles(1, 0) == 2);
}

TEST_CASE("normalize_mesh_unit centers and scales to the unit ball") {
  Rng rng(3);
  TriangleMesh m = fsc::make_primitive("lamp", rng);
  m.vertices.array() += 5.0;  // knock it off-center
  m.vertices.array() *= 7.0;
  const TriangleMesh n = fsc::normalize_mesh_unit(m);

  const Eigen::RowVector3d centroid = n.vertices.colwise().mean();
  CHECK(centroid.norm() < 1e-9);
  const double maxdist = n.vertices.rowwise().norm().maxCoeff();
  CHECK(maxdist == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.triangles == m.triangles);

  TriangleMesh flat = one_triangle();
  flat.vertices.setZero();  // no extent at all
  CHECK_THROWS_AS(fsc::normalize_mesh_unit(flat), fsc::Error);
}

TEST_CASE("primitive generators produce valid, reproducible meshes") {
  const auto& cats = fsc::primitive_categories();
  REQUIRE(cats.size() == 6);

  std::vector<std::string> all = cats;
  all.push_back("ribbon");  // supported by make_primitive though not a default category
  for (const auto& cat : all) {
    CAPTURE(cat);
    Rng r1(42), r2(42), r3(43);
    const TriangleMesh a = fsc::make_primitive(cat, r1);
    const TriangleMesh b = fsc::make_primitive(cat, r2);
    const TriangleMesh c = fsc::make_primitive(cat, r3);
    CHECK_NOTHROW(fsc::check_mesh(a, cat));
    CHECK(fsc::surface_area(a) > 0.0);
    CHECK(a.vertices == b.vertices);  // same seed, same mesh
    CHECK(a.triangles == b.triangles);
    const bool same_as_c = a.vertices.rows() == c.vertices.rows() && a.vertices == c.vertices;
    CHECK_FALSE(same_as_c);
    CHECK_NOTHROW(fsc::normalize_mesh_unit(a));
  }

  Rng rng(0);
  CHECK_THROWS_AS(fsc::make_primitive("teapot", rng), fsc::Error);
}

TEST_CASE("sample_surface stays on the surface and respects areas") {
  SUBCASE("single triangle: points lie inside it") {
    const TriangleMesh m = one_triangle();
    const PointCloudd cloud = fsc::sample_surface(m, 500, 9);
    REQUIRE(cloud.size() == 500);
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      CHECK(cloud.points(i, 2) == 0.0);
      CHECK(cloud.points(i, 0) >= -1e-12);
      CHECK(cloud.points(i, 1) >= -1e-12);
      CHECK(cloud.points(i, 0) + cloud.points(i, 1) <= 1.0 + 1e-12);
    }
  }

  SUBCASE("two triangles: hit counts follow the area ratio") {
    TriangleMesh m;
    m.vertices.resize(6, 3);
    // left triangle has legs of 10, right triangle legs of 1 -> areas 50 vs 0.5
    m.vertices << 0, 0, 0, 10, 0, 0, 0, 10, 0,  //
        20, 0, 0, 21, 0, 0, 20, 1, 0;
    m.triangles.resize(2, 3);
    m.triangles << 0, 1, 2, 3, 4, 5;

    const Eigen::Index n = 4000;
    const PointCloudd cloud = fsc::sample_surface(m, n, 4);
    Eigen::Index big = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (cloud.points(i, 0) < 15.0) ++big;
    const double expect = 50.0 / 50.5;
    const double sigma = std::sqrt(expect * (1 - expect) * static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(big) - expect * static_cast<double>(n)) < 5.0 * sigma);
  }

  SUBCASE("deterministic in the seed") {
    Rng rng(8);
    const TriangleMesh m = fsc::make_primitive("torus", rng);
    const PointCloudd a = fsc::sample_surface(m, 256, 77);
    const PointCloudd b = fsc::sample_surface(m, 256, 77);
    const PointCloudd c = fsc::sample_surface(m, 256, 78);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
  }

  SUBCASE("rejects bad input") {
    const TriangleMesh m = one_triangle();
    CHECK_THROWS_AS(fsc::sample_surface(m, 0, 1), fsc::Error);
    TriangleMesh flat = m;
    flat.vertices.row(1) = flat.vertices.row(0);
    flat.vertices.row(2) = flat.vertices.row(0);
    CHECK_THROWS_AS(fsc::sample_surface(flat, 10, 1), fsc::Error);
  }
}

TEST_CASE("render_partial sees only the front of a box") {
  // Axis-aligned box viewed head-on from +z: the z-buffer keeps just the near
  // face, so every surviving point sits on the z = 0.25 plane.
  const TriangleMesh box = fsc::meshdetail::box({-0.3, -0.2, -0.25}, {0.3, 0.2, 0.25});
  const PointCloudd cloud = fsc::render_partial(box, {0, 0, 5.0}, 300, 21);
  REQUIRE(cloud.size() == 300);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    CHECK(cloud.points(i, 2) == doctest::Approx(0.25).epsilon(1e-3));
    CHECK(std::abs(cloud.points(i, 0)) <= 0.3 + 1e-6);
    CHECK(std::abs(cloud.points(i, 1)) <= 0.2 + 1e-6);
  }
}

TEST_CASE("render_partial determinism and padding") {
  Rng rng(5);
  const TriangleMesh mesh = fsc::normalize_mesh_unit(fsc::make_primitive("cylinder", rng));
  const Eigen::RowVector3d vp(0.3, 2.4, 0.9);

  SUBCASE("same seed, same cloud") {
    const PointCloudd a = fsc::render_partial(mesh, vp, 128, 13);
    const PointCloudd b = fsc::render_partial(mesh, vp, 13, 13);  // subset size differs
    const PointCloudd c = fsc::render_partial(mesh, vp, 128, 13);
    CHECK(a.points == c.points);
    CHECK(b.size() == 13);
  }

  SUBCASE("padding repeats visible points when the view is too small") {
    fsc::RenderConfig cfg;
    cfg.width = 8;
    cfg.height = 8;  // at most 64 visible pixels
    const PointCloudd cloud = fsc::render_partial(mesh, vp, 200, 31, cfg);
    REQUIRE(cloud.size() == 200);
    // the first 64 rows cover every distinct point; the padded tail only copies
    std::set<std::array<double, 3>> head;
    for (Eigen::Index i = 0; i < 64; ++i)
      head.insert({cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2)});
    CHECK(head.size() <= 64);
    for (Eigen::Index i = 64; i < cloud.size(); ++i)
      CHECK(head.count({cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2)}) == 1);
  }

  SUBCASE("rejects bad viewpoints and configs") {
    CHECK_THROWS_AS(fsc::render_partial(mesh, {0.1, 0.0, 0.1}, 64, 1), fsc::Error);
    CHECK_THROWS_AS(fsc::render_partial(mesh, vp, 0, 1), fsc::Error);
    fsc::RenderConfig bad;
    bad.width = 0;
    CHECK_THROWS_AS(fsc::render_partial(mesh, vp, 64, 1, bad), fsc::Error);
    bad = {};
    bad.pad = 0.5;
    CHECK_THROWS_AS(fsc::render_partial(mesh, vp, 64, 1, bad), fsc::Error);
  }
}

TEST_CASE("load_obj parses the common dialects") {
  SUBCASE("plain, textured and relative face references") {
    const auto p = tmp_obj("fsc_test_ok.obj",
                           "# comment\n"
                           "v 0 0 0\r\n"
                           "v 1 0 0\n"
                           "v 1 1 0\n"
                           "v 0 1 0\n"
                           "vn 0 0 1\n"
                           "vt 0 0\n"
                           "quad as a fan\n"
                           "f 1/1/1 2/2/1 3/3/1 4/4/1\n"
                           "f -4//1 -2//1 -1//1\n");
    // the stray text line starts with an unknown token and is ignored
    const TriangleMesh m = fsc::load_obj(p.string());
    CHECK(m.vertex_count() == 4);
    REQUIRE(m.triangle_count() == 3);  // quad fan: (0,1,2),(0,2,3); then (0,2,3)
    CHECK(m.triangles(0, 0) == 0);
    CHECK(m.triangles(0, 1) == 1);
    CHECK(m.triangles(0, 2) == 2);
    CHECK(m.triangles(1, 0) == 0);
    CHECK(m.triangles(1, 1) == 2);
    CHECK(m.triangles(1, 2) == 3);
    CHECK(m.triangles(2, 0) == 0);
    CHECK(m.triangles(2, 1) == 2);
    CHECK(m.triangles(2, 2) == 3);
    std::filesystem::remove(p);
  }

  SUBCASE("error cases") {
    CHECK_THROWS_AS(fsc::load_obj("/nonexistent/fsc.obj"), fsc::Error);

    const auto bad_vertex = tmp_obj("fsc_test_badv.obj", "v 1 2\nf 1 1 1\n");
    CHECK_THROWS_AS(fsc::load_obj(bad_vertex.string()), fsc::Error);
    std::filesystem::remove(bad_vertex);

    const auto out_of_range = tmp_obj("fsc_test_oor.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
    CHECK_THROWS_AS(fsc::load_obj(out_of_range.string()), fsc::Error);
    std::filesystem::remove(out_of_range);

    const auto short_face = tmp_obj("fsc_test_short.obj", "v 0 0 0\nv 1 0 0\nf 1 2\n");
    CHECK_THROWS_AS(fsc::load_obj(short_face.string()), fsc::Error);
    std::filesystem::remove(short_face);

    const auto degenerate =
        tmp_obj("fsc_test_degen.obj", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n");
    CHECK_THROWS_AS(fsc::load_obj(degenerate.string()), fsc::Error);
    std::filesystem::remove(degenerate);
  }
}

TEST_CASE("save_obj round-trips through load_obj bitwise") {
  Rng rng(6);
  const TriangleMesh m = fsc::normalize_mesh_unit(fsc::make_primitive("lbracket", rng));
  const auto p = std::filesystem::temp_directory_path() / "fsc_test_roundtrip.obj";
  fsc::save_obj(p.string(), m);
  const TriangleMesh r = fsc::load_obj(p.string());
  CHECK(r.vertices == m.vertices);  // shortest-round-trip formatting
  CHECK(r.triangles == m.triangles);
  std::filesystem::remove(p);
}
