#pragma once

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsc/point_cloud.hpp"

namespace fsc {

namespace detail {

inline void write_double_text(std::ostream& os, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

}  // namespace detail

/// Writes x/y/z (and nx/ny/nz when present) as double properties.
inline void write_ply(const std::string& path, const PointCloudd& cloud, bool binary = true) {
  check_cloud(cloud, "write_ply " + path);
  require(!cloud.empty(), Errc::EmptyInput, "write_ply " + path + ": empty cloud");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::IoError, "write_ply: cannot open " + path);

  const bool with_normals = cloud.has_normals();
  os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) os << "property double nx\nproperty double ny\nproperty double nz\n";
  os << "end_header\n";

  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    double row[6];
    row[0] = cloud.points(i, 0);
    row[1] = cloud.points(i, 1);
    row[2] = cloud.points(i, 2);
    if (with_normals) {
      row[3] = cloud.normals(i, 0);
      row[4] = cloud.normals(i, 1);
      row[5] = cloud.normals(i, 2);
    }
    const int n = with_normals ? 6 : 3;
    if (binary) {
      os.write(reinterpret_cast<const char*>(row), n * static_cast<std::streamsize>(sizeof(double)));
    } else {
      for (int j = 0; j < n; ++j) {
        if (j) os << ' ';
        detail::write_double_text(os, row[j]);
      }
      os << '\n';
    }
  }
  if (!os) fail(Errc::IoError, "write_ply: write failed for " + path);
}

/// Reads ascii or binary_little_endian PLY with float/double x y z
/// [nx ny nz] vertex properties.
inline PointCloudd read_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::IoError, "read_ply: cannot open " + path);

  auto bad = [&](const std::string& msg) -> void { fail(Errc::IoError, "read_ply " + path + ": " + msg); };

  std::string line;
  if (!std::getline(is, line) || (line != "ply" && line != "ply\r")) bad("missing ply magic");

  bool binary = false, format_seen = false;
  Eigen::Index n_vertex = -1;
  std::vector<std::pair<std::string, bool>> props;  // name, is_double
  bool in_vertex_element = false;

  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        bad("unsupported format " + fmt);
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (name == "vertex") {
        if (count < 0) bad("bad vertex count");
        n_vertex = static_cast<Eigen::Index>(count);
        in_vertex_element = true;
      } else {
        if (count != 0) bad("unsupported element " + name);
        in_vertex_element = false;
      }
    } else if (tok == "property") {
      if (!in_vertex_element) bad("property outside vertex element");
      std::string type, name;
      ls >> type >> name;
      if (type == "list") bad("list properties unsupported");
      if (type != "float" && type != "float32" && type != "double" && type != "float64")
        bad("unsupported property type " + type);
      props.emplace_back(name, type == "double" || type == "float64");
    } else if (tok == "end_header") {
      break;
    } else {
      bad("unexpected header token " + tok);
    }
  }
  if (!format_seen || n_vertex < 0) bad("incomplete header");

  const std::vector<std::string> pos_names = {"x", "y", "z"};
  const std::vector<std::string> nrm_names = {"nx", "ny", "nz"};
  bool with_normals = false;
  if (props.size() == 6) {
    with_normals = true;
  } else if (props.size() != 3) {
    bad("expected 3 or 6 vertex properties, found " + std::to_string(props.size()));
  }
  for (int j = 0; j < 3; ++j)
    if (props[static_cast<size_t>(j)].first != pos_names[static_cast<size_t>(j)])
      bad("expected property " + pos_names[static_cast<size_t>(j)]);
  if (with_normals)
    for (int j = 0; j < 3; ++j)
      if (props[static_cast<size_t>(3 + j)].first != nrm_names[static_cast<size_t>(j)])
        bad("expected property " + nrm_names[static_cast<size_t>(j)]);
  if (n_vertex == 0) bad("empty vertex element");

  PointCloudd cloud;
  cloud.points.resize(n_vertex, 3);
  if (with_normals) cloud.normals.resize(n_vertex, 3);
  const size_t n_props = props.size();

  if (binary) {
    for (Eigen::Index i = 0; i < n_vertex; ++i) {
      double row[6];
      for (size_t j = 0; j < n_props; ++j) {
        if (props[j].second) {
          double v;
          if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) bad("truncated vertex data");
          row[j] = v;
        } else {
          float v;
          if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) bad("truncated vertex data");
          row[j] = static_cast<double>(v);
        }
      }
      cloud.points.row(i) << row[0], row[1], row[2];
      if (with_normals) cloud.normals.row(i) << row[3], row[4], row[5];
    }
  } else {
    for (Eigen::Index i = 0; i < n_vertex; ++i) {
      if (!std::getline(is, line)) bad("truncated vertex data");
      std::istringstream ls(line);
      double row[6];
      for (size_t j = 0; j < n_props; ++j)
        if (!(ls >> row[j])) bad("bad vertex line " + std::to_string(i));
      cloud.points.row(i) << row[0], row[1], row[2];
      if (with_normals) cloud.normals.row(i) << row[3], row[4], row[5];
    }
  }

  if (!cloud.points.allFinite() || (with_normals && !cloud.normals.allFinite()))
    bad("non-finite vertex values");
  return cloud;
}

}  // namespace fsc
