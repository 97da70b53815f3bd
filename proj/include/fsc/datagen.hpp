#pragma once

#include <filesystem>
#include <json.hpp>

#include "fsc/mesh.hpp"
#include "fsc/ply_io.hpp"

namespace fsc {

struct DatasetConfig {
  Eigen::Index gt_points = 16384;
  Eigen::Index partial_points = 2048;
  std::vector<Eigen::Index> levels = {1024, 512, 256, 128, 64};
  Eigen::Index n_coarse = 512;
  uint64_t seed = 0;
  int views = 1;
  bool nested = true;  // lower levels are subsets of the 2048-point partial
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  double view_distance = 2.5;  // from the unit-ball center
  RenderConfig camera;
};

inline void validate_dataset_config(const DatasetConfig& c) {
  require(c.gt_points >= 4 && c.partial_points >= 1 && c.n_coarse >= 1, Errc::ConfigError,
          "dataset config: point counts must be positive");
  require(c.n_coarse <= c.gt_points, Errc::ConfigError,
          "dataset config: n_coarse exceeds gt_points");
  Eigen::Index prev = c.partial_points;
  for (const Eigen::Index l : c.levels) {
    require(l >= 1 && l < prev, Errc::ConfigError,
            "dataset config: levels must strictly decrease below partial_points");
    prev = l;
  }
  require(c.views >= 1, Errc::ConfigError, "dataset config: views must be positive");
  require(c.train_frac >= 0 && c.val_frac >= 0 && c.test_frac >= 0 &&
              std::abs(c.train_frac + c.val_frac + c.test_frac - 1.0) < 1e-9,
          Errc::ConfigError, "dataset config: split fractions must sum to 1");
  require(c.view_distance > 1.05, Errc::ConfigError,
          "dataset config: view distance must clear the unit bounding sphere");
}

struct MeshEntry {
  std::string id;
  std::string category;
  TriangleMesh mesh;
};

struct SampleRef {
  std::string id;
  std::string category;
  std::string split;
  std::string dir;  // relative to the dataset root
};

struct DatasetManifest {
  nlohmann::ordered_json json;

  std::vector<SampleRef> samples(const std::string& split = "") const {
    std::vector<SampleRef> out;
    for (const auto& s : json.at("samples")) {
      SampleRef r{s.at("id"), s.at("category"), s.at("split"), s.at("dir")};
      if (split.empty() || r.split == split) out.push_back(std::move(r));
    }
    return out;
  }

  std::vector<Eigen::Index> levels() const {
    std::vector<Eigen::Index> out;
    out.push_back(json.at("config").at("partial_points").get<Eigen::Index>());
    for (const auto& l : json.at("config").at("levels")) out.push_back(l.get<Eigen::Index>());
    return out;
  }
};

inline std::string partial_filename(Eigen::Index resolution) {
  return "partial_" + std::to_string(resolution) + ".ply";
}

namespace detail {

inline nlohmann::ordered_json dataset_config_json(const DatasetConfig& c) {
  nlohmann::ordered_json j;
  j["gt_points"] = c.gt_points;
  j["partial_points"] = c.partial_points;
  j["levels"] = c.levels;
  j["n_coarse"] = c.n_coarse;
  j["seed"] = c.seed;
  j["views"] = c.views;
  j["nested"] = c.nested;
  j["split_fractions"] = {c.train_frac, c.val_frac, c.test_frac};
  j["view_distance"] = c.view_distance;
  j["camera"] = {{"width", c.camera.width}, {"height", c.camera.height}, {"pad", c.camera.pad}};
  j["normalization"] = "unit_ball";
  return j;
}

inline std::vector<std::string> assign_splits(size_t n, const DatasetConfig& cfg) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(Rng::derive(cfg.seed, {0xA55u}));
  for (size_t i = 0; i + 1 < n; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  auto count = [&](double f) { return static_cast<size_t>(std::llround(f * static_cast<double>(n))); };
  size_t n_test = count(cfg.test_frac), n_val = count(cfg.val_frac);
  while (n_test + n_val >= n && (n_test > 0 || n_val > 0)) {  // keep at least one train sample
    if (n_test >= n_val && n_test > 0)
      --n_test;
    else
      --n_val;
  }
  std::vector<std::string> split(n, "train");
  for (size_t i = 0; i < n_test; ++i) split[order[i]] = "test";
  for (size_t i = 0; i < n_val; ++i) split[order[n_test + i]] = "val";
  return split;
}

}  // namespace detail

/// Generates the on-disk dataset: per mesh, a dense ground truth, its
/// farthest-point coarse subset, a depth-rendered partial view, and the
/// nested lower-resolution partials. Returns the manifest it wrote.
inline DatasetManifest build_dataset(const std::vector<MeshEntry>& meshes, const DatasetConfig& cfg,
                                     const std::string& out_dir) {
  validate_dataset_config(cfg);
  require(!meshes.empty(), Errc::EmptyInput, "build_dataset: no meshes");
  namespace fs = std::filesystem;

  const std::vector<std::string> splits = detail::assign_splits(meshes.size(), cfg);

  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["config"] = detail::dataset_config_json(cfg);
  manifest["samples"] = nlohmann::ordered_json::array();

  struct Job {
    std::string sample_id, category, split, dir;
    size_t mesh_index;
    int view;
  };
  std::vector<Job> jobs;
  for (size_t m = 0; m < meshes.size(); ++m) {
    require(!meshes[m].id.empty(), Errc::InvalidArgument, "build_dataset: mesh with empty id");
    for (int v = 0; v < cfg.views; ++v) {
      Job j;
      j.sample_id = cfg.views == 1 ? meshes[m].id : meshes[m].id + "_v" + std::to_string(v);
      j.category = meshes[m].category;
      j.split = splits[m];
      j.dir = j.split + "/" + j.sample_id;
      j.mesh_index = m;
      j.view = v;
      jobs.push_back(std::move(j));
    }
  }

  for (const Job& job : jobs)
    fs::create_directories(fs::path(out_dir) / job.dir);

  parallel_for(static_cast<std::int64_t>(jobs.size()), [&](std::int64_t ji) {
    const Job& job = jobs[static_cast<size_t>(ji)];
    const MeshEntry& entry = meshes[job.mesh_index];
    const uint64_t base = Rng::derive(cfg.seed, {hash_str(job.sample_id)});
    const fs::path dir = fs::path(out_dir) / job.dir;

    const TriangleMesh norm = normalize_mesh_unit(entry.mesh);
    PointCloudd gt = sample_surface(norm, cfg.gt_points, Rng::derive(base, {1}));
    gt.id = job.sample_id;
    write_ply((dir / "gt.ply").string(), gt);
    write_ply((dir / "coarse.ply").string(), farthest_point_sample(gt, cfg.n_coarse, 0));

    Rng view_rng(Rng::derive(base, {2, static_cast<uint64_t>(job.view)}));
    const double z = 2.0 * view_rng.real01() - 1.0;
    const double az = 2.0 * EIGEN_PI * view_rng.real01();
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Eigen::RowVector3d dir_vec(rxy * std::cos(az), rxy * std::sin(az), z);

    PointCloudd partial = render_partial(norm, dir_vec * cfg.view_distance, cfg.partial_points,
                                         Rng::derive(base, {3, static_cast<uint64_t>(job.view)}),
                                         cfg.camera);
    partial.id = job.sample_id;
    write_ply((dir / partial_filename(cfg.partial_points)).string(), partial);

    PointCloudd chain = partial;
    for (const Eigen::Index level : cfg.levels) {
      const PointCloudd& source = cfg.nested ? chain : partial;
      chain = subsample_random(source, level,
                               Rng::derive(base, {4, static_cast<uint64_t>(job.view),
                                                  static_cast<uint64_t>(level)}));
      write_ply((dir / partial_filename(level)).string(), chain);
    }
  });

  for (const Job& job : jobs) {
    nlohmann::ordered_json s;
    s["id"] = job.sample_id;
    s["category"] = job.category;
    s["split"] = job.split;
    s["dir"] = job.dir;
    manifest["samples"].push_back(std::move(s));
  }

  const fs::path mpath = fs::path(out_dir) / "manifest.json";
  std::ofstream os(mpath, std::ios::binary);
  if (!os) fail(Errc::IoError, "build_dataset: cannot write " + mpath.string());
  os << manifest.dump(2) << "\n";
  if (!os) fail(Errc::IoError, "build_dataset: write failed for " + mpath.string());
  return DatasetManifest{std::move(manifest)};
}

inline DatasetManifest read_manifest(const std::string& dataset_root) {
  const std::filesystem::path p = std::filesystem::path(dataset_root) / "manifest.json";
  std::ifstream is(p);
  if (!is) fail(Errc::IoError, "manifest not found: " + p.string());
  DatasetManifest m;
  try {
    is >> m.json;
  } catch (const std::exception& e) {
    fail(Errc::IoError, "manifest parse error in " + p.string() + ": " + e.what());
  }
  require(m.json.contains("version") && m.json.contains("samples") && m.json.contains("config"),
          Errc::IoError, "manifest missing required fields: " + p.string());
  return m;
}

inline PointCloudd load_sample_cloud(const std::string& dataset_root, const SampleRef& ref,
                                     const std::string& file) {
  return read_ply((std::filesystem::path(dataset_root) / ref.dir / file).string());
}

}  // namespace fsc
