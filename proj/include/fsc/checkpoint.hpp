#pragma once

#include <fstream>
#include <json.hpp>

#include "fsc/model.hpp"

namespace fsc {

namespace ckpt {

inline constexpr char kMagic[8] = {'F', 'S', 'C', 'C', 'K', 'P', 'T', '1'};

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline void write_floats(std::ostream& os, const float* p, size_t n) {
  static_assert(sizeof(float) == 4);
  write_bytes(os, p, 4 * n);
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    fail(Errc::IoError, std::string("checkpoint: truncated while reading ") + what);
}

inline uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_bytes(is, b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::string read_string(std::istream& is, const char* what) {
  const uint64_t n = read_u64(is, what);
  if (n > (1u << 20)) fail(Errc::IoError, std::string("checkpoint: implausible string length in ") + what);
  std::string s(n, '\0');
  read_bytes(is, s.data(), n, what);
  return s;
}

/// Tensors as float32 row-major with a length-prefixed name, sorted by name.
template <typename S>
void write_params(std::ostream& os, const ModelParams<S>& params) {
  write_u64(os, params.tensors.size());
  for (const auto& [name, t] : params.tensors) {
    write_string(os, name);
    write_u64(os, static_cast<uint64_t>(t.rows()));
    write_u64(os, static_cast<uint64_t>(t.cols()));
    std::vector<float> buf(static_cast<size_t>(t.size()));
    size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) buf[k++] = static_cast<float>(t(r, c));
    write_floats(os, buf.data(), buf.size());
  }
}

template <typename S>
ModelParams<S> read_params(std::istream& is) {
  ModelParams<S> params;
  const uint64_t count = read_u64(is, "tensor count");
  if (count > (1u << 20)) fail(Errc::IoError, "checkpoint: implausible tensor count");
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(is, "tensor name");
    const uint64_t rows = read_u64(is, name.c_str());
    const uint64_t cols = read_u64(is, name.c_str());
    if (rows * cols > (1ull << 28)) fail(Errc::IoError, "checkpoint: implausible tensor size: " + name);
    std::vector<float> buf(rows * cols);
    read_bytes(is, buf.data(), 4 * buf.size(), name.c_str());
    typename ModelParams<S>::Mat t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = static_cast<S>(buf[k++]);
    if (params.tensors.count(name)) fail(Errc::IoError, "checkpoint: duplicate tensor: " + name);
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

}  // namespace ckpt

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["n_max"] = c.n_max;
  j["n_coarse"] = c.n_coarse;
  j["grid"] = c.grid;
  j["d1"] = c.d1;
  j["d2"] = c.d2;
  j["heads"] = c.heads;
  j["memory_slots"] = c.memory_slots;
  j["extensive_branch"] = c.extensive_branch;
  j["salient_branch"] = c.salient_branch;
  j["salient_attention"] = c.salient_attention;
  j["feature_revision"] = c.feature_revision;
  j["point_revision"] = c.point_revision;
  j["pointnetpp_fusion"] = c.pointnetpp_fusion;
  j["transformer_fusion"] = c.transformer_fusion;
  j["ball_radius"] = c.ball_radius;
  j["ball_k"] = c.ball_k;
  j["sa_width"] = c.sa_width;
  j["fuse_width"] = c.fuse_width;
  j["fold_hidden"] = c.fold_hidden;
  j["rp_hidden"] = c.rp_hidden;
  j["critic_width"] = c.critic_width;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto geti = [&](const char* k, int& out) {
    if (j.contains(k)) out = j.at(k).get<int>();
  };
  auto getb = [&](const char* k, bool& out) {
    if (j.contains(k)) out = j.at(k).get<bool>();
  };
  auto getd = [&](const char* k, double& out) {
    if (j.contains(k)) out = j.at(k).get<double>();
  };
  geti("n_max", c.n_max);
  geti("n_coarse", c.n_coarse);
  geti("grid", c.grid);
  geti("d1", c.d1);
  geti("d2", c.d2);
  geti("heads", c.heads);
  geti("memory_slots", c.memory_slots);
  getb("extensive_branch", c.extensive_branch);
  getb("salient_branch", c.salient_branch);
  getb("salient_attention", c.salient_attention);
  getb("feature_revision", c.feature_revision);
  getb("point_revision", c.point_revision);
  getb("pointnetpp_fusion", c.pointnetpp_fusion);
  getb("transformer_fusion", c.transformer_fusion);
  getd("ball_radius", c.ball_radius);
  geti("ball_k", c.ball_k);
  geti("sa_width", c.sa_width);
  geti("fuse_width", c.fuse_width);
  geti("fold_hidden", c.fold_hidden);
  geti("critic_width", c.critic_width);
  geti("rp_hidden", c.rp_hidden);
  validate_config(c);
  return c;
}

/// Writes the full parameter set (float32) plus the model config.
template <typename S>
void save_checkpoint(const std::string& path, const ModelParams<S>& params, const ModelConfig& cfg) {
  validate_params(params, cfg);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::IoError, "cannot open checkpoint for writing: " + path);
  ckpt::write_bytes(os, ckpt::kMagic, 8);
  ckpt::write_u64(os, 1);  // format version
  ckpt::write_string(os, model_config_to_json(cfg).dump());
  ckpt::write_params(os, params);
  if (!os) fail(Errc::IoError, "checkpoint write failed: " + path);
}

template <typename S = float>
struct LoadedCheckpoint {
  ModelParams<S> params;
  ModelConfig config;
};

template <typename S = float>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::IoError, "cannot open checkpoint: " + path);
  char magic[8];
  ckpt::read_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, ckpt::kMagic, 8) != 0)
    fail(Errc::IoError, "not a checkpoint file: " + path);
  const uint64_t version = ckpt::read_u64(is, "version");
  if (version != 1) fail(Errc::IoError, "unsupported checkpoint version in " + path);
  LoadedCheckpoint<S> out;
  const std::string cfg_json = ckpt::read_string(is, "config");
  try {
    out.config = model_config_from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::IoError, std::string("checkpoint config parse error: ") + e.what());
  }
  out.params = ckpt::read_params<S>(is);
  validate_params(out.params, out.config);
  return out;
}

}  // namespace fsc
