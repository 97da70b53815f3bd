#pragma once

#include <map>
#include <memory>

#include "fsc/graph.hpp"
#include "fsc/kdtree.hpp"

namespace fsc {

struct ModelConfig {
  int n_max = 4096;    // largest accepted input cloud
  int n_coarse = 512;  // |Y_coarse| = |Y_fine|
  int grid = 2;        // folding patch is grid x grid
  int d1 = 512;        // extensive branch width
  int d2 = 512;        // salient branch width
  int heads = 4;
  int memory_slots = 64;  // external-attention memory rows

  // ablation switches (population of ModelParams changes with these)
  bool extensive_branch = true;
  bool salient_branch = true;
  bool salient_attention = true;  // offset + cascaded attention inside the salient branch
  bool feature_revision = true;
  bool point_revision = true;
  bool pointnetpp_fusion = true;
  bool transformer_fusion = true;

  // decoder / critic internals
  double ball_radius = 0.2;
  int ball_k = 16;
  int sa_width = 64;     // local-feature width out of set abstraction
  int fuse_width = 64;   // attention width in the detail decoder
  int fold_hidden = 64;
  int rp_hidden = 64;    // point-revision MLP width
  int critic_width = 64;

  int m_detail() const { return n_coarse * grid * grid; }
  int feature_width() const { return d1 + d2; }
};

inline ModelConfig model_preset(const std::string& name) {
  if (name == "paper") return ModelConfig{};
  if (name == "tiny") {
    ModelConfig c;
    c.d1 = 64;
    c.d2 = 64;
    c.memory_slots = 32;
    c.n_coarse = 64;
    c.grid = 2;
    c.sa_width = 48;
    c.fuse_width = 48;
    c.fold_hidden = 48;
    return c;
  }
  fail(Errc::ConfigError, "unknown preset '" + name + "' (expected tiny or paper)");
}

inline void validate_config(const ModelConfig& c) {
  require(c.n_max >= 1 && c.n_coarse >= 1 && c.grid >= 1, Errc::ConfigError,
          "model config: sizes must be positive");
  require(c.d1 > 0 && c.d2 > 0 && c.heads > 0 && c.memory_slots > 0, Errc::ConfigError,
          "model config: widths must be positive");
  require(c.d1 % 2 == 0 && c.d2 % 2 == 0, Errc::ConfigError,
          "model config: branch widths must be even (two pooled halves)");
  require(c.extensive_branch || c.salient_branch, Errc::ConfigError,
          "model config: at least one encoder branch must be enabled");
  if (c.salient_branch && c.salient_attention)
    require((c.d2 / 2) % c.heads == 0, Errc::ConfigError,
            "model config: salient attention width d2/2 must divide by heads");
  if (c.transformer_fusion)
    require(c.fuse_width % c.heads == 0, Errc::ConfigError,
            "model config: fuse width must divide by heads");
  require(c.ball_radius > 0 && c.ball_k >= 1, Errc::ConfigError, "model config: bad ball query");
  require(c.sa_width > 0 && c.fuse_width > 0 && c.fold_hidden > 0 && c.rp_hidden > 0 &&
              c.critic_width > 0,
          Errc::ConfigError, "model config: decoder widths must be positive");
}

template <typename Scalar>
struct ModelParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::map<std::string, Mat> tensors;

  const Mat& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) fail(Errc::ConfigError, "missing parameter tensor '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

enum class ParamInit { FanInUniform, Memory, Zero };

struct ParamSpec {
  std::string name;
  Eigen::Index rows, cols;
  ParamInit init;
};

/// Canonical tensor census for a config; checkpoint order and ablation
/// name sets both come from here.
inline std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  validate_config(c);
  std::vector<ParamSpec> out;
  auto lin = [&](const std::string& p, Eigen::Index in, Eigen::Index outw, ParamInit wi = ParamInit::FanInUniform) {
    out.push_back({p + ".w", in, outw, wi});
    out.push_back({p + ".b", 1, outw, wi == ParamInit::FanInUniform ? ParamInit::FanInUniform : ParamInit::Zero});
  };
  auto mlp2 = [&](const std::string& p, Eigen::Index in, Eigen::Index hidden, Eigen::Index outw) {
    lin(p + ".l0", in, hidden);
    lin(p + ".l1", hidden, outw);
  };
  auto zero_lin = [&](const std::string& p, Eigen::Index in, Eigen::Index outw) {
    out.push_back({p + ".w", in, outw, ParamInit::Zero});
    out.push_back({p + ".b", 1, outw, ParamInit::Zero});
  };
  auto ea_block = [&](const std::string& p, Eigen::Index width) {
    const Eigen::Index dh = width / c.heads;
    for (int h = 0; h < c.heads; ++h) {
      out.push_back({p + ".h" + std::to_string(h) + ".mk", dh, c.memory_slots, ParamInit::Memory});
      out.push_back({p + ".h" + std::to_string(h) + ".mv", c.memory_slots, dh, ParamInit::Memory});
    }
  };

  const Eigen::Index w = c.feature_width();
  if (c.extensive_branch) {
    const Eigen::Index e = c.d1 / 2;
    mlp2("enc.ext.l1", 3, std::max<Eigen::Index>(8, e / 2), e);
    mlp2("enc.ext.l2", 2 * e, e, e);
  }
  if (c.salient_branch) {
    const Eigen::Index e = c.d2 / 2;
    mlp2("enc.sal.l1", 3, std::max<Eigen::Index>(8, e / 2), e);
    if (c.salient_attention) {
      const Eigen::Index aq = std::max<Eigen::Index>(4, e / 4);
      out.push_back({"enc.sal.oa.wq", e, aq, ParamInit::FanInUniform});
      out.push_back({"enc.sal.oa.wk", e, aq, ParamInit::FanInUniform});
      out.push_back({"enc.sal.oa.wv", e, e, ParamInit::FanInUniform});
      lin("enc.sal.oa.off", e, e);
    }
    lin("enc.sal.l2.l0", 2 * e, e);
    if (c.salient_attention) {
      ea_block("enc.sal.ea0", e);
      ea_block("enc.sal.ea1", e);
    }
    lin("enc.sal.l2.l1", e, e);
  }
  if (!(c.extensive_branch && c.salient_branch)) {
    const Eigen::Index lone = c.extensive_branch ? c.d1 : c.d2;
    lin("enc.proj", lone, w);
  }

  if (c.feature_revision) {
    lin("rf.gen.l1", w, w);
    lin("rf.gen.l2", w, w);
    lin("rf.gen.l3", 2 * w, w);
    lin("rf.gen.l4", w, w);
    lin("rf.gen.l5", 2 * w, w);
    lin("rf.gen.l6", w, w);
    zero_lin("rf.gen.l7", w, w);
    const Eigen::Index cw = c.critic_width, cr = std::max<Eigen::Index>(4, cw / 4);
    lin("rf.critic.l1", w, cw);
    lin("rf.critic.l2", cw, cw);
    lin("rf.critic.se0", cw, cr);
    lin("rf.critic.se1", cr, cw);
    lin("rf.critic.l3", cw, cw);
    lin("rf.critic.l4", cw, 1);
  }

  const Eigen::Index ch = std::max<Eigen::Index>(static_cast<Eigen::Index>(c.d1), 128);
  lin("dec.coarse.l0", w, ch);
  lin("dec.coarse.l1", ch, ch);
  lin("dec.coarse.l2", ch, 3 * c.n_coarse);

  if (c.point_revision) {
    lin("rp.gen.l0", 3, c.rp_hidden);
    lin("rp.gen.l1", c.rp_hidden, c.rp_hidden);
    zero_lin("rp.gen.l2", c.rp_hidden, 3);
    const Eigen::Index cw = c.critic_width;
    lin("rp.critic.l0", 3, cw);
    lin("rp.critic.l1", cw, cw);
    lin("rp.critic.l2", cw, cw);
    lin("rp.critic.l3", cw, 1);
  }

  Eigen::Index fuse_in = 3 + w;
  if (c.pointnetpp_fusion) {
    mlp2("dec.gd.sa", 3, std::max<Eigen::Index>(8, c.sa_width / 2), c.sa_width);
    fuse_in += c.sa_width;
  }
  lin("dec.gd.fuse", fuse_in, c.fuse_width);
  if (c.transformer_fusion) ea_block("dec.gd.ea", c.fuse_width);
  lin("dec.gd.fold1.l0", c.fuse_width + 2, c.fold_hidden);
  lin("dec.gd.fold1.l1", c.fold_hidden, 3);
  lin("dec.gd.fold2.l0", c.fuse_width + 3, c.fold_hidden);
  zero_lin("dec.gd.fold2.l1", c.fold_hidden, 3);
  return out;
}

/// Seeded initialization: fan-in uniform linears, 0.02-std normal attention
/// memories, zero residual/offset heads. Each tensor draws from its own
/// name-derived stream, so the census order never matters.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, uint64_t seed) {
  ModelParams<Scalar> p;
  for (const ParamSpec& spec : param_specs(cfg)) {
    typename ModelParams<Scalar>::Mat m(spec.rows, spec.cols);
    Rng rng(Rng::derive(seed, {hash_str(spec.name)}));
    switch (spec.init) {
      case ParamInit::FanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.rows));
        for (Eigen::Index i = 0; i < spec.rows; ++i)
          for (Eigen::Index j = 0; j < spec.cols; ++j)
            m(i, j) = Scalar((2.0 * rng.real01() - 1.0) * bound);
        break;
      }
      case ParamInit::Memory:
        for (Eigen::Index i = 0; i < spec.rows; ++i)
          for (Eigen::Index j = 0; j < spec.cols; ++j) m(i, j) = Scalar(0.02 * rng.normal());
        break;
      case ParamInit::Zero:
        m.setZero();
        break;
    }
    p.tensors.emplace(spec.name, std::move(m));
  }
  return p;
}

template <typename Scalar>
void validate_params(const ModelParams<Scalar>& p, const ModelConfig& cfg) {
  const auto specs = param_specs(cfg);
  require(p.tensors.size() == specs.size(), Errc::ConfigError,
          "params: tensor count " + std::to_string(p.tensors.size()) + " differs from config census " +
              std::to_string(specs.size()));
  for (const ParamSpec& s : specs) {
    const auto& m = p.at(s.name);
    require(m.rows() == s.rows && m.cols() == s.cols, Errc::ConfigError,
            "params: tensor '" + s.name + "' has wrong shape");
    if (!m.allFinite()) fail(Errc::NumericError, "params: tensor '" + s.name + "' not finite");
  }
}

/// Lazily binds named tensors into a graph. trainable=false binds constants
/// (used when the critic is frozen inside a generator graph).
template <typename Scalar>
class ParamBinder {
 public:
  using Var = typename Graph<Scalar>::Var;

  ParamBinder(Graph<Scalar>* g, const ModelParams<Scalar>* params, bool trainable)
      : g_(g), params_(params), trainable_(trainable) {}

  Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Var v = trainable_ ? g_->param(params_->at(name)) : g_->constant(params_->at(name));
    bound_.emplace(name, v);
    return v;
  }

  const std::map<std::string, Var>& bound() const { return bound_; }

  /// Gradients of every bound tensor after the graph's backward sweep.
  std::map<std::string, typename Graph<Scalar>::Mat> collect_grads() const {
    std::map<std::string, typename Graph<Scalar>::Mat> out;
    for (const auto& [name, var] : bound_) {
      auto g = g_->grad(var);
      if (!g.allFinite()) fail(Errc::NonFiniteGradient, "gradient of '" + name + "' is not finite");
      out.emplace(name, std::move(g));
    }
    return out;
  }

 private:
  Graph<Scalar>* g_;
  const ModelParams<Scalar>* params_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

// ---------------------------------------------------------------------------
// forward stages

namespace modeldetail {

template <typename S>
typename Graph<S>::Var linear(Graph<S>& g, ParamBinder<S>& b, const std::string& prefix,
                              typename Graph<S>::Var x) {
  return g.add_row(g.matmul(x, b(prefix + ".w")), b(prefix + ".b"));
}

template <typename S>
typename Graph<S>::Var mlp2(Graph<S>& g, ParamBinder<S>& b, const std::string& prefix,
                            typename Graph<S>::Var x) {
  return linear(g, b, prefix + ".l1", g.relu(linear(g, b, prefix + ".l0", x)));
}

/// softmax down each column, then L1 across each row (PCT-style double
/// normalization shared by offset and external attention).
template <typename S>
typename Graph<S>::Var double_norm(Graph<S>& g, typename Graph<S>::Var e) {
  return g.l1_normalize_rows(g.col_softmax(e));
}

}  // namespace modeldetail

template <typename S>
typename Graph<S>::Var offset_attention(Graph<S>& g, ParamBinder<S>& b, const std::string& prefix,
                                        typename Graph<S>::Var F) {
  using modeldetail::linear;
  const auto Q = g.matmul(F, b(prefix + ".wq"));
  const auto K = g.matmul(F, b(prefix + ".wk"));
  const auto V = g.matmul(F, b(prefix + ".wv"));
  const auto A = modeldetail::double_norm(g, g.matmul(Q, g.transpose(K)));
  const auto offset = g.sub(F, g.matmul(A, V));
  return g.add(F, g.relu(linear(g, b, prefix + ".off", offset)));
}

/// One multi-head external-attention block with residual.
template <typename S>
typename Graph<S>::Var external_attention(Graph<S>& g, ParamBinder<S>& b, const std::string& prefix,
                                          typename Graph<S>::Var F, int heads) {
  const Eigen::Index d = g.cols(F);
  require(d % heads == 0, Errc::ConfigError, "external attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  typename Graph<S>::Var out{};
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    const auto Fh = g.slice_cols(F, h * dh, dh);
    const auto A = modeldetail::double_norm(g, g.matmul(Fh, b(hp + ".mk")));
    const auto oh = g.matmul(A, b(hp + ".mv"));
    out = h == 0 ? oh : g.concat_cols(out, oh);
  }
  return g.add(F, out);
}

template <typename S>
struct EncoderVars {
  using Var = typename Graph<S>::Var;
  Var F11, f11, F11_tilde, f12, f1;  // extensive branch intermediates
  Var f2;                            // salient branch output
  Var f_coarse;
};

template <typename S>
typename Graph<S>::Var extensive_branch_fwd(Graph<S>& g, ParamBinder<S>& b,
                                            typename Graph<S>::Var X, EncoderVars<S>* acts) {
  using modeldetail::mlp2;
  const auto F11 = mlp2(g, b, "enc.ext.l1", X);
  const auto f11 = g.max_pool_rows(F11);
  const auto F11t = g.concat_cols(F11, g.broadcast_row(f11, g.rows(F11)));
  const auto F12 = mlp2(g, b, "enc.ext.l2", F11t);
  const auto f12 = g.max_pool_rows(F12);
  const auto f1 = g.concat_cols(f11, f12);
  if (acts) {
    acts->F11 = F11;
    acts->f11 = f11;
    acts->F11_tilde = F11t;
    acts->f12 = f12;
    acts->f1 = f1;
  }
  return f1;
}

template <typename S>
typename Graph<S>::Var salient_branch_fwd(Graph<S>& g, ParamBinder<S>& b, const ModelConfig& cfg,
                                          typename Graph<S>::Var X, EncoderVars<S>* acts) {
  using modeldetail::linear;
  using modeldetail::mlp2;
  auto F = mlp2(g, b, "enc.sal.l1", X);
  if (cfg.salient_attention) F = offset_attention(g, b, "enc.sal.oa", F);
  const auto f21 = g.max_pool_rows(F);
  auto H = g.concat_cols(F, g.broadcast_row(f21, g.rows(F)));
  H = g.relu(linear(g, b, "enc.sal.l2.l0", H));
  if (cfg.salient_attention) {
    H = external_attention(g, b, "enc.sal.ea0", H, cfg.heads);
    H = external_attention(g, b, "enc.sal.ea1", H, cfg.heads);
  }
  H = linear(g, b, "enc.sal.l2.l1", H);
  const auto f22 = g.max_pool_rows(H);
  const auto f2 = g.concat_cols(f21, f22);
  if (acts) acts->f2 = f2;
  return f2;
}

template <typename S>
typename Graph<S>::Var encode_fwd(Graph<S>& g, ParamBinder<S>& b, const ModelConfig& cfg,
                                  typename Graph<S>::Var X, EncoderVars<S>* acts = nullptr) {
  require(g.rows(X) >= 1, Errc::EmptyInput, "encode: empty input cloud");
  typename Graph<S>::Var f{};
  if (cfg.extensive_branch && cfg.salient_branch) {
    const auto f1 = extensive_branch_fwd(g, b, X, acts);
    const auto f2 = salient_branch_fwd(g, b, cfg, X, acts);
    f = g.concat_cols(f1, f2);
  } else if (cfg.extensive_branch) {
    f = modeldetail::linear(g, b, "enc.proj", extensive_branch_fwd(g, b, X, acts));
  } else {
    f = modeldetail::linear(g, b, "enc.proj", salient_branch_fwd(g, b, cfg, X, acts));
  }
  if (acts) acts->f_coarse = f;
  return f;
}

/// Seven FC layers; the input row re-enters by concatenation at layers 3
/// and 5; the zero-initialized layer 7 output is added to the input.
template <typename S>
typename Graph<S>::Var revise_feature_fwd(Graph<S>& g, ParamBinder<S>& b,
                                          typename Graph<S>::Var f_coarse) {
  using modeldetail::linear;
  const auto h1 = g.relu(linear(g, b, "rf.gen.l1", f_coarse));
  const auto h2 = g.relu(linear(g, b, "rf.gen.l2", h1));
  const auto h3 = g.relu(linear(g, b, "rf.gen.l3", g.concat_cols(h2, f_coarse)));
  const auto h4 = g.relu(linear(g, b, "rf.gen.l4", h3));
  const auto h5 = g.relu(linear(g, b, "rf.gen.l5", g.concat_cols(h4, f_coarse)));
  const auto h6 = g.relu(linear(g, b, "rf.gen.l6", h5));
  return g.add(f_coarse, linear(g, b, "rf.gen.l7", h6));
}

template <typename S>
typename Graph<S>::Var coarse_decode_fwd(Graph<S>& g, ParamBinder<S>& b, const ModelConfig& cfg,
                                         typename Graph<S>::Var f_fine) {
  using modeldetail::linear;
  auto h = g.relu(linear(g, b, "dec.coarse.l0", f_fine));
  h = g.relu(linear(g, b, "dec.coarse.l1", h));
  h = linear(g, b, "dec.coarse.l2", h);
  return g.reshape(h, cfg.n_coarse, 3);
}

template <typename S>
typename Graph<S>::Var revise_points_fwd(Graph<S>& g, ParamBinder<S>& b,
                                         typename Graph<S>::Var y_coarse) {
  using modeldetail::linear;
  auto h = g.relu(linear(g, b, "rp.gen.l0", y_coarse));
  h = g.relu(linear(g, b, "rp.gen.l1", h));
  return g.add(y_coarse, linear(g, b, "rp.gen.l2", h));
}

/// Ball-query groups around each point: up to k nearest members within the
/// radius, self always included, ties to the lower index.
template <typename Scalar>
std::vector<std::vector<Eigen::Index>> ball_groups(const PointMatrix<Scalar>& pts, Scalar radius,
                                                   int k) {
  const KdTree<Scalar> tree(pts);
  std::vector<std::vector<Eigen::Index>> groups(static_cast<size_t>(pts.rows()));
  parallel_for(pts.rows(), [&](std::int64_t i) {
    const auto hits = tree.knn(pts.row(i), std::min<int>(k, static_cast<int>(pts.rows())));
    auto& grp = groups[static_cast<size_t>(i)];
    for (const auto& h : hits)
      if (h.distance <= radius) grp.push_back(h.index);
    if (grp.empty()) grp.push_back(i);  // fallback: the point itself
  });
  return groups;
}

template <typename S>
typename Graph<S>::Var detail_decode_fwd(Graph<S>& g, ParamBinder<S>& b, const ModelConfig& cfg,
                                         typename Graph<S>::Var y_fine,
                                         typename Graph<S>::Var f_fine) {
  using modeldetail::linear;
  const Eigen::Index n = g.rows(y_fine);

  auto fused = y_fine;
  if (cfg.pointnetpp_fusion) {
    // set abstraction: relative coordinates per group, shared MLP, max-pool
    PointMatrix<S> pts(n, 3);
    pts = g.value(y_fine);
    const auto groups = ball_groups<S>(pts, S(cfg.ball_radius), cfg.ball_k);
    std::vector<Eigen::Index> members, centers, offsets{0};
    for (Eigen::Index i = 0; i < n; ++i) {
      for (const Eigen::Index j : groups[static_cast<size_t>(i)]) {
        members.push_back(j);
        centers.push_back(i);
      }
      offsets.push_back(static_cast<Eigen::Index>(members.size()));
    }
    const auto rel = g.sub(g.gather_rows(y_fine, members), g.gather_rows(y_fine, centers));
    const auto local = g.segment_max_rows(modeldetail::mlp2(g, b, "dec.gd.sa", rel), offsets);
    fused = g.concat_cols(fused, local);
  }
  fused = g.concat_cols(fused, g.broadcast_row(f_fine, n));
  auto H = g.relu(linear(g, b, "dec.gd.fuse", fused));
  if (cfg.transformer_fusion) H = external_attention(g, b, "dec.gd.ea", H, cfg.heads);

  // folding: per point, a grid x grid patch of 2-d coordinates
  const Eigen::Index gg = static_cast<Eigen::Index>(cfg.grid) * cfg.grid;
  typename Graph<S>::Mat patch(gg, 2);
  const S half = S(0.05);
  for (int u = 0; u < cfg.grid; ++u)
    for (int v = 0; v < cfg.grid; ++v) {
      const S fu = cfg.grid == 1 ? S(0) : S(-1) + S(2) * S(u) / S(cfg.grid - 1);
      const S fv = cfg.grid == 1 ? S(0) : S(-1) + S(2) * S(v) / S(cfg.grid - 1);
      patch.row(u * cfg.grid + v) << half * fu, half * fv;
    }
  typename Graph<S>::Mat tiled(n * gg, 2);
  for (Eigen::Index i = 0; i < n; ++i) tiled.middleRows(i * gg, gg) = patch;
  const auto grid_var = g.constant(std::move(tiled));

  const auto feats = g.repeat_rows(H, gg);
  const auto seeds = g.repeat_rows(y_fine, gg);
  auto fold = modeldetail::mlp2(g, b, "dec.gd.fold1", g.concat_cols(feats, grid_var));
  fold = modeldetail::mlp2(g, b, "dec.gd.fold2", g.concat_cols(feats, fold));
  return g.add(seeds, fold);
}

template <typename S>
struct ForwardTrace {
  std::unique_ptr<Graph<S>> graph;
  std::unique_ptr<ParamBinder<S>> binder;
  typename Graph<S>::Var x, f_coarse, f_fine, y_coarse, y_fine, y_detail;
  EncoderVars<S> enc;
};

/// Full network: encode, feature revision, coarse decode, point revision,
/// detail decode. The returned trace owns the tape for backward().
template <typename S>
ForwardTrace<S> complete(const PointMatrix<S>& X, const ModelParams<S>& params,
                         const ModelConfig& cfg, bool trainable = true) {
  validate_config(cfg);
  require(X.rows() >= 1, Errc::EmptyInput, "complete: empty input cloud");
  require(X.rows() <= cfg.n_max, Errc::InvalidArgument,
          "complete: input exceeds configured n_max");
  check_finite(X, "complete input");

  ForwardTrace<S> t;
  t.graph = std::make_unique<Graph<S>>();
  t.binder = std::make_unique<ParamBinder<S>>(t.graph.get(), &params, trainable);
  Graph<S>& g = *t.graph;
  ParamBinder<S>& b = *t.binder;

  typename Graph<S>::Mat xm = X;
  t.x = g.constant(std::move(xm));
  t.f_coarse = encode_fwd(g, b, cfg, t.x, &t.enc);
  t.f_fine = cfg.feature_revision ? revise_feature_fwd(g, b, t.f_coarse) : t.f_coarse;
  t.y_coarse = coarse_decode_fwd(g, b, cfg, t.f_fine);
  t.y_fine = cfg.point_revision ? revise_points_fwd(g, b, t.y_coarse) : t.y_coarse;
  t.y_detail = detail_decode_fwd(g, b, cfg, t.y_fine, t.f_fine);
  return t;
}

// ---------------------------------------------------------------------------
// critics

enum class CriticKind { Feature, Point };

/// Feature critic: 4 FC layers with a sigmoid-gated squeeze between layers
/// 2 and 3. Point critic: shared per-point MLP, max-pool, 2 FC layers.
template <typename S>
typename Graph<S>::Var critic_forward(Graph<S>& g, ParamBinder<S>& b, CriticKind kind,
                                      typename Graph<S>::Var input) {
  using modeldetail::linear;
  const S slope = S(0.2);
  if (kind == CriticKind::Feature) {
    require(g.rows(input) == 1, Errc::SizeMismatch, "feature critic expects a single row");
    const auto z1 = g.leaky_relu(linear(g, b, "rf.critic.l1", input), slope);
    const auto z2 = g.leaky_relu(linear(g, b, "rf.critic.l2", z1), slope);
    const auto gate = g.sigmoid(linear(g, b, "rf.critic.se1",
                                       g.relu(linear(g, b, "rf.critic.se0", z2))));
    const auto z2g = g.cmul(z2, gate);
    const auto z3 = g.leaky_relu(linear(g, b, "rf.critic.l3", z2g), slope);
    return linear(g, b, "rf.critic.l4", z3);
  }
  require(g.cols(input) == 3, Errc::SizeMismatch, "point critic expects an n x 3 cloud");
  const auto h1 = g.leaky_relu(linear(g, b, "rp.critic.l0", input), slope);
  const auto h2 = g.leaky_relu(linear(g, b, "rp.critic.l1", h1), slope);
  const auto pooled = g.max_pool_rows(h2);
  const auto z = g.leaky_relu(linear(g, b, "rp.critic.l2", pooled), slope);
  return linear(g, b, "rp.critic.l3", z);
}

/// ||grad_x D(x)||_2 expressed as tape operations, so one backward sweep
/// yields the gradient-penalty's parameter gradients. Activation masks are
/// held constant (they are a.e. locally constant in the parameters); the
/// sigmoid gate's derivative stays a differentiable expression.
template <typename S>
typename Graph<S>::Var critic_grad_norm(Graph<S>& g, ParamBinder<S>& b, CriticKind kind,
                                        const typename Graph<S>::Mat& x_hat) {
  using modeldetail::linear;
  using Mat = typename Graph<S>::Mat;
  const S slope = S(0.2);
  auto lrelu_mask = [&](const Mat& pre) {
    return g.constant(
        (pre.array() > S(0)).select(Mat::Ones(pre.rows(), pre.cols()),
                                    Mat::Constant(pre.rows(), pre.cols(), slope)));
  };
  auto relu_mask = [&](const Mat& pre) {
    return g.constant((pre.array() > S(0)).template cast<S>().matrix());
  };

  const auto x = g.constant(x_hat);
  if (kind == CriticKind::Feature) {
    const auto a1 = linear(g, b, "rf.critic.l1", x);
    const auto m1 = lrelu_mask(g.value(a1));
    const auto z1 = g.leaky_relu(a1, slope);
    const auto a2 = linear(g, b, "rf.critic.l2", z1);
    const auto m2 = lrelu_mask(g.value(a2));
    const auto z2 = g.leaky_relu(a2, slope);
    const auto u = linear(g, b, "rf.critic.se0", z2);
    const auto mu = relu_mask(g.value(u));
    const auto gate = g.sigmoid(linear(g, b, "rf.critic.se1", g.relu(u)));
    const auto z2g = g.cmul(z2, gate);
    const auto a3 = linear(g, b, "rf.critic.l3", z2g);
    const auto m3 = lrelu_mask(g.value(a3));

    const auto g3 = g.transpose(b("rf.critic.l4.w"));                       // 1 x c
    const auto g2g = g.matmul(g.cmul(g3, m3), g.transpose(b("rf.critic.l3.w")));
    const auto direct = g.cmul(g2g, gate);
    const auto dgate = g.cmul(gate, g.add_scalar(g.scale(gate, S(-1)), S(1)));  // sigma'
    const auto via_gate =
        g.matmul(g.cmul(g.matmul(g.cmul(g.cmul(g2g, z2), dgate),
                                 g.transpose(b("rf.critic.se1.w"))),
                        mu),
                 g.transpose(b("rf.critic.se0.w")));
    const auto gz2 = g.add(direct, via_gate);
    const auto g1 = g.matmul(g.cmul(gz2, m2), g.transpose(b("rf.critic.l2.w")));
    const auto gx = g.matmul(g.cmul(g1, m1), g.transpose(b("rf.critic.l1.w")));
    return g.sqrt_shifted(g.sum_all(g.cmul(gx, gx)), S(1e-24));
  }

  const Eigen::Index n = x_hat.rows();
  const auto a1 = linear(g, b, "rp.critic.l0", x);
  const auto m1 = lrelu_mask(g.value(a1));
  const auto z1 = g.leaky_relu(a1, slope);
  const auto a2 = linear(g, b, "rp.critic.l1", z1);
  const auto m2 = lrelu_mask(g.value(a2));
  const auto z2 = g.leaky_relu(a2, slope);
  std::vector<Eigen::Index> arg(static_cast<size_t>(g.cols(z2)));
  for (Eigen::Index j = 0; j < g.cols(z2); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (g.value(z2)(i, j) > g.value(z2)(best, j)) best = i;
    arg[static_cast<size_t>(j)] = best;
  }
  const auto pooled = g.max_pool_rows(z2);
  const auto a3 = linear(g, b, "rp.critic.l2", pooled);
  const auto m3 = lrelu_mask(g.value(a3));

  const auto g3 = g.transpose(b("rp.critic.l3.w"));  // 1 x c
  const auto gpool = g.matmul(g.cmul(g3, m3), g.transpose(b("rp.critic.l2.w")));
  const auto G2 = g.scatter_cols_to_rows(gpool, arg, n);
  const auto G1 = g.matmul(g.cmul(G2, m2), g.transpose(b("rp.critic.l1.w")));
  const auto GX = g.matmul(g.cmul(G1, m1), g.transpose(b("rp.critic.l0.w")));
  return g.sqrt_shifted(g.sum_all(g.cmul(GX, GX)), S(1e-24));
}

}  // namespace fsc
