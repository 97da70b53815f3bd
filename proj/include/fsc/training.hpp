#pragma once

#include <memory>

#include "fsc/checkpoint.hpp"
#include "fsc/geom.hpp"
#include "fsc/metrics.hpp"

namespace fsc {

struct LossConfig {
  double alpha_start = 0.01;
  double alpha_end = 1.0;
  double alpha_ramp = 0.5;  // fraction of total steps over which alpha ramps
  double adv_weight = 0.1;
  double gp_lambda = 10.0;
  int n_critic = 1;
  SinkhornConfig sinkhorn{0.005, 200, 1e-6};  // sharper than the metric default
};

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  std::int64_t total_steps = 1000;
  uint64_t seed = 0;
  std::vector<Eigen::Index> resolutions = {2048, 1024, 512, 256, 128, 64};
  Eigen::Index real_feature_points = 2048;  // GT resample fed to the feature critic
  bool adversarial = true;
};

inline void validate_train_config(const TrainConfig& c) {
  validate_config(c.model);
  require(c.lr > 0 && c.batch_size >= 1 && c.total_steps >= 1, Errc::ConfigError,
          "train config: lr, batch_size, total_steps must be positive");
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.adam_eps > 0,
          Errc::ConfigError, "train config: bad Adam constants");
  require(!c.resolutions.empty(), Errc::ConfigError, "train config: no training resolutions");
  for (Eigen::Index r : c.resolutions)
    require(r >= 1 && r <= c.model.n_max, Errc::ConfigError,
            "train config: resolution outside [1, n_max]");
  require(c.loss.n_critic >= 1, Errc::ConfigError, "train config: n_critic must be >= 1");
  require(c.loss.alpha_ramp > 0 && c.loss.alpha_ramp <= 1, Errc::ConfigError,
          "train config: alpha_ramp must be in (0, 1]");
  require(c.real_feature_points >= 1, Errc::ConfigError,
          "train config: real_feature_points must be positive");
}

/// Chamfer weight schedule: linear from alpha_start to alpha_end over the
/// first alpha_ramp fraction of training, then flat.
inline double alpha_at(const TrainConfig& cfg, std::int64_t step) {
  const double ramp =
      std::max<double>(1.0, cfg.loss.alpha_ramp * static_cast<double>(cfg.total_steps));
  const double t = std::min(1.0, static_cast<double>(step) / ramp);
  return cfg.loss.alpha_start + (cfg.loss.alpha_end - cfg.loss.alpha_start) * t;
}

// ---------------------------------------------------------------------------
// differentiable loss terms

/// Chamfer-L2 as a tape node: nearest neighbors are matched on the forward
/// values and held fixed for the backward pass.
template <typename S>
typename Graph<S>::Var chamfer_l2_node(Graph<S>& g, typename Graph<S>::Var y,
                                       const PointMatrix<S>& gt,
                                       const KdTree<S>* gt_tree_cached = nullptr) {
  using Mat = typename Graph<S>::Mat;
  require(g.cols(y) == 3 && gt.cols() == 3, Errc::SizeMismatch,
          "chamfer node: points must be n x 3");
  require(gt.rows() >= 1 && g.rows(y) >= 1, Errc::EmptyInput, "chamfer node: empty cloud");

  const PointMatrix<S> yv = g.value(y);
  const Eigen::Index n = yv.rows(), m = gt.rows();
  std::unique_ptr<KdTree<S>> local_tree;
  if (!gt_tree_cached) local_tree = std::make_unique<KdTree<S>>(gt);
  const KdTree<S>& gt_tree = gt_tree_cached ? *gt_tree_cached : *local_tree;
  const KdTree<S> y_tree(yv);

  std::vector<Eigen::Index> to_gt(static_cast<size_t>(n)), to_y(static_cast<size_t>(m));
  S fwd = 0, bwd = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto h = gt_tree.knn(yv.row(i), 1)[0];
    to_gt[static_cast<size_t>(i)] = h.index;
    fwd += h.distance * h.distance;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto h = y_tree.knn(gt.row(j), 1)[0];
    to_y[static_cast<size_t>(j)] = h.index;
    bwd += h.distance * h.distance;
  }
  const S value = fwd / static_cast<S>(n) + bwd / static_cast<S>(m);

  return g.custom(y, Mat::Constant(1, 1, value),
                  [yv, gt, to_gt = std::move(to_gt), to_y = std::move(to_y), n,
                   m](const Mat& upstream, Mat& grad_y) {
                    const S up = upstream(0, 0);
                    for (Eigen::Index i = 0; i < n; ++i) {
                      const Eigen::Index j = to_gt[static_cast<size_t>(i)];
                      grad_y.row(i) += up * S(2) / static_cast<S>(n) * (yv.row(i) - gt.row(j));
                    }
                    for (Eigen::Index j = 0; j < m; ++j) {
                      const Eigen::Index i = to_y[static_cast<size_t>(j)];
                      grad_y.row(i) += up * S(2) / static_cast<S>(m) * (yv.row(i) - gt.row(j));
                    }
                  });
}

/// Entropic transport cost as a tape node. The plan is treated as constant
/// for the backward pass, so the gradient is the transport-weighted sum of
/// unit displacement vectors.
template <typename S>
typename Graph<S>::Var sinkhorn_node(Graph<S>& g, typename Graph<S>::Var y,
                                     const PointMatrix<S>& target, const SinkhornConfig& cfg,
                                     bool* converged_out = nullptr) {
  using Mat = typename Graph<S>::Mat;
  require(g.cols(y) == 3 && target.cols() == 3, Errc::SizeMismatch,
          "sinkhorn node: points must be n x 3");
  PointCloud<S> a, b;
  a.points = g.value(y);
  b.points = target;
  const SinkhornResult<S> res = emd_approx(a, b, cfg);
  if (converged_out) *converged_out = res.converged;

  const PointMatrix<S> yv = a.points;
  return g.custom(y, Mat::Constant(1, 1, res.cost),
                  [yv, target, plan = res.plan](const Mat& upstream, Mat& grad_y) {
                    const S up = upstream(0, 0);
                    for (Eigen::Index i = 0; i < yv.rows(); ++i) {
                      Eigen::Matrix<S, 1, 3> acc = Eigen::Matrix<S, 1, 3>::Zero();
                      for (Eigen::Index j = 0; j < target.rows(); ++j) {
                        const Eigen::Matrix<S, 1, 3> d = yv.row(i) - target.row(j);
                        const S dist = d.norm();
                        if (dist > S(1e-12)) acc += plan(i, j) / dist * d;
                      }
                      grad_y.row(i) += up * acc;
                    }
                  });
}

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
struct AdamState {
  using Mat = typename Graph<S>::Mat;
  std::int64_t t = 0;
  std::map<std::string, Mat> m, v;
};

template <typename S>
void adam_step(ModelParams<S>& params, AdamState<S>& st,
               const std::map<std::string, typename Graph<S>::Mat>& grads, double lr,
               double beta1, double beta2, double eps) {
  using Mat = typename Graph<S>::Mat;
  ++st.t;
  const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
  const S c1 = static_cast<S>(1.0 - std::pow(beta1, static_cast<double>(st.t)));
  const S c2 = static_cast<S>(1.0 - std::pow(beta2, static_cast<double>(st.t)));
  const S step_size = static_cast<S>(lr), e = static_cast<S>(eps);
  for (const auto& [name, grad] : grads) {
    auto pit = params.tensors.find(name);
    require(pit != params.tensors.end(), Errc::InvalidArgument,
            "adam_step: unknown tensor " + name);
    Mat& p = pit->second;
    require(p.rows() == grad.rows() && p.cols() == grad.cols(), Errc::SizeMismatch,
            "adam_step: gradient shape mismatch for " + name);
    Mat& m = st.m.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    Mat& v = st.v.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    m = b1 * m + (S(1) - b1) * grad;
    v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
    p.array() -= step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + e);
  }
}

// ---------------------------------------------------------------------------
// train state

template <typename S = float>
struct TrainSample {
  std::string id, category;
  PointCloud<S> gt;
  PointMatrix<S> coarse;                            // FPS subset of gt, model n_coarse
  std::map<Eigen::Index, PointMatrix<S>> partials;  // resolution -> input cloud
  std::shared_ptr<const KdTree<S>> gt_tree;         // optional, reused across steps
};

inline bool is_critic_param(const std::string& name) {
  return name.rfind("rf.critic.", 0) == 0 || name.rfind("rp.critic.", 0) == 0;
}

template <typename S = float>
struct TrainState {
  TrainConfig cfg;
  ModelParams<S> gen, critic;
  AdamState<S> opt_gen, opt_critic;
  Rng rng{0};
  std::int64_t step = 0;
};

template <typename S = float>
TrainState<S> init_train_state(const TrainConfig& cfg) {
  validate_train_config(cfg);
  TrainState<S> st;
  st.cfg = cfg;
  const ModelParams<S> all = init_params<S>(cfg.model, Rng::derive(cfg.seed, {1}));
  for (const auto& [name, t] : all.tensors)
    (is_critic_param(name) ? st.critic : st.gen).tensors.emplace(name, t);
  st.rng = Rng(Rng::derive(cfg.seed, {2}));
  return st;
}

template <typename S>
ModelParams<S> merge_params(const ModelParams<S>& gen, const ModelParams<S>& critic) {
  ModelParams<S> all;
  for (const auto& [n, t] : gen.tensors) all.tensors.emplace(n, t);
  for (const auto& [n, t] : critic.tensors) all.tensors.emplace(n, t);
  return all;
}

template <typename S>
std::pair<ModelParams<S>, ModelParams<S>> split_params(const ModelParams<S>& all) {
  std::pair<ModelParams<S>, ModelParams<S>> out;
  for (const auto& [n, t] : all.tensors)
    (is_critic_param(n) ? out.second : out.first).tensors.emplace(n, t);
  return out;
}

/// Encoder-only forward; the real-feature target for the feature critic.
template <typename S>
typename Graph<S>::Mat encode_feature(const PointMatrix<S>& X, const ModelParams<S>& gen,
                                      const ModelConfig& cfg) {
  Graph<S> g;
  ParamBinder<S> b(&g, &gen, false);
  typename Graph<S>::Mat xm = X;
  const auto f = encode_fwd(g, b, cfg, g.constant(std::move(xm)));
  return g.value(f);
}

// ---------------------------------------------------------------------------
// one optimization step

struct StepStats {
  std::int64_t step = 0;
  Eigen::Index resolution = 0;
  double alpha = 0;
  double d1 = 0;        // coarse transport cost, batch mean
  double d2 = 0;        // dense chamfer, batch mean
  double adv = 0;       // generator adversarial term, batch mean
  double critic_f = 0;  // feature critic loss, batch mean over the last critic pass
  double critic_p = 0;
  double total = 0;
  double cd_l1 = 0;  // CD-L1 of the detail output vs GT, batch mean
  bool sinkhorn_converged = true;
};

namespace traindetail {

template <typename S>
void accumulate(std::map<std::string, typename Graph<S>::Mat>& acc,
                const std::map<std::string, typename Graph<S>::Mat>& grads) {
  for (const auto& [name, gmat] : grads) {
    auto it = acc.find(name);
    if (it == acc.end())
      acc.emplace(name, gmat);
    else
      it->second += gmat;
  }
}

template <typename S>
typename Graph<S>::Var critic_wgan_loss(Graph<S>& g, ParamBinder<S>& b, CriticKind kind,
                                        const typename Graph<S>::Mat& fake,
                                        const typename Graph<S>::Mat& real, S u, S gp_lambda) {
  const auto s_fake = critic_forward(g, b, kind, g.constant(fake));
  const auto s_real = critic_forward(g, b, kind, g.constant(real));
  const typename Graph<S>::Mat x_hat = u * real + (S(1) - u) * fake;
  const auto gn = critic_grad_norm(g, b, kind, x_hat);
  const auto excess = g.add_scalar(gn, S(-1));
  return g.add(g.sub(s_fake, s_real), g.scale(g.cmul(excess, excess), gp_lambda));
}

}  // namespace traindetail

/// One optimizer step at a single resolution: critic passes first (when
/// adversarial terms are active), then the generator pass.
template <typename S>
StepStats train_step(TrainState<S>& state, const std::vector<const TrainSample<S>*>& batch,
                     Eigen::Index resolution) {
  using Mat = typename Graph<S>::Mat;
  validate_train_config(state.cfg);
  require(!batch.empty(), Errc::EmptyInput, "train_step: empty batch");
  const TrainConfig& cfg = state.cfg;
  const ModelConfig& mc = cfg.model;
  const S inv_batch = S(1) / static_cast<S>(batch.size());

  StepStats stats;
  stats.step = state.step;
  stats.resolution = resolution;
  stats.alpha = alpha_at(cfg, state.step);

  std::vector<const PointMatrix<S>*> inputs;
  for (const TrainSample<S>* s : batch) {
    auto it = s->partials.find(resolution);
    require(it != s->partials.end(), Errc::InvalidArgument,
            "train_step: sample '" + s->id + "' lacks resolution " + std::to_string(resolution));
    require(s->coarse.rows() == mc.n_coarse, Errc::SizeMismatch,
            "train_step: coarse target size differs from model n_coarse");
    inputs.push_back(&it->second);
  }

  const bool want_f = cfg.adversarial && mc.feature_revision;
  const bool want_p = cfg.adversarial && mc.point_revision;

  // -- critics ---------------------------------------------------------------
  if (want_f || want_p) {
    for (int iter = 0; iter < cfg.loss.n_critic; ++iter) {
      std::map<std::string, Mat> acc;
      double loss_f = 0, loss_p = 0;
      for (size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainSample<S>& s = *batch[bi];
        const auto trace = complete(*inputs[bi], state.gen, mc, /*trainable=*/false);
        const Mat f_fake = trace.graph->value(trace.f_fine);
        const Mat y_fake = trace.graph->value(trace.y_fine);

        if (want_f) {
          const Eigen::Index take = std::min<Eigen::Index>(cfg.real_feature_points, s.gt.size());
          const PointCloud<S> real_in = subsample_random(s.gt, take, state.rng.u64());
          const Mat f_real = encode_feature(real_in.points, state.gen, mc);
          const S u = static_cast<S>(state.rng.real01());
          Graph<S> g;
          ParamBinder<S> b(&g, &state.critic, true);
          const auto loss = traindetail::critic_wgan_loss(g, b, CriticKind::Feature, f_fake,
                                                          f_real, u, S(cfg.loss.gp_lambda));
          loss_f += static_cast<double>(g.value(loss)(0, 0));
          g.backward(loss, Mat::Constant(1, 1, inv_batch));
          traindetail::accumulate<S>(acc, b.collect_grads());
        }
        if (want_p) {
          const Mat y_real = s.coarse;
          const S u = static_cast<S>(state.rng.real01());
          Graph<S> g;
          ParamBinder<S> b(&g, &state.critic, true);
          const auto loss = traindetail::critic_wgan_loss(g, b, CriticKind::Point, y_fake, y_real,
                                                          u, S(cfg.loss.gp_lambda));
          loss_p += static_cast<double>(g.value(loss)(0, 0));
          g.backward(loss, Mat::Constant(1, 1, inv_batch));
          traindetail::accumulate<S>(acc, b.collect_grads());
        }
      }
      stats.critic_f = loss_f / static_cast<double>(batch.size());
      stats.critic_p = loss_p / static_cast<double>(batch.size());
      if (!std::isfinite(stats.critic_f) || !std::isfinite(stats.critic_p))
        fail(Errc::NonFiniteLoss, "train_step: critic loss is not finite at step " +
                                      std::to_string(state.step));
      adam_step(state.critic, state.opt_critic, acc, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    }
  }

  // -- generator ---------------------------------------------------------------
  {
    std::map<std::string, Mat> acc;
    double d1 = 0, d2 = 0, adv = 0, total = 0;
    for (size_t bi = 0; bi < batch.size(); ++bi) {
      const TrainSample<S>& s = *batch[bi];
      auto trace = complete(*inputs[bi], state.gen, mc, /*trainable=*/true);
      Graph<S>& g = *trace.graph;
      bool converged = true;
      const auto t1 = sinkhorn_node(g, trace.y_coarse, s.coarse, cfg.loss.sinkhorn, &converged);
      if (!converged) stats.sinkhorn_converged = false;
      const auto t2 = chamfer_l2_node(g, trace.y_detail, s.gt.points, s.gt_tree.get());
      auto loss = g.add(t1, g.scale(t2, static_cast<S>(stats.alpha)));
      typename Graph<S>::Var adv_score{};
      bool have_adv = false;
      ParamBinder<S> bc(&g, &state.critic, false);
      if (want_f) {
        adv_score = critic_forward(g, bc, CriticKind::Feature, trace.f_fine);
        have_adv = true;
      }
      if (want_p) {
        const auto sp = critic_forward(g, bc, CriticKind::Point, trace.y_fine);
        adv_score = have_adv ? g.add(adv_score, sp) : sp;
        have_adv = true;
      }
      if (have_adv) {
        loss = g.add(loss, g.scale(adv_score, -static_cast<S>(cfg.loss.adv_weight)));
        adv += static_cast<double>(g.value(adv_score)(0, 0));
      }
      const double lv = static_cast<double>(g.value(loss)(0, 0));
      if (!std::isfinite(lv))
        fail(Errc::NonFiniteLoss,
             "train_step: loss is not finite at step " + std::to_string(state.step) +
                 " on sample '" + s.id + "'");
      {
        PointCloudd pred, gt_d;
        pred.points = g.value(trace.y_detail).template cast<double>();
        gt_d.points = s.gt.points.template cast<double>();
        stats.cd_l1 += chamfer_l1(pred, gt_d);
      }
      d1 += static_cast<double>(g.value(t1)(0, 0));
      d2 += static_cast<double>(g.value(t2)(0, 0));
      total += lv;
      g.backward(loss, Mat::Constant(1, 1, inv_batch));
      traindetail::accumulate<S>(acc, trace.binder->collect_grads());
    }
    const double nb = static_cast<double>(batch.size());
    stats.cd_l1 /= nb;
    stats.d1 = d1 / nb;
    stats.d2 = d2 / nb;
    stats.adv = adv / nb;
    stats.total = total / nb;
    adam_step(state.gen, state.opt_gen, acc, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  }

  ++state.step;
  return stats;
}

/// Draws the step's resolution and batch (with replacement) from the state
/// stream, then runs train_step.
template <typename S>
StepStats train_step_sampled(TrainState<S>& state, const std::vector<TrainSample<S>>& train_set) {
  require(!train_set.empty(), Errc::EmptyInput, "train_step_sampled: empty train set");
  const auto& res = state.cfg.resolutions;
  const Eigen::Index resolution =
      res[static_cast<size_t>(state.rng.below(static_cast<uint64_t>(res.size())))];
  std::vector<const TrainSample<S>*> batch;
  for (int i = 0; i < state.cfg.batch_size; ++i)
    batch.push_back(&train_set[static_cast<size_t>(
        state.rng.below(static_cast<uint64_t>(train_set.size())))]);
  return train_step(state, batch, resolution);
}

// ---------------------------------------------------------------------------
// train-state serialization (exact resume)

namespace traindetail {

inline constexpr char kStateMagic[8] = {'F', 'S', 'C', 'S', 'T', 'A', 'T', '1'};

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = model_config_to_json(c.model);
  j["loss"] = {{"alpha_start", c.loss.alpha_start},
               {"alpha_end", c.loss.alpha_end},
               {"alpha_ramp", c.loss.alpha_ramp},
               {"adv_weight", c.loss.adv_weight},
               {"gp_lambda", c.loss.gp_lambda},
               {"n_critic", c.loss.n_critic},
               {"sinkhorn", {{"epsilon", c.loss.sinkhorn.epsilon},
                             {"max_iterations", c.loss.sinkhorn.max_iterations},
                             {"tolerance", c.loss.sinkhorn.tolerance}}}};
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["batch_size"] = c.batch_size;
  j["total_steps"] = c.total_steps;
  j["seed"] = c.seed;
  j["resolutions"] = c.resolutions;
  j["real_feature_points"] = c.real_feature_points;
  j["adversarial"] = c.adversarial;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model = model_config_from_json(j.at("model"));
  const auto& l = j.at("loss");
  c.loss.alpha_start = l.at("alpha_start");
  c.loss.alpha_end = l.at("alpha_end");
  c.loss.alpha_ramp = l.at("alpha_ramp");
  c.loss.adv_weight = l.at("adv_weight");
  c.loss.gp_lambda = l.at("gp_lambda");
  c.loss.n_critic = l.at("n_critic");
  c.loss.sinkhorn.epsilon = l.at("sinkhorn").at("epsilon");
  c.loss.sinkhorn.max_iterations = l.at("sinkhorn").at("max_iterations");
  c.loss.sinkhorn.tolerance = l.at("sinkhorn").at("tolerance");
  c.lr = j.at("lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.adam_eps = j.at("adam_eps");
  c.batch_size = j.at("batch_size");
  c.total_steps = j.at("total_steps");
  c.seed = j.at("seed");
  c.resolutions = j.at("resolutions").get<std::vector<Eigen::Index>>();
  c.real_feature_points = j.at("real_feature_points");
  c.adversarial = j.at("adversarial");
  validate_train_config(c);
  return c;
}

template <typename S>
void write_adam(std::ostream& os, const AdamState<S>& a) {
  ckpt::write_u64(os, static_cast<uint64_t>(a.t));
  ModelParams<S> m, v;
  m.tensors = a.m;
  v.tensors = a.v;
  ckpt::write_params(os, m);
  ckpt::write_params(os, v);
}

template <typename S>
AdamState<S> read_adam(std::istream& is) {
  AdamState<S> a;
  a.t = static_cast<std::int64_t>(ckpt::read_u64(is, "adam step"));
  a.m = ckpt::read_params<S>(is).tensors;
  a.v = ckpt::read_params<S>(is).tensors;
  return a;
}

}  // namespace traindetail

/// Whole-run snapshot: resuming from it reproduces the uninterrupted run
/// bit for bit (float32 tensors, exact RNG state).
template <typename S>
void save_train_state(const std::string& path, const TrainState<S>& st) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::IoError, "cannot open train state for writing: " + path);
  ckpt::write_bytes(os, traindetail::kStateMagic, 8);
  ckpt::write_u64(os, 1);
  ckpt::write_string(os, traindetail::train_config_to_json(st.cfg).dump());
  ckpt::write_u64(os, static_cast<uint64_t>(st.step));
  ckpt::write_params(os, st.gen);
  ckpt::write_params(os, st.critic);
  traindetail::write_adam(os, st.opt_gen);
  traindetail::write_adam(os, st.opt_critic);
  ckpt::write_string(os, st.rng.save_text());
  if (!os) fail(Errc::IoError, "train state write failed: " + path);
}

template <typename S = float>
TrainState<S> load_train_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::IoError, "cannot open train state: " + path);
  char magic[8];
  ckpt::read_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, traindetail::kStateMagic, 8) != 0)
    fail(Errc::IoError, "not a train state file: " + path);
  if (ckpt::read_u64(is, "version") != 1)
    fail(Errc::IoError, "unsupported train state version in " + path);
  TrainState<S> st;
  try {
    st.cfg = traindetail::train_config_from_json(
        nlohmann::json::parse(ckpt::read_string(is, "config")));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::IoError, std::string("train state config parse error: ") + e.what());
  }
  st.step = static_cast<std::int64_t>(ckpt::read_u64(is, "step"));
  st.gen = ckpt::read_params<S>(is);
  st.critic = ckpt::read_params<S>(is);
  st.opt_gen = traindetail::read_adam<S>(is);
  st.opt_critic = traindetail::read_adam<S>(is);
  st.rng = Rng::load_text(ckpt::read_string(is, "rng"));
  validate_params(merge_params(st.gen, st.critic), st.cfg.model);
  return st;
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalOptions {
  bool with_emd = true;
  bool bypass_gt = false;  // score the ground truth against itself (sanity path)
};

struct EvalRecord {
  std::string id, category;
  Eigen::Index resolution = 0;
  double cd_l1 = 0, cd_l2 = 0, emd = 0;
  bool ok = false;
  std::string error;
};

struct EvalAggregate {
  std::string category;  // empty = all categories
  Eigen::Index resolution = 0;
  Eigen::Index count = 0;
  double cd_l1 = 0, cd_l2 = 0, emd = 0;  // means over ok records
};

struct MetricsReport {
  std::vector<EvalRecord> records;
  std::vector<EvalAggregate> per_category;
  std::vector<EvalAggregate> overall;
  Eigen::Index failures = 0;
};

namespace traindetail {

inline void finalize_report(MetricsReport& rep) {
  std::map<std::pair<std::string, Eigen::Index>, EvalAggregate> by_cat;
  std::map<Eigen::Index, EvalAggregate> all;
  for (const EvalRecord& r : rep.records) {
    if (!r.ok) {
      ++rep.failures;
      continue;
    }
    EvalAggregate& a = by_cat[{r.category, r.resolution}];
    a.category = r.category;
    a.resolution = r.resolution;
    ++a.count;
    a.cd_l1 += r.cd_l1;
    a.cd_l2 += r.cd_l2;
    a.emd += r.emd;
    EvalAggregate& o = all[r.resolution];
    o.resolution = r.resolution;
    ++o.count;
    o.cd_l1 += r.cd_l1;
    o.cd_l2 += r.cd_l2;
    o.emd += r.emd;
  }
  auto mean = [](EvalAggregate a) {
    if (a.count > 0) {
      a.cd_l1 /= static_cast<double>(a.count);
      a.cd_l2 /= static_cast<double>(a.count);
      a.emd /= static_cast<double>(a.count);
    }
    return a;
  };
  for (const auto& [k, a] : by_cat) rep.per_category.push_back(mean(a));
  for (const auto& [k, a] : all) rep.overall.push_back(mean(a));
}

}  // namespace traindetail

/// Runs completion over every (sample, resolution) pair and aggregates
/// chamfer / transport metrics per category and overall. Records individual
/// failures instead of aborting the sweep.
template <typename S>
MetricsReport evaluate(const ModelParams<S>& gen, const ModelConfig& cfg,
                       const std::vector<TrainSample<S>>& samples,
                       const std::vector<Eigen::Index>& resolutions,
                       const EvalOptions& opt = {}) {
  validate_config(cfg);
  require(!samples.empty(), Errc::EmptyInput, "evaluate: no samples");
  require(!resolutions.empty(), Errc::InvalidArgument, "evaluate: no resolutions");

  MetricsReport rep;
  rep.records.resize(samples.size() * resolutions.size());
  parallel_for(static_cast<std::int64_t>(rep.records.size()), [&](std::int64_t k) {
    const TrainSample<S>& s = samples[static_cast<size_t>(k) / resolutions.size()];
    const Eigen::Index resolution = resolutions[static_cast<size_t>(k) % resolutions.size()];
    EvalRecord& r = rep.records[static_cast<size_t>(k)];
    r.id = s.id;
    r.category = s.category;
    r.resolution = resolution;
    try {
      PointCloudd detail_pred, coarse_pred;
      if (opt.bypass_gt) {
        detail_pred = cast_cloud<double>(s.gt);
        coarse_pred.points = s.coarse.template cast<double>();
      } else {
        auto it = s.partials.find(resolution);
        require(it != s.partials.end(), Errc::InvalidArgument,
                "missing partial at resolution " + std::to_string(resolution));
        const auto trace = complete(it->second, gen, cfg, /*trainable=*/false);
        detail_pred.points = trace.graph->value(trace.y_detail).template cast<double>();
        coarse_pred.points = trace.graph->value(trace.y_coarse).template cast<double>();
      }
      const PointCloudd gt = cast_cloud<double>(s.gt);
      PointCloudd coarse_gt;
      coarse_gt.points = s.coarse.template cast<double>();
      r.cd_l1 = chamfer_l1(detail_pred, gt);
      r.cd_l2 = chamfer_l2(detail_pred, gt);
      if (opt.with_emd) r.emd = emd(coarse_pred, coarse_gt).cost;
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  });
  traindetail::finalize_report(rep);
  return rep;
}

}  // namespace fsc
