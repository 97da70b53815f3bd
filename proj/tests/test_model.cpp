#include <doctest.h>

#include <set>

#include "fsc/model.hpp"
#include "gradcheck.hpp"

using fsc::complete;
using fsc::critic_forward;
using fsc::critic_grad_norm;
using fsc::CriticKind;
using fsc::encode_fwd;
using fsc::Error;
using fsc::Graph;
using fsc::init_params;
using fsc::model_preset;
using fsc::ModelConfig;
using fsc::ModelParams;
using fsc::param_specs;
using fsc::ParamBinder;
using fsc::PointMatrix;
using fsc::Rng;
using fsc::validate_params;
using fsctest::GVar;
using fsctest::Mat;
using fsctest::random_mat;

namespace {

// Small enough for finite differences, every module still on.
ModelConfig probe_config() {
  ModelConfig c;
  c.n_max = 64;
  c.n_coarse = 4;
  c.grid = 2;
  c.d1 = 8;
  c.d2 = 8;
  c.heads = 2;
  c.memory_slots = 4;
  c.ball_k = 4;
  c.sa_width = 8;
  c.fuse_width = 8;
  c.fold_hidden = 8;
  c.rp_hidden = 8;
  c.critic_width = 8;
  return c;
}

PointMatrix<double> random_cloud(Eigen::Index n, uint64_t seed) {
  Rng rng(seed);
  PointMatrix<double> x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal() * 0.4;
  return x;
}

/// Moves every tensor off its initialization manifold (zero heads included)
/// so gradient checks run at a general-position point.
ModelParams<double> jittered_params(const ModelConfig& cfg, uint64_t seed) {
  auto p = init_params<double>(cfg, seed);
  for (auto& [name, m] : p.tensors) {
    Rng rng(Rng::derive(seed, {fsc::hash_str(name), 17}));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += 0.05 * rng.normal();
  }
  return p;
}

/// Central-difference check of d(sum(out .* W))/d(theta) for a forward pass
/// expressed over bound parameter tensors.
double composed_fd_max_rel(
    const ModelParams<double>& params,
    const std::function<GVar(Graph<double>&, ParamBinder<double>&)>& fwd, int probes,
    uint64_t seed, double step = 1e-4) {
  Rng rng(seed);

  Graph<double> g;
  ParamBinder<double> b(&g, &params, true);
  const GVar out = fwd(g, b);
  Mat w(g.rows(out), g.cols(out));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = (0.5 + rng.real01()) * (rng.real01() < 0.5 ? -1.0 : 1.0);
  g.backward(out, w);
  const auto analytic = b.collect_grads();

  std::vector<std::string> names;
  for (const auto& [name, grad] : analytic) names.push_back(name);

  const auto loss_at = [&](const ModelParams<double>& p) {
    Graph<double> g2;
    ParamBinder<double> b2(&g2, &p, false);
    const GVar o = fwd(g2, b2);
    return (g2.value(o).array() * w.array()).sum();
  };

  double max_rel = 0.0;
  for (int k = 0; k < probes; ++k) {
    const std::string& name = names[static_cast<size_t>(rng.below(names.size()))];
    const Mat& t = params.at(name);
    const Eigen::Index r = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(t.rows())));
    const Eigen::Index c = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(t.cols())));

    ModelParams<double> plus = params, minus = params;
    plus.tensors.at(name)(r, c) += step;
    minus.tensors.at(name)(r, c) -= step;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * step);
    const double an = analytic.at(name)(r, c);
    max_rel = std::max(max_rel, std::abs(fd - an) / std::max({1e-2, std::abs(fd), std::abs(an)}));
  }
  return max_rel;
}

}  // namespace

TEST_CASE("presets and config validation") {
  const auto tiny = model_preset("tiny");
  CHECK(tiny.d1 == 64);
  CHECK(tiny.n_coarse == 64);
  CHECK(tiny.grid == 2);
  CHECK(tiny.m_detail() == 256);
  CHECK(tiny.feature_width() == 128);

  const auto paper = model_preset("paper");
  CHECK(paper.d1 == 512);
  CHECK(paper.n_coarse == 512);
  CHECK(paper.m_detail() == 2048);
  CHECK(paper.feature_width() == 1024);

  CHECK_THROWS_AS(model_preset("huge"), Error);

  ModelConfig bad = probe_config();
  bad.extensive_branch = bad.salient_branch = false;
  CHECK_THROWS_AS(fsc::validate_config(bad), Error);
  bad = probe_config();
  bad.d1 = 7;  // odd width cannot split into two pooled halves
  CHECK_THROWS_AS(fsc::validate_config(bad), Error);
  bad = probe_config();
  bad.heads = 3;  // does not divide fuse width
  CHECK_THROWS_AS(fsc::validate_config(bad), Error);
}

TEST_CASE("census shapes match initialized tensors and zero heads are zero") {
  const auto cfg = model_preset("tiny");
  const auto params = init_params<double>(cfg, 7);
  validate_params(params, cfg);

  for (const char* head : {"rf.gen.l7", "rp.gen.l2", "dec.gd.fold2.l1"}) {
    CAPTURE(head);
    CHECK(params.at(std::string(head) + ".w").cwiseAbs().maxCoeff() == 0.0);
    CHECK(params.at(std::string(head) + ".b").cwiseAbs().maxCoeff() == 0.0);
  }

  // name-derived streams: same seed reproduces, another seed differs
  const auto again = init_params<double>(cfg, 7);
  const auto other = init_params<double>(cfg, 8);
  for (const auto& [name, m] : params.tensors) {
    CHECK(m == again.at(name));
    if (m.cwiseAbs().maxCoeff() > 0.0) CHECK(m != other.at(name));
  }
}

TEST_CASE("census follows the ablation switches") {
  const auto names_of = [](const ModelConfig& c) {
    std::set<std::string> s;
    for (const auto& spec : param_specs(c)) s.insert(spec.name);
    return s;
  };
  const auto base = names_of(probe_config());
  CHECK(base.count("enc.ext.l1.l0.w") == 1);
  CHECK(base.count("enc.sal.oa.wq") == 1);
  CHECK(base.count("enc.proj.w") == 0);  // both branches: concatenation, no projection
  CHECK(base.count("rf.gen.l7.w") == 1);
  CHECK(base.count("rp.critic.l0.w") == 1);
  CHECK(base.count("dec.gd.sa.l0.w") == 1);
  CHECK(base.count("dec.gd.ea.h0.mk") == 1);

  ModelConfig c = probe_config();
  c.salient_branch = false;
  const auto ext_only = names_of(c);
  CHECK(ext_only.count("enc.sal.l1.l0.w") == 0);
  CHECK(ext_only.count("enc.proj.w") == 1);

  c = probe_config();
  c.salient_attention = false;
  CHECK(names_of(c).count("enc.sal.oa.wq") == 0);
  CHECK(names_of(c).count("enc.sal.ea0.h0.mk") == 0);

  c = probe_config();
  c.feature_revision = false;
  CHECK(names_of(c).count("rf.gen.l1.w") == 0);
  CHECK(names_of(c).count("rf.critic.l1.w") == 0);

  c = probe_config();
  c.point_revision = false;
  CHECK(names_of(c).count("rp.gen.l0.w") == 0);
  CHECK(names_of(c).count("rp.critic.l0.w") == 0);

  c = probe_config();
  c.pointnetpp_fusion = false;
  CHECK(names_of(c).count("dec.gd.sa.l0.w") == 0);

  c = probe_config();
  c.transformer_fusion = false;
  CHECK(names_of(c).count("dec.gd.ea.h0.mk") == 0);
}

TEST_CASE("params validation catches mismatches") {
  const auto cfg = probe_config();
  auto params = init_params<double>(cfg, 3);

  auto missing = params;
  missing.tensors.erase("dec.coarse.l0.w");
  CHECK_THROWS_AS(validate_params(missing, cfg), Error);

  auto misshaped = params;
  misshaped.tensors.at("dec.coarse.l0.w").resize(2, 2);
  CHECK_THROWS_AS(validate_params(misshaped, cfg), Error);

  auto poisoned = params;
  poisoned.tensors.at("dec.coarse.l0.w")(0, 0) = std::nan("");
  CHECK_THROWS_AS(validate_params(poisoned, cfg), Error);

  CHECK_THROWS_AS(params.at("no.such.tensor"), Error);
}

TEST_CASE("complete produces the contracted shapes") {
  const auto cfg = model_preset("tiny");
  const auto params = init_params<double>(cfg, 11);
  const auto X = random_cloud(64, 21);
  auto t = complete<double>(X, params, cfg);
  auto& g = *t.graph;

  CHECK(g.rows(t.f_coarse) == 1);
  CHECK(g.cols(t.f_coarse) == cfg.feature_width());
  CHECK(g.rows(t.y_coarse) == cfg.n_coarse);
  CHECK(g.cols(t.y_coarse) == 3);
  CHECK(g.rows(t.y_fine) == cfg.n_coarse);
  CHECK(g.rows(t.y_detail) == cfg.m_detail());
  CHECK(g.cols(t.y_detail) == 3);
  CHECK(g.value(t.y_detail).allFinite());
  CHECK(t.enc.F11.valid());
  CHECK(t.enc.f2.valid());
}

TEST_CASE("complete rejects bad inputs") {
  const auto cfg = probe_config();
  const auto params = init_params<double>(cfg, 1);
  CHECK_THROWS_AS(complete<double>(PointMatrix<double>(0, 3), params, cfg), Error);
  CHECK_THROWS_AS(complete<double>(random_cloud(cfg.n_max + 1, 2), params, cfg), Error);
  auto bad = random_cloud(8, 3);
  bad(4, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(complete<double>(bad, params, cfg), Error);
}

TEST_CASE("every ablation topology runs end to end") {
  const char* flags[] = {"extensive_branch", "salient_branch",  "salient_attention",
                         "feature_revision", "point_revision",  "pointnetpp_fusion",
                         "transformer_fusion"};
  for (const char* flag : flags) {
    CAPTURE(flag);
    ModelConfig c = probe_config();
    const std::string f(flag);
    if (f == "extensive_branch") c.extensive_branch = false;
    if (f == "salient_branch") c.salient_branch = false;
    if (f == "salient_attention") c.salient_attention = false;
    if (f == "feature_revision") c.feature_revision = false;
    if (f == "point_revision") c.point_revision = false;
    if (f == "pointnetpp_fusion") c.pointnetpp_fusion = false;
    if (f == "transformer_fusion") c.transformer_fusion = false;

    const auto params = init_params<double>(c, 5);
    auto t = complete<double>(random_cloud(16, 6), params, c);
    CHECK(t.graph->rows(t.y_detail) == c.m_detail());
    CHECK(t.graph->value(t.y_detail).allFinite());
    CHECK(t.graph->cols(t.f_coarse) == c.feature_width());
  }
}

TEST_CASE("encoder output ignores point order") {
  const auto cfg = model_preset("tiny");
  const auto params = init_params<double>(cfg, 13);
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const auto X = random_cloud(48, 1000 + static_cast<uint64_t>(trial));
    Graph<double> g;
    ParamBinder<double> b(&g, &params, false);
    const Mat f = g.value(encode_fwd(g, b, cfg, g.constant(X)));

    for (int p = 0; p < 3; ++p) {
      PointMatrix<double> perm = X;
      for (Eigen::Index i = X.rows(); i > 1; --i)
        perm.row(i - 1).swap(perm.row(static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(i)))));
      Graph<double> g2;
      ParamBinder<double> b2(&g2, &params, false);
      const Mat f2 = g2.value(encode_fwd(g2, b2, cfg, g2.constant(perm)));
      CHECK((f - f2).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("zero-initialized heads give exact identities at init") {
  auto cfg = probe_config();
  cfg.grid = 1;  // folding adds nothing, detail must equal fine verbatim
  const auto params = init_params<double>(cfg, 17);
  auto t = complete<double>(random_cloud(12, 18), params, cfg);
  auto& g = *t.graph;

  CHECK(g.value(t.f_fine) == g.value(t.f_coarse));
  CHECK(g.value(t.y_fine) == g.value(t.y_coarse));
  CHECK(g.value(t.y_detail) == g.value(t.y_fine));
}

TEST_CASE("at init the folding seeds repeat each fine point per patch cell") {
  const auto cfg = probe_config();  // grid = 2
  const auto params = init_params<double>(cfg, 19);
  auto t = complete<double>(random_cloud(12, 20), params, cfg);
  auto& g = *t.graph;
  const Mat fine = g.value(t.y_fine);
  const Mat detail = g.value(t.y_detail);
  const Eigen::Index gg = cfg.grid * cfg.grid;
  REQUIRE(detail.rows() == fine.rows() * gg);
  for (Eigen::Index i = 0; i < fine.rows(); ++i)
    for (Eigen::Index k = 0; k < gg; ++k) CHECK(detail.row(i * gg + k) == fine.row(i));
}

TEST_CASE("ball groups match a brute-force oracle") {
  const auto pts = random_cloud(40, 23);
  const double radius = 0.3;
  const int k = 6;
  const auto groups = fsc::ball_groups<double>(pts, radius, k);
  REQUIRE(groups.size() == 40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    CAPTURE(i);
    // oracle: the k nearest (ties to lower index), truncated at the radius
    std::vector<std::pair<double, Eigen::Index>> order;
    for (Eigen::Index j = 0; j < 40; ++j)
      order.emplace_back((pts.row(i) - pts.row(j)).norm(), j);
    std::sort(order.begin(), order.end());
    std::vector<Eigen::Index> want;
    for (int t = 0; t < k; ++t)
      if (order[static_cast<size_t>(t)].first <= radius) want.push_back(order[static_cast<size_t>(t)].second);
    if (want.empty()) want.push_back(i);
    CHECK(groups[static_cast<size_t>(i)] == want);
    CHECK(std::count(groups[static_cast<size_t>(i)].begin(), groups[static_cast<size_t>(i)].end(), i) == 1);
  }
}

TEST_CASE("critic forward enforces input contracts") {
  const auto cfg = probe_config();
  const auto params = init_params<double>(cfg, 29);
  Graph<double> g;
  ParamBinder<double> b(&g, &params, false);
  CHECK_THROWS_AS(critic_forward(g, b, CriticKind::Feature, g.constant(Mat::Ones(2, cfg.feature_width()))),
                  Error);
  CHECK_THROWS_AS(critic_forward(g, b, CriticKind::Point, g.constant(Mat::Ones(5, 4))), Error);

  Rng rng(1);
  Graph<double> g2;
  ParamBinder<double> b2(&g2, &params, false);
  const auto s = critic_forward(g2, b2, CriticKind::Feature,
                                g2.constant(random_mat(1, cfg.feature_width(), rng)));
  CHECK(g2.rows(s) == 1);
  CHECK(g2.cols(s) == 1);
}

TEST_CASE("critic gradient-norm expression equals the tape's input gradient") {
  const auto cfg = probe_config();
  const auto params = jittered_params(cfg, 31);
  Rng rng(37);

  for (int trial = 0; trial < 8; ++trial) {
    CAPTURE(trial);
    const Mat xf = random_mat(1, cfg.feature_width(), rng);
    Graph<double> ga;
    ParamBinder<double> ba(&ga, &params, false);
    const auto xa = ga.param(xf);
    ga.backward_scalar(critic_forward(ga, ba, CriticKind::Feature, xa));
    const double direct = ga.grad(xa).norm();

    Graph<double> gb;
    ParamBinder<double> bb(&gb, &params, false);
    const double expr = gb.value(critic_grad_norm(gb, bb, CriticKind::Feature, xf))(0, 0);
    CHECK(expr == doctest::Approx(direct).epsilon(1e-10));
  }

  for (int trial = 0; trial < 8; ++trial) {
    CAPTURE(trial);
    const Mat xp = random_mat(10, 3, rng);
    Graph<double> ga;
    ParamBinder<double> ba(&ga, &params, false);
    const auto xa = ga.param(xp);
    ga.backward_scalar(critic_forward(ga, ba, CriticKind::Point, xa));
    const double direct = ga.grad(xa).norm();

    Graph<double> gb;
    ParamBinder<double> bb(&gb, &params, false);
    const double expr = gb.value(critic_grad_norm(gb, bb, CriticKind::Point, xp))(0, 0);
    CHECK(expr == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("finite differences agree on the composed passes") {
  const auto cfg = probe_config();
  const auto params = jittered_params(cfg, 41);
  const auto X = random_cloud(6, 43);

  SUBCASE("encoder") {
    const double rel = composed_fd_max_rel(
        params,
        [&](Graph<double>& g, ParamBinder<double>& b) { return encode_fwd(g, b, cfg, g.constant(X)); },
        24, 101);
    CHECK(rel < 1e-3);
  }

  SUBCASE("full completion network") {
    Rng rng(103);
    Graph<double> g0;
    ParamBinder<double> b0(&g0, &params, true);

    auto t = complete<double>(X, params, cfg, true);
    Mat w(t.graph->rows(t.y_detail), 3);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < 3; ++j)
        w(i, j) = (0.5 + rng.real01()) * (rng.real01() < 0.5 ? -1.0 : 1.0);
    t.graph->backward(t.y_detail, w);
    const auto analytic = t.binder->collect_grads();

    std::vector<std::string> names;
    for (const auto& [name, grad] : analytic) names.push_back(name);
    const auto loss_at = [&](const ModelParams<double>& p) {
      auto t2 = complete<double>(X, p, cfg, false);
      return (t2.graph->value(t2.y_detail).array() * w.array()).sum();
    };

    double max_rel = 0.0;
    const double h = 1e-4;
    for (int k = 0; k < 24; ++k) {
      const std::string& name = names[static_cast<size_t>(rng.below(names.size()))];
      const Mat& tens = params.at(name);
      const Eigen::Index r = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(tens.rows())));
      const Eigen::Index c = static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(tens.cols())));
      ModelParams<double> plus = params, minus = params;
      plus.tensors.at(name)(r, c) += h;
      minus.tensors.at(name)(r, c) -= h;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
      const double an = analytic.at(name)(r, c);
      max_rel = std::max(max_rel, std::abs(fd - an) / std::max({1e-2, std::abs(fd), std::abs(an)}));
    }
    CHECK(max_rel < 1e-3);
  }

  SUBCASE("feature critic") {
    Rng rng(107);
    const Mat xf = random_mat(1, cfg.feature_width(), rng);
    const double rel = composed_fd_max_rel(
        params,
        [&](Graph<double>& g, ParamBinder<double>& b) {
          return critic_forward(g, b, CriticKind::Feature, g.constant(xf));
        },
        24, 109);
    CHECK(rel < 1e-3);
  }

  SUBCASE("point critic") {
    Rng rng(113);
    const Mat xp = random_mat(12, 3, rng);
    const double rel = composed_fd_max_rel(
        params,
        [&](Graph<double>& g, ParamBinder<double>& b) {
          return critic_forward(g, b, CriticKind::Point, g.constant(xp));
        },
        24, 127);
    CHECK(rel < 1e-3);
  }

  SUBCASE("critic gradient-norm expressions") {
    Rng rng(131);
    const Mat xf = random_mat(1, cfg.feature_width(), rng);
    const Mat xp = random_mat(9, 3, rng);
    const double rel_f = composed_fd_max_rel(
        params,
        [&](Graph<double>& g, ParamBinder<double>& b) {
          return critic_grad_norm(g, b, CriticKind::Feature, xf);
        },
        24, 137);
    CHECK(rel_f < 1e-3);
    const double rel_p = composed_fd_max_rel(
        params,
        [&](Graph<double>& g, ParamBinder<double>& b) {
          return critic_grad_norm(g, b, CriticKind::Point, xp);
        },
        24, 139);
    CHECK(rel_p < 1e-3);
  }
}

TEST_CASE("float instantiation stays finite") {
  const auto cfg = probe_config();
  const auto params = init_params<float>(cfg, 47);
  Eigen::Matrix<float, Eigen::Dynamic, 3> x = random_cloud(10, 48).cast<float>();
  auto t = complete<float>(x, params, cfg);
  CHECK(t.graph->value(t.y_detail).allFinite());
}
