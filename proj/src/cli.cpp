#include "fsc/cli.hpp"

#include <CLI11.hpp>
#include <cctype>
#include <chrono>
#include <cstring>
#include <iostream>

#include "fsc/datagen.hpp"
#include "fsc/descriptor.hpp"
#include "fsc/report.hpp"

namespace fsc {
namespace {

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::ConfigError:
      return 3;
    case Errc::NonFiniteGradient:
    case Errc::NonFiniteLoss:
    case Errc::NumericError:
      return 4;
    default:
      return 2;
  }
}

void log_line(const std::string& s) { std::cerr << "[fsc] " << s << "\n"; }

void log_config(const nlohmann::ordered_json& j) { std::cerr << "[fsc] config " << j.dump() << "\n"; }

std::vector<Eigen::Index> parse_levels(const std::string& csv) {
  std::vector<Eigen::Index> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) {
        try {
          out.push_back(static_cast<Eigen::Index>(std::stoll(cur)));
        } catch (const std::exception&) {
          fail(Errc::InvalidArgument, "bad level list entry '" + cur + "'");
        }
        cur.clear();
      }
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  require(!out.empty(), Errc::InvalidArgument, "empty level list");
  return out;
}

std::string levels_to_string(const std::vector<Eigen::Index>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// mesh sources

std::vector<MeshEntry> load_meshes_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), Errc::IoError, "mesh directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), Errc::EmptyInput, "no .obj meshes in " + dir);
  std::vector<MeshEntry> out;
  for (const auto& p : files) {
    MeshEntry m;
    m.id = p.stem().string();
    const auto us = m.id.find('_');
    m.category = us == std::string::npos ? "mesh" : m.id.substr(0, us);
    m.mesh = load_obj(p.string());
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MeshEntry> synthesize_meshes(int per_category, uint64_t seed,
                                         const std::string& categories_csv) {
  require(per_category >= 1, Errc::InvalidArgument, "--synthetic must be >= 1");
  std::vector<std::string> cats = primitive_categories();
  if (!categories_csv.empty()) {
    cats.clear();
    std::stringstream ss(categories_csv);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) cats.push_back(tok);
    require(!cats.empty(), Errc::InvalidArgument, "--categories: empty list");
  }
  std::vector<MeshEntry> out;
  for (const std::string& cat : cats) {
    for (int i = 0; i < per_category; ++i) {
      MeshEntry m;
      m.id = cat + "_" + (i < 10 ? "0" : "") + std::to_string(i);
      m.category = cat;
      Rng rng(Rng::derive(seed, {0xC0DE, hash_str(cat), static_cast<uint64_t>(i)}));
      m.mesh = make_primitive(cat, rng);
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<MeshEntry> resolve_meshes(const std::string& dir, int synthetic, uint64_t seed,
                                      const std::string& categories_csv = "") {
  require(dir.empty() != (synthetic == 0), Errc::InvalidArgument,
          "provide exactly one mesh source: --meshes DIR or --synthetic N");
  return dir.empty() ? synthesize_meshes(synthetic, seed, categories_csv) : load_meshes_dir(dir);
}

// ---------------------------------------------------------------------------
// dataset loading for train/eval

std::vector<TrainSample<float>> load_split(const std::string& root, const DatasetManifest& man,
                                           const std::string& split, const ModelConfig& model,
                                           const std::vector<Eigen::Index>& levels,
                                           bool with_trees) {
  const auto refs = man.samples(split);
  require(!refs.empty(), Errc::EmptyInput, "split '" + split + "' has no samples");
  std::vector<TrainSample<float>> out(refs.size());
  parallel_for(static_cast<std::int64_t>(refs.size()), [&](std::int64_t i) {
    const SampleRef& ref = refs[static_cast<size_t>(i)];
    TrainSample<float>& s = out[static_cast<size_t>(i)];
    s.id = ref.id;
    s.category = ref.category;
    s.gt = cast_cloud<float>(load_sample_cloud(root, ref, "gt.ply"));
    s.coarse = farthest_point_sample(s.gt, model.n_coarse, 0).points;
    for (const Eigen::Index r : levels) {
      const auto p = std::filesystem::path(root) / ref.dir / partial_filename(r);
      if (!std::filesystem::exists(p)) continue;  // reported downstream per sample
      s.partials.emplace(r, cast_cloud<float>(read_ply(p.string())).points);
    }
    if (with_trees) s.gt_tree = std::make_shared<KdTree<float>>(s.gt.points);
  });
  return out;
}

// ---------------------------------------------------------------------------
// subcommands

struct GenArgs {
  std::string meshes_dir, out_dir, categories_csv;
  int synthetic = 0;
  bool flat = false;
  DatasetConfig cfg;
  std::string levels_csv, splits_csv;
};

int cmd_gen(GenArgs& a) {
  if (!a.levels_csv.empty()) a.cfg.levels = parse_levels(a.levels_csv);
  if (!a.splits_csv.empty()) {
    std::vector<double> f;
    std::stringstream ss(a.splits_csv);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(std::stod(tok));
    require(f.size() == 3, Errc::InvalidArgument, "--splits expects train,val,test fractions");
    a.cfg.train_frac = f[0];
    a.cfg.val_frac = f[1];
    a.cfg.test_frac = f[2];
  }
  a.cfg.nested = !a.flat;
  std::vector<MeshEntry> meshes =
      resolve_meshes(a.meshes_dir, a.synthetic, a.cfg.seed, a.categories_csv);
  nlohmann::ordered_json j;
  j["command"] = "gen";
  j["meshes"] = a.meshes_dir.empty() ? "synthetic" : a.meshes_dir;
  j["mesh_count"] = meshes.size();
  j["out"] = a.out_dir;
  j["dataset"] = detail::dataset_config_json(a.cfg);
  log_config(j);

  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest man = build_dataset(meshes, a.cfg, a.out_dir);
  log_line("wrote " + std::to_string(man.json.at("samples").size()) + " samples to " + a.out_dir +
           " in " + fmt_fixed(elapsed_ms(t0), 0) + " ms");
  return 0;
}

struct EntropyArgs {
  std::string meshes_dir, out_csv, out_svg;
  int synthetic = 0;
  int trials = 5;
  Eigen::Index points = 16384;
  uint64_t seed = 0;
  std::string sizes_csv = "16384,8192,4096,2048,1024,512,256,128,64";
  EntropyConfig cfg;
};

int cmd_entropy(EntropyArgs& a) {
  require(a.trials >= 1, Errc::InvalidArgument, "--trials must be >= 1");
  const std::vector<Eigen::Index> sizes = parse_levels(a.sizes_csv);
  std::vector<MeshEntry> meshes = resolve_meshes(a.meshes_dir, a.synthetic, a.seed);

  nlohmann::ordered_json j;
  j["command"] = "entropy";
  j["mesh_count"] = meshes.size();
  j["trials"] = a.trials;
  j["points"] = a.points;
  j["sizes"] = sizes;
  j["seed"] = a.seed;
  j["voxel_size"] = a.cfg.voxel_size;
  j["fpfh_radius"] = a.cfg.fpfh_radius;
  j["normals_k"] = a.cfg.normals_k;
  j["bins_per_feature"] = a.cfg.bins_per_feature;
  j["out"] = a.out_csv;
  log_config(j);

  struct Acc {
    std::vector<double> entropy, fraction;
  };
  std::vector<std::vector<RetentionRow>> curves(meshes.size() * static_cast<size_t>(a.trials));
  parallel_for(static_cast<std::int64_t>(curves.size()), [&](std::int64_t k) {
    const size_t mi = static_cast<size_t>(k) / static_cast<size_t>(a.trials);
    const uint64_t trial = static_cast<uint64_t>(k) % static_cast<uint64_t>(a.trials);
    const MeshEntry& me = meshes[mi];
    const PointCloudd cloud = sample_surface(normalize_mesh_unit(me.mesh), a.points,
                                             Rng::derive(a.seed, {hash_str(me.id), 0xC1}));
    curves[static_cast<size_t>(k)] =
        retention_curve(cloud, sizes, Rng::derive(a.seed, {hash_str(me.id), 0x7A, trial}), a.cfg)
            .rows;
  });

  std::map<Eigen::Index, Acc> by_size;
  for (const auto& rows : curves)
    for (const RetentionRow& r : rows) {
      by_size[r.size].entropy.push_back(r.entropy);
      by_size[r.size].fraction.push_back(r.fraction);
    }

  std::string csv = "size,mean_S,mean_fraction,stddev\n";
  ChartSeries series;
  series.name = "mean fraction";
  for (auto it = by_size.rbegin(); it != by_size.rend(); ++it) {
    const auto& acc = it->second;
    const double n = static_cast<double>(acc.fraction.size());
    double ms = 0, mf = 0;
    for (double v : acc.entropy) ms += v;
    for (double v : acc.fraction) mf += v;
    ms /= n;
    mf /= n;
    double var = 0;
    for (double v : acc.fraction) var += (v - mf) * (v - mf);
    const double sd = std::sqrt(var / n);
    csv += std::to_string(it->first) + ',' + fmt_num(ms) + ',' + fmt_num(mf) + ',' + fmt_num(sd) +
           '\n';
    series.points.push_back({static_cast<double>(it->first), mf});
  }
  write_text_file(a.out_csv, csv);
  log_line("wrote " + a.out_csv);
  if (!a.out_svg.empty()) {
    ChartSpec spec;
    spec.title = "Shape entropy retention";
    spec.xlabel = "points";
    spec.ylabel = "entropy fraction";
    spec.log_x = true;
    spec.series = {series};
    write_text_file(a.out_svg, render_line_chart(spec));
    log_line("wrote " + a.out_svg);
  }
  return 0;
}

struct TrainArgs {
  std::string data, preset = "tiny", ckpt_out, log_csv, state_out, resume, levels_csv, svg;
  bool steps_given = false;
  std::int64_t steps = 1000;
  uint64_t seed = 0;
  double lr = 1e-4;
  int batch = 8;
  bool no_adversarial = false;
  double sinkhorn_eps = 0.005;
  int sinkhorn_iters = 200;
  double alpha_ramp = 0.5;
  Eigen::Index real_feature_points = 2048;
};

int cmd_train(TrainArgs& a) {
  const DatasetManifest man = read_manifest(a.data);

  TrainState<float> state;
  if (a.resume.empty()) {
    TrainConfig tc;
    tc.model = model_preset(a.preset);
    tc.lr = a.lr;
    tc.batch_size = a.batch;
    tc.total_steps = a.steps;
    tc.seed = a.seed;
    tc.adversarial = !a.no_adversarial;
    tc.loss.sinkhorn.epsilon = a.sinkhorn_eps;
    tc.loss.sinkhorn.max_iterations = a.sinkhorn_iters;
    tc.loss.alpha_ramp = a.alpha_ramp;
    tc.real_feature_points = a.real_feature_points;
    if (!a.levels_csv.empty()) {
      tc.resolutions = parse_levels(a.levels_csv);
    } else {
      tc.resolutions.clear();
      for (Eigen::Index r : man.levels())
        if (r <= tc.model.n_max) tc.resolutions.push_back(r);
    }
    state = init_train_state(tc);
  } else {
    state = load_train_state(a.resume);
    if (a.steps_given) state.cfg.total_steps = a.steps;  // --steps sets the new horizon
  }
  const TrainConfig& tc = state.cfg;

  nlohmann::ordered_json j = traindetail::train_config_to_json(tc);
  j["command"] = "train";
  j["data"] = a.data;
  j["preset"] = a.resume.empty() ? a.preset : "resumed";
  j["ckpt_out"] = a.ckpt_out;
  j["resume"] = a.resume;
  log_config(j);

  std::vector<TrainSample<float>> samples =
      load_split(a.data, man, "train", tc.model, tc.resolutions, true);
  for (const auto& s : samples)
    for (const Eigen::Index r : tc.resolutions)
      require(s.partials.count(r) != 0, Errc::InvalidArgument,
              "sample '" + s.id + "' lacks partial at resolution " + std::to_string(r));
  log_line("train split: " + std::to_string(samples.size()) + " samples, resolutions " +
           levels_to_string(tc.resolutions));

  std::ofstream log_stream;
  if (!a.log_csv.empty()) {
    const auto parent = std::filesystem::path(a.log_csv).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    log_stream.open(a.log_csv, std::ios::binary);
    if (!log_stream) fail(Errc::IoError, "cannot write " + a.log_csv);
    log_stream
        << "step,resolution,alpha,d1,d2,adv,critic_f,critic_p,total,cd_l1_x1000,sinkhorn_converged,wall_ms\n";
  }

  ChartSeries cd_series{"train CD-L1 x1000", {}};
  const auto t_start = std::chrono::steady_clock::now();
  while (state.step < tc.total_steps) {
    const auto t0 = std::chrono::steady_clock::now();
    const StepStats st = train_step_sampled(state, samples);
    const double wall = elapsed_ms(t0);
    if (log_stream.is_open()) {
      log_stream << st.step << ',' << st.resolution << ',' << fmt_num(st.alpha) << ','
                 << fmt_num(st.d1) << ',' << fmt_num(st.d2) << ',' << fmt_num(st.adv) << ','
                 << fmt_num(st.critic_f) << ',' << fmt_num(st.critic_p) << ','
                 << fmt_num(st.total) << ',' << fmt_num(st.cd_l1 * 1000.0) << ','
                 << (st.sinkhorn_converged ? 1 : 0) << ',' << fmt_fixed(wall, 1) << "\n";
    }
    cd_series.points.push_back({static_cast<double>(st.step), st.cd_l1 * 1000.0});
    if (st.step % 25 == 0 || st.step + 1 == tc.total_steps)
      log_line("step " + std::to_string(st.step) + " res " + std::to_string(st.resolution) +
               " d1 " + fmt_fixed(st.d1, 4) + " d2 " + fmt_fixed(st.d2, 5) + " cd1k " +
               fmt_fixed(st.cd_l1 * 1000.0, 2) + " wall_ms " + fmt_fixed(wall, 0));
  }
  log_line("trained " + std::to_string(state.step) + " steps in " +
           fmt_fixed(elapsed_ms(t_start) / 1000.0, 1) + " s");

  if (!a.ckpt_out.empty()) {
    const auto parent = std::filesystem::path(a.ckpt_out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    save_checkpoint(a.ckpt_out, merge_params(state.gen, state.critic), tc.model);
    log_line("wrote " + a.ckpt_out);
  }
  if (!a.state_out.empty()) {
    save_train_state(a.state_out, state);
    log_line("wrote " + a.state_out);
  }
  if (!a.svg.empty() && !cd_series.points.empty()) {
    ChartSpec spec;
    spec.title = "Training chamfer (first batch sample)";
    spec.xlabel = "step";
    spec.ylabel = "CD-L1 x1000";
    spec.series = {cd_series};
    write_text_file(a.svg, render_line_chart(spec));
    log_line("wrote " + a.svg);
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, split = "test", levels_csv, out = "report", svg;
  bool no_emd = false;
  bool bypass_gt = false;
};

int cmd_eval(EvalArgs& a) {
  const DatasetManifest man = read_manifest(a.data);
  const LoadedCheckpoint<float> ck = load_checkpoint<float>(a.ckpt);
  const ModelParams<float> gen = split_params(ck.params).first;

  std::vector<Eigen::Index> levels;
  if (!a.levels_csv.empty()) {
    levels = parse_levels(a.levels_csv);
  } else {
    for (Eigen::Index r : man.levels())
      if (r <= ck.config.n_max) levels.push_back(r);
  }

  std::string base = a.out;
  for (const char* ext : {".csv", ".json"}) {
    if (base.size() > std::strlen(ext) && base.rfind(ext) == base.size() - std::strlen(ext))
      base = base.substr(0, base.size() - std::strlen(ext));
  }

  nlohmann::ordered_json j;
  j["command"] = "eval";
  j["ckpt"] = a.ckpt;
  j["data"] = a.data;
  j["split"] = a.split;
  j["levels"] = levels;
  j["with_emd"] = !a.no_emd;
  j["bypass_gt"] = a.bypass_gt;
  j["model"] = model_config_to_json(ck.config);
  j["out"] = base;
  log_config(j);

  const std::vector<TrainSample<float>> samples =
      load_split(a.data, man, a.split, ck.config, levels, false);
  EvalOptions opt;
  opt.with_emd = !a.no_emd;
  opt.bypass_gt = a.bypass_gt;
  const auto t0 = std::chrono::steady_clock::now();
  const MetricsReport rep = evaluate(gen, ck.config, samples, levels, opt);
  log_line("evaluated " + std::to_string(rep.records.size()) + " records in " +
           fmt_fixed(elapsed_ms(t0), 0) + " ms, failures " + std::to_string(rep.failures));

  write_text_file(base + ".csv", report_to_csv(rep));
  nlohmann::ordered_json out_json;
  out_json["config"] = j;
  out_json["report"] = report_to_json(rep);
  write_text_file(base + ".json", out_json.dump(2) + "\n");
  log_line("wrote " + base + ".csv and " + base + ".json");

  for (const EvalAggregate& o : rep.overall)
    log_line("overall res " + std::to_string(o.resolution) + ": cd_l1_x1000 " +
             fmt_fixed(o.cd_l1 * 1000.0, 3) + " cd_l2_x1000 " + fmt_fixed(o.cd_l2 * 1000.0, 3) +
             (opt.with_emd ? " emd_x1000 " + fmt_fixed(o.emd * 1000.0, 3) : ""));

  if (!a.svg.empty()) {
    ChartSeries s1{"CD-L1 x1000", {}};
    for (const EvalAggregate& o : rep.overall)
      s1.points.push_back({static_cast<double>(o.resolution), o.cd_l1 * 1000.0});
    std::sort(s1.points.begin(), s1.points.end());
    ChartSpec spec;
    spec.title = "Completion accuracy vs input resolution";
    spec.xlabel = "input points";
    spec.ylabel = "CD-L1 x1000";
    spec.log_x = true;
    spec.series = {s1};
    write_text_file(a.svg, render_line_chart(spec));
    log_line("wrote " + a.svg);
  }
  return 0;
}

struct CompleteArgs {
  std::string ckpt, in, out;
  bool ascii = false;
};

int cmd_complete(CompleteArgs& a) {
  const LoadedCheckpoint<float> ck = load_checkpoint<float>(a.ckpt);
  const ModelParams<float> gen = split_params(ck.params).first;
  const PointCloudd in_cloud = read_ply(a.in);
  require(in_cloud.size() >= 1, Errc::EmptyInput, "input cloud is empty: " + a.in);
  require(in_cloud.size() <= ck.config.n_max, Errc::ConfigError,
          "input has " + std::to_string(in_cloud.size()) + " points but the checkpoint accepts at most " +
              std::to_string(ck.config.n_max));

  nlohmann::ordered_json j;
  j["command"] = "complete";
  j["ckpt"] = a.ckpt;
  j["in"] = a.in;
  j["out"] = a.out;
  j["model"] = model_config_to_json(ck.config);
  log_config(j);

  const auto t0 = std::chrono::steady_clock::now();
  const PointMatrix<float> x = in_cloud.points.cast<float>();
  const auto trace = complete(x, gen, ck.config, /*trainable=*/false);
  const double ms = elapsed_ms(t0);

  PointCloudd out_cloud;
  out_cloud.points = trace.graph->value(trace.y_detail).cast<double>();
  out_cloud.id = in_cloud.id;
  const auto parent = std::filesystem::path(a.out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_ply(a.out, out_cloud, !a.ascii);
  log_line("n_in " + std::to_string(in_cloud.size()) + " m_out " + std::to_string(out_cloud.size()) +
           " inference_ms " + fmt_fixed(ms, 1));
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"few-point shape completion toolkit"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "generate a synthetic completion dataset");
  gen->add_option("--meshes", ga.meshes_dir, "directory of .obj meshes");
  gen->add_option("--synthetic", ga.synthetic, "synthesize N meshes per primitive category");
  gen->add_option("--categories", ga.categories_csv,
                  "categories for --synthetic (default: all primitives)");
  gen->add_option("--out", ga.out_dir, "dataset output directory")->required();
  gen->add_option("--gt-points", ga.cfg.gt_points, "dense ground-truth samples per mesh");
  gen->add_option("--partial", ga.cfg.partial_points, "points in the rendered partial view");
  gen->add_option("--levels", ga.levels_csv, "comma-separated lower resolutions");
  gen->add_option("--coarse", ga.cfg.n_coarse, "farthest-point coarse subset size");
  gen->add_option("--views", ga.cfg.views, "rendered viewpoints per mesh");
  gen->add_option("--seed", ga.cfg.seed, "master seed");
  gen->add_option("--splits", ga.splits_csv, "train,val,test fractions (default 0.8,0.1,0.1)");
  gen->add_flag("--flat", ga.flat, "draw each level from the full partial instead of nesting");

  EntropyArgs ea;
  auto* ent = app.add_subcommand("entropy", "shape-entropy retention curves");
  ent->add_option("--meshes", ea.meshes_dir, "directory of .obj meshes");
  ent->add_option("--synthetic", ea.synthetic, "synthesize N meshes per primitive category");
  ent->add_option("--out", ea.out_csv, "output CSV path")->required();
  ent->add_option("--svg", ea.out_svg, "optional SVG chart path");
  ent->add_option("--trials", ea.trials, "subsampling trials per mesh");
  ent->add_option("--points", ea.points, "surface samples per mesh");
  ent->add_option("--sizes", ea.sizes_csv, "comma-separated subset sizes");
  ent->add_option("--seed", ea.seed, "master seed");
  ent->add_option("--voxel", ea.cfg.voxel_size, "voxel size for downsampling");
  ent->add_option("--radius", ea.cfg.fpfh_radius, "FPFH neighborhood radius");
  ent->add_option("--normals-k", ea.cfg.normals_k, "neighbors for normal estimation");
  ent->add_option("--bins", ea.cfg.bins_per_feature, "histogram bins per FPFH feature");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a completion model");
  tr->add_option("--data", ta.data, "dataset root (from gen)")->required();
  tr->add_option("--preset", ta.preset, "model preset: tiny or paper");
  auto* steps_opt = tr->add_option("--steps", ta.steps, "total optimization steps");
  tr->add_option("--seed", ta.seed, "master seed");
  tr->add_option("--ckpt-out", ta.ckpt_out, "checkpoint output path");
  tr->add_option("--log", ta.log_csv, "per-step CSV log path");
  tr->add_option("--state-out", ta.state_out, "full train-state output path (exact resume)");
  tr->add_option("--resume", ta.resume, "train-state file to resume from");
  tr->add_option("--levels", ta.levels_csv, "training resolutions (default: manifest levels)");
  tr->add_option("--lr", ta.lr, "learning rate");
  tr->add_option("--batch", ta.batch, "batch size");
  tr->add_option("--sinkhorn-eps", ta.sinkhorn_eps, "entropic regularization of the coarse loss");
  tr->add_option("--sinkhorn-iters", ta.sinkhorn_iters, "max scaling iterations");
  tr->add_option("--alpha-ramp", ta.alpha_ramp, "fraction of steps over which the dense loss ramps in");
  tr->add_option("--real-feature-points", ta.real_feature_points,
                 "GT resample size for the feature critic");
  tr->add_flag("--no-adversarial", ta.no_adversarial, "disable both critics");
  tr->add_option("--svg", ta.svg, "optional training-curve SVG path");

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over a dataset split");
  ev->add_option("--ckpt", va.ckpt, "checkpoint path")->required();
  ev->add_option("--data", va.data, "dataset root")->required();
  ev->add_option("--split", va.split, "train, val or test");
  ev->add_option("--levels", va.levels_csv, "input resolutions (default: manifest levels)");
  ev->add_option("--out", va.out, "report base path (writes .csv and .json)");
  ev->add_option("--svg", va.svg, "optional degradation-curve SVG path");
  ev->add_flag("--no-emd", va.no_emd, "skip the coarse transport metric");
  ev->add_flag("--bypass-gt", va.bypass_gt, "score ground truth against itself (harness sanity)");

  CompleteArgs ca;
  auto* co = app.add_subcommand("complete", "complete a single partial cloud");
  co->add_option("--ckpt", ca.ckpt, "checkpoint path")->required();
  co->add_option("--in", ca.in, "input PLY")->required();
  co->add_option("--out", ca.out, "output PLY")->required();
  co->add_flag("--ascii", ca.ascii, "write ASCII PLY output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  ta.steps_given = steps_opt->count() > 0;

  try {
    if (app.got_subcommand(gen)) return cmd_gen(ga);
    if (app.got_subcommand(ent)) return cmd_entropy(ea);
    if (app.got_subcommand(tr)) return cmd_train(ta);
    if (app.got_subcommand(ev)) return cmd_eval(va);
    if (app.got_subcommand(co)) return cmd_complete(ca);
  } catch (const Error& e) {
    std::cerr << "[fsc] error " << errc_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "[fsc] error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace fsc
