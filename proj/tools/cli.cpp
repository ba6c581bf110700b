#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "lfv/config.hpp"
#include "lfv/eval.hpp"
#include "lfv/fit.hpp"
#include "lfv/io.hpp"
#include "lfv/provider.hpp"
#include "lfv/scene.hpp"
#include "lfv/train.hpp"

namespace lfv::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  other failure\n"
    "  2  usage error (unknown flag, bad value, bad config)\n"
    "  3  missing input file or directory\n"
    "  4  depth/flow provider failure\n"
    "  5  optimization diverged (non-finite loss)\n"
    "Environment:\n"
    "  LFV_OUT_DIR  overrides --out\n";

struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError(code, msg); }

void need_path(const std::string& path, const std::string& what) {
  if (path.empty()) fail(kUsage, what + " is required");
  if (!fs::exists(path)) fail(kMissingInput, what + " '" + path + "' does not exist");
}

template <class Fn>
auto via_provider(Fn&& fn) {
  try {
    return fn();
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    fail(kProviderFailure, std::string("provider: ") + e.what());
  }
}

std::string frame_name(const char* stem, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem, t, ext);
  return buf;
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

fs::path ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) fail(kFailure, "cannot create directory '" + p.string() + "'");
  return p;
}

template <class T>
std::string join(const std::vector<T>& xs, const char* sep = ",") {
  std::string s;
  for (const auto& x : xs) {
    if (!s.empty()) s += sep;
    if constexpr (std::is_arithmetic_v<T>)
      s += num(static_cast<double>(x));
    else
      s += x;
  }
  return s;
}

// ---- scene description ---------------------------------------------------------------

struct SceneDescription {
  std::vector<double> disparities;
  std::vector<std::pair<double, double>> velocities;
  int frames = 2;
  int height = 64;
  int width = 64;
  int angular_res = 5;
  std::uint64_t seed = 0;

  SyntheticSceneSpec spec() const {
    return layered_scene(disparities, frames, height, width, AngularGrid(angular_res, angular_res), seed, velocities);
  }
};

void write_scene_description(const SceneDescription& s, const AffineDepthParams& p, const fs::path& path) {
  std::ofstream os(path);
  if (!os) fail(kFailure, "cannot write '" + path.string() + "'");
  std::vector<std::string> vel;
  for (const auto& [vx, vy] : s.velocities) vel.push_back(num(vx) + ":" + num(vy));
  os << "disparities=" << join(s.disparities) << "\n"
     << "velocities=" << join(vel) << "\n"
     << "frames=" << s.frames << "\nheight=" << s.height << "\nwidth=" << s.width << "\n"
     << "angular_res=" << s.angular_res << "\nseed=" << s.seed << "\n"
     << "depth_a=" << num(p.a) << "\ndepth_b=" << num(p.b) << "\n";
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

struct LoadedScene {
  SceneDescription desc;
  AffineDepthParams affine;
  fs::path dir;
};

LoadedScene read_scene(const std::string& dir) {
  need_path(dir, "scene directory");
  const fs::path file = fs::path(dir) / "scene.cfg";
  need_path(file.string(), "scene description");
  std::ifstream is(file);
  LoadedScene out;
  out.dir = dir;
  std::string line;
  try {
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      if (k == "disparities") {
        out.desc.disparities = parse_list(v);
      } else if (k == "velocities") {
        std::stringstream ss(v);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
          const auto colon = cell.find(':');
          out.desc.velocities.emplace_back(std::stod(cell.substr(0, colon)), std::stod(cell.substr(colon + 1)));
        }
      } else if (k == "frames") {
        out.desc.frames = std::stoi(v);
      } else if (k == "height") {
        out.desc.height = std::stoi(v);
      } else if (k == "width") {
        out.desc.width = std::stoi(v);
      } else if (k == "angular_res") {
        out.desc.angular_res = std::stoi(v);
      } else if (k == "seed") {
        out.desc.seed = std::stoull(v);
      } else if (k == "depth_a") {
        out.affine.a = std::stod(v);
      } else if (k == "depth_b") {
        out.affine.b = std::stod(v);
      }
    }
  } catch (const std::logic_error&) {
    fail(kFailure, "malformed scene description '" + file.string() + "'");
  }
  return out;
}

std::shared_ptr<const SceneTruth> regenerate(const LoadedScene& s) {
  return std::make_shared<const SceneTruth>(generate_scene(s.desc.spec()));
}

std::vector<Image> read_frames(const fs::path& dir) {
  need_path(dir.string(), "frame directory");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) fail(kMissingInput, "no PNG frames in '" + dir.string() + "'");
  std::vector<Image> out;
  for (const auto& n : names) out.push_back(read_png(n));
  return out;
}

LightField read_lf(const std::string& path, int angular_res) {
  need_path(path, "light field");
  return fs::is_directory(path) ? load_lf_dir(path) : load_lf_grid(path, angular_res, angular_res);
}

// ---- shared state -----------------------------------------------------------------------

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "lfv_out";
  std::string provider;
  std::string depth_dir, flow_dir;
  double lambda[6] = {0, 0, 0, 0, 0, 0};
  CLI::Option* lambda_opt[6] = {};
  CLI::Option* seed_opt = nullptr;
  CLI::Option* provider_opt = nullptr;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::ostream& log;
  std::ostream& res;
};

std::unique_ptr<Provider> make_provider(const Context& c, const LoadedScene* scene, int frames) {
  if (c.cfg.provider_kind == "oracle") {
    if (!scene) fail(kUsage, "the oracle provider needs --scene");
    return via_provider([&] { return std::unique_ptr<Provider>(new SceneOracleProvider(regenerate(*scene))); });
  }
  need_path(c.cfg.depth_dir, "provider.depth_dir");
  need_path(c.cfg.flow_dir, "provider.flow_dir");
  const AffineDepthParams p = scene ? scene->affine : AffineDepthParams{};
  return std::unique_ptr<Provider>(new FileProvider(c.cfg.depth_dir, c.cfg.flow_dir, frames, p));
}

void save_rows(const Context& c, const std::string& experiment, std::vector<MetricRow> rows) {
  MetricReport rep;
  rep.experiment = experiment;
  rep.rows = std::move(rows);
  emit_report({rep}, c.out.string());
}

// ---- subcommands ------------------------------------------------------------------------

struct GenSceneOpts {
  int k = 0;
  std::vector<double> disparity;
  std::vector<std::string> velocity;
  int frames = 2;
  int height = 64;
  int width = 64;
};

int cmd_gen_scene(const Context& c, const GenSceneOpts& o) {
  SceneDescription d;
  d.disparities = o.disparity;
  const int k = o.k > 0 ? o.k : std::max<int>(1, static_cast<int>(o.disparity.size()));
  if (d.disparities.empty()) {
    for (int i = 0; i < k; ++i) d.disparities.push_back(k == 1 ? 0.0 : -1.0 + 2.0 * i / (k - 1));
  }
  if (static_cast<int>(d.disparities.size()) != k) fail(kUsage, "--k and the number of --disparity values differ");
  if (o.velocity.empty()) {
    for (int i = 0; i < k; ++i) d.velocities.emplace_back(i == 0 ? 0.0 : 1.0, 0.0);
  } else {
    if (static_cast<int>(o.velocity.size()) != k) fail(kUsage, "give one --velocity vx:vy per layer");
    for (const auto& v : o.velocity) {
      const auto colon = v.find(':');
      if (colon == std::string::npos) fail(kUsage, "--velocity expects vx:vy, got '" + v + "'");
      try {
        d.velocities.emplace_back(std::stod(v.substr(0, colon)), std::stod(v.substr(colon + 1)));
      } catch (const std::logic_error&) {
        fail(kUsage, "--velocity expects vx:vy, got '" + v + "'");
      }
    }
  }
  d.frames = o.frames;
  d.height = o.height;
  d.width = o.width;
  d.angular_res = c.cfg.angular_res;
  d.seed = c.cfg.seed;
  SyntheticSceneSpec spec;
  try {
    spec = d.spec();
    spec.validate();
  } catch (const Error& e) {
    fail(kUsage, e.what());
  }
  const auto S = std::make_shared<const SceneTruth>(generate_scene(spec));
  const SceneOracleProvider provider(S);
  const fs::path out = ensure_dir(c.out);
  write_scene_description(d, provider.affine(), out / "scene.cfg");
  const auto frames = ensure_dir(out / "frames"), lfs = ensure_dir(out / "lf"), disp = ensure_dir(out / "disparity");
  for (int t = 0; t < S->frames(); ++t) {
    write_png((frames / frame_name("frame", t, ".png")).string(), S->center[static_cast<std::size_t>(t)]);
    save_lf_grid(S->lf[static_cast<std::size_t>(t)], (lfs / frame_name("lf", t, ".png")).string());
    write_pfm((disp / frame_name("disp", t, ".pfm")).string(), S->disparity[static_cast<std::size_t>(t)].tensor());
  }
  export_provider_files(provider, ensure_dir(out / "depth").string(), ensure_dir(out / "flow").string());
  c.res << "scene " << out.string() << " layers=" << k << " frames=" << S->frames() << "\n";
  return kOk;
}

struct FitOpts {
  std::string scene;
  int frame = 0;
  int iterations = 0;
};

int cmd_fit(const Context& c, const FitOpts& o) {
  const LoadedScene scene = read_scene(o.scene.empty() ? c.out.string() : o.scene);
  const std::vector<Image> video = read_frames(scene.dir / "frames");
  if (o.frame < 0 || o.frame >= static_cast<int>(video.size())) fail(kUsage, "--frame out of range");
  FitConfig fc = c.cfg.fit;
  if (o.iterations > 0) fc.iterations = o.iterations;
  const AngularGrid grid(scene.desc.angular_res, scene.desc.angular_res);
  const auto provider = make_provider(c, &scene, static_cast<int>(video.size()));
  const FitInputs in = via_provider([&] { return make_fit_inputs(*provider, video, o.frame, grid, fc.weights); });
  const FitResult r = direct_fit(in, fc);
  const LightField L = r.synthesize(grid);
  const auto dir = ensure_dir(c.out / "fit");
  const auto lf_path = dir / frame_name("lf", o.frame, ".png");
  save_lf_grid(L, lf_path.string());
  std::ofstream rep(dir / frame_name("fit", o.frame, ".txt"));
  rep << r.report.to_record() << "\nD=" << join(r.D.values) << "\nbest_iteration=" << r.best_iteration << "\n";
  if (c.cfg.provider_kind == "oracle") {
    const auto S = regenerate(scene);
    const auto& gt = S->lf[static_cast<std::size_t>(o.frame)];
    const double p = psnr_masked(L, gt, S->holes[static_cast<std::size_t>(o.frame)], false, kBorderMargin);
    rep << "psnr_visible_db=" << num(p) << "\n";
    c.res << "psnr_visible_db " << num(p) << "\n";
  }
  c.res << "fitted " << lf_path.string() << " D=" << join(r.D.values) << " loss=" << num(r.report.total) << "\n";
  return kOk;
}

struct TrainOpts {
  std::string manifest;
  std::string resume;
  std::string backbone;
};

TrainOptions train_options(const Context& c, const std::string& resume) {
  TrainOptions t;
  t.out_dir = ensure_dir(c.out).string();
  t.resume_from = resume;
  std::ostream* log = &c.log;
  t.log = [log](const std::string& m) { *log << m << "\n"; };
  return t;
}

int cmd_train(const Context& c, const TrainOpts& o) {
  need_path(o.manifest, "--manifest");
  if (!o.resume.empty()) need_path(o.resume, "--resume");
  TrainConfig tc = c.cfg.train;
  tc.phase = TrainPhase::selfsup;
  const auto data = load_sequences(o.manifest, tc);
  const auto r = train_selfsup(data, tc, train_options(c, o.resume));
  c.res << "trained " << r.step_losses.size() << " steps, last val " << num(r.val_losses.empty() ? 0.0 : r.val_losses.back())
        << ", checkpoint " << (c.out / "selfsup_last.ckpt").string() << "\n";
  return kOk;
}

int cmd_train_refine(const Context& c, const TrainOpts& o) {
  need_path(o.manifest, "--manifest");
  need_path(o.backbone, "--backbone");
  if (!o.resume.empty()) need_path(o.resume, "--resume");
  TrainConfig tc = c.cfg.train;
  tc.phase = TrainPhase::refine;
  const Checkpoint backbone = load_checkpoint(o.backbone);
  const auto data = load_refinement_samples(o.manifest, tc);
  const auto r = train_refinement(data, backbone, tc, train_options(c, o.resume));
  c.res << "trained " << r.step_losses.size() << " steps, last val " << num(r.val_losses.empty() ? 0.0 : r.val_losses.back())
        << ", checkpoint " << (c.out / "refine_last.ckpt").string() << "\n";
  return kOk;
}

struct SynthOpts {
  std::string video;
  std::string scene;
  std::string checkpoint;
  double a = 1.2;
  double b = 0.3;
  bool no_refine = false;
};

int cmd_synthesize(const Context& c, const SynthOpts& o) {
  need_path(o.checkpoint, "--checkpoint");
  std::optional<LoadedScene> scene;
  if (!o.scene.empty()) scene = read_scene(o.scene);
  const std::string video_dir = !o.video.empty() ? o.video : scene ? (scene->dir / "frames").string() : std::string();
  if (video_dir.empty()) fail(kUsage, "--video or --scene is required");
  const std::vector<Image> frames = read_frames(video_dir);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const TrainConfig tc = TrainConfig::from_echo(ck.config);
  Backbone net(tc);
  load_backbone(ck, tc, net);
  std::unique_ptr<RefinementBlock> block;
  if (!o.no_refine && ck.find("refine.pos") != nullptr) {
    RefinementConfig rc = tc.refinement;
    rc.angular_res = tc.angular_res;
    block = std::make_unique<RefinementBlock>(rc);
    load_refinement(ck, tc, *block);
  }
  const auto provider = make_provider(c, scene ? &*scene : nullptr, static_cast<int>(frames.size()));
  std::vector<DisparityMap> d;
  for (int t = 0; t < static_cast<int>(frames.size()); ++t)
    d.push_back(via_provider([&] { return depth_to_disparity(provider->depth(t), {o.a, o.b}); }));
  const auto out = synthesize_video(net, block.get(), frames, d, tc.grid());
  const auto dir = ensure_dir(c.out / "synth");
  for (std::size_t t = 0; t < out.size(); ++t)
    save_lf_grid(out[t], (dir / frame_name("lf", static_cast<int>(t), ".png")).string());
  c.res << "synthesized " << out.size() << " light fields into " << dir.string() << (block ? " (refined)" : "") << "\n";
  return kOk;
}

struct EvalOpts {
  std::string pred;
  std::string gt;
  std::string scene;
};

int cmd_eval(const Context& c, const EvalOpts& o) {
  need_path(o.pred, "--pred");
  std::vector<MetricRow> rows;
  if (!o.gt.empty()) {
    const LightField P = read_lf(o.pred, c.cfg.angular_res), G = read_lf(o.gt, c.cfg.angular_res);
    MetricRow r{"eval", fs::path(o.gt).stem().string(), fs::path(o.pred).stem().string()};
    r.psnr_db = psnr(P, G, kBorderMargin);
    r.ssim = ssim(P, G);
    r.seed = c.cfg.seed;
    rows.push_back(r);
  } else {
    const LoadedScene scene = read_scene(o.scene);
    const auto S = regenerate(scene);
    const SceneOracleProvider provider(S);
    const int R = scene.desc.angular_res;
    for (int t = 0; t < S->frames(); ++t) {
      const fs::path p = fs::is_directory(o.pred) ? fs::path(o.pred) / frame_name("lf", t, ".png") : fs::path(o.pred);
      if (!fs::exists(p)) continue;
      const LightField P = load_lf_grid(p.string(), R, R);
      MetricRow r{"eval", scene.dir.filename().string(), p.stem().string()};
      r.psnr_db = psnr(P, S->lf[static_cast<std::size_t>(t)], kBorderMargin);
      r.ssim = ssim(P, S->lf[static_cast<std::size_t>(t)]);
      if (t >= 1) r.e_temp = temporal_stability(P, S->lf[static_cast<std::size_t>(t - 1)], provider, t);
      r.seed = c.cfg.seed;
      rows.push_back(r);
      if (!fs::is_directory(o.pred)) break;
    }
    if (rows.empty()) fail(kMissingInput, "no predictions found under '" + o.pred + "'");
  }
  for (const auto& r : rows)
    c.res << r.variant << " psnr_db=" << num(r.psnr_db) << " ssim=" << num(r.ssim) << " e_temp=" << num(r.e_temp) << "\n";
  save_rows(c, "eval", rows);
  return kOk;
}

struct AblateOpts {
  std::vector<std::string> scenes;
  int frame = 1;
  std::vector<std::uint64_t> seeds;
  bool occ = false;
  bool adaptive = false;
  std::string refine_checkpoint;
  int iterations = 0;
  bool artifacts = false;
};

int cmd_ablate(const Context& c, const AblateOpts& o) {
  if (o.scenes.empty()) fail(kUsage, "at least one --scene is required");
  if (c.cfg.provider_kind != "oracle") fail(kUsage, "ablate compares against ground truth and needs --provider oracle");
  std::vector<AblationScene> scenes;
  for (const auto& s : o.scenes) {
    const LoadedScene ls = read_scene(s);
    scenes.push_back({ls.dir.filename().string(), regenerate(ls), o.frame});
  }
  AblationConfig ac;
  ac.fit = c.cfg.fit;
  if (o.iterations > 0) ac.fit.iterations = o.iterations;
  ac.seeds = o.seeds.empty() ? std::vector<std::uint64_t>{c.cfg.seed} : o.seeds;
  ac.keep_artifacts = o.artifacts;
  AblationToggles tog{o.occ, o.adaptive, !o.refine_checkpoint.empty()};
  if (tog.refine) {
    need_path(o.refine_checkpoint, "--refine-checkpoint");
    const Checkpoint ck = load_checkpoint(o.refine_checkpoint);
    const TrainConfig tc = TrainConfig::from_echo(ck.config);
    RefinementConfig rc = tc.refinement;
    rc.angular_res = tc.angular_res;
    auto block = std::make_shared<RefinementBlock>(rc);
    load_refinement(ck, tc, *block);
    ac.refinement = block;
  }
  const MetricReport rep = run_ablation(scenes, tog, ac);
  emit_report({rep}, ensure_dir(c.out).string());
  for (const auto& r : rep.rows)
    c.res << r.scene << " " << r.variant << " seed=" << r.seed << " psnr_db=" << num(r.psnr_db) << " ssim=" << num(r.ssim)
          << " e_temp=" << num(r.e_temp) << "\n";
  return kOk;
}

struct BaselineOpts {
  std::string scene;
  std::vector<double> scales;
  int frame = 0;
  int iterations = 0;
};

int cmd_baseline(const Context& c, const BaselineOpts& o) {
  const LoadedScene ls = read_scene(o.scene.empty() ? c.out.string() : o.scene);
  const auto S = regenerate(ls);
  FitConfig fc = c.cfg.fit;
  fc.weights.temp = fc.weights.occ = 0.0;
  if (o.iterations > 0) fc.iterations = o.iterations;
  const std::vector<double> scales = o.scales.empty() ? std::vector<double>{1.0, 1.5, 2.0, 2.5} : o.scales;
  const auto pts = variable_baseline_experiment(*S, scales, fc, o.frame);
  const auto path = ensure_dir(c.out) / "baseline.csv";
  std::ofstream os(path);
  os << "scale,slope,ratio\n";
  for (const auto& p : pts) {
    os << num(p.scale) << "," << num(p.slope) << "," << num(p.ratio) << "\n";
    c.res << "scale " << num(p.scale) << " slope " << num(p.slope) << " ratio " << num(p.ratio) << "\n";
  }
  return kOk;
}

struct ViewOpts {
  std::string lf;
  double alpha = 0.0;
  int row = -1;
  std::string axis = "h";
  std::string name;
};

int cmd_refocus(const Context& c, const ViewOpts& o) {
  const LightField L = read_lf(o.lf, c.cfg.angular_res);
  const auto path = ensure_dir(c.out) / (o.name.empty() ? "refocus.png" : o.name);
  write_png(path.string(), refocus(L, o.alpha));
  c.res << "refocused at alpha " << num(o.alpha) << " into " << path.string() << "\n";
  return kOk;
}

int cmd_epi(const Context& c, const ViewOpts& o) {
  const LightField L = read_lf(o.lf, c.cfg.angular_res);
  const EpiAxis axis = o.axis == "v" ? EpiAxis::vertical : EpiAxis::horizontal;
  const int extent = axis == EpiAxis::horizontal ? L.height() : L.width();
  const int index = o.row >= 0 ? o.row : extent / 2;
  if (index >= extent) fail(kUsage, "--row is outside the light field");
  const Image epi = extract_epi(L, axis, index);
  const auto path = ensure_dir(c.out) / (o.name.empty() ? "epi.png" : o.name);
  write_png(path.string(), epi);
  c.res << "epi " << path.string() << " slope " << num(epi_slope(epi)) << "\n";
  return kOk;
}

void add_lambda_flags(CLI::App& app, Globals& g) {
  const char* names[6] = {"--lambda-photo", "--lambda-geo", "--lambda-temp", "--lambda-occ", "--lambda-bins", "--lambda-tv"};
  for (int i = 0; i < 6; ++i) g.lambda_opt[i] = app.add_option(names[i], g.lambda[i], "Override the loss weight");
}

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    need_path(g.config_path, "--config");
    cfg = load_run_config(g.config_path);
  }
  const char* keys[6] = {"lambda_photo", "lambda_geo", "lambda_temp", "lambda_occ", "lambda_bins", "lambda_tv"};
  for (int i = 0; i < 6; ++i)
    if (g.lambda_opt[i]->count() > 0) cfg.set(keys[i], num(g.lambda[i]));
  if (g.seed_opt->count() > 0) cfg.set("seed", std::to_string(g.seed));
  if (g.provider_opt->count() > 0) cfg.set("provider.kind", g.provider);
  if (!g.depth_dir.empty()) cfg.depth_dir = g.depth_dir;
  if (!g.flow_dir.empty()) cfg.flow_dir = g.flow_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"lfv: light field video synthesis from monocular video"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key=value configuration file");
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for every stochastic step");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  g.provider_opt = app.add_option("--provider", g.provider, "Depth/flow provider")->check(CLI::IsMember({"oracle", "files"}));
  app.add_option("--depth-dir", g.depth_dir, "Depth directory for --provider files");
  app.add_option("--flow-dir", g.flow_dir, "Flow directory for --provider files");
  add_lambda_flags(app, g);

  GenSceneOpts gs;
  auto* gen = app.add_subcommand("gen-scene", "Generate a layered synthetic scene with ground truth");
  gen->add_option("--k", gs.k, "Number of layers");
  gen->add_option("--disparity", gs.disparity, "Per-layer disparity, back to front")->delimiter(',');
  gen->add_option("--velocity", gs.velocity, "Per-layer velocity vx:vy")->delimiter(',');
  gen->add_option("--frames", gs.frames, "Number of frames")->capture_default_str();
  gen->add_option("--height", gs.height, "Height")->capture_default_str();
  gen->add_option("--width", gs.width, "Width")->capture_default_str();

  FitOpts fo;
  auto* fit = app.add_subcommand("fit", "Fit tensor-display layers to one frame");
  fit->add_option("--scene", fo.scene, "Scene directory (default: --out)");
  fit->add_option("--frame", fo.frame, "Frame index")->capture_default_str();
  fit->add_option("--iterations", fo.iterations, "Override the iteration budget");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Self-supervised training of the synthesis network");
  train->add_option("--manifest", to.manifest, "Light-field manifest")->required();
  train->add_option("--resume", to.resume, "Checkpoint to resume from");
  auto* refine = app.add_subcommand("train-refine", "Supervised refinement training on a frozen backbone");
  refine->add_option("--manifest", to.manifest, "Light-field manifest")->required();
  refine->add_option("--backbone", to.backbone, "Self-supervised checkpoint")->required();
  refine->add_option("--resume", to.resume, "Checkpoint to resume from");

  SynthOpts so;
  auto* synth = app.add_subcommand("synthesize", "Synthesize a light field per video frame");
  synth->add_option("--video", so.video, "Directory of frame PNGs");
  synth->add_option("--scene", so.scene, "Scene directory (frames and oracle provider)");
  synth->add_option("--checkpoint", so.checkpoint, "Trained checkpoint")->required();
  synth->add_option("--a", so.a, "Depth-to-disparity scale")->capture_default_str();
  synth->add_option("--b", so.b, "Depth-to-disparity offset")->capture_default_str();
  synth->add_flag("--no-refine", so.no_refine, "Skip the refinement block");

  EvalOpts eo;
  auto* eval = app.add_subcommand("eval", "PSNR, SSIM and temporal stability of predictions");
  eval->add_option("--pred", eo.pred, "Predicted light field (PNG grid or directory)")->required();
  auto* gt_opt = eval->add_option("--gt", eo.gt, "Ground-truth light field");
  eval->add_option("--scene", eo.scene, "Scene directory for ground truth")->excludes(gt_opt);

  AblateOpts ao;
  auto* abl = app.add_subcommand("ablate", "Base / +occ / +adpt / Proposed ablation");
  abl->add_option("--scene", ao.scenes, "Scene directory (repeatable)");
  abl->add_option("--frame", ao.frame, "Fitted frame")->capture_default_str();
  abl->add_option("--seeds", ao.seeds, "Seeds")->delimiter(',');
  abl->add_flag("--occ", ao.occ, "Add the disocclusion term");
  abl->add_flag("--adaptive", ao.adaptive, "Learn the displacements");
  abl->add_option("--refine-checkpoint", ao.refine_checkpoint, "Refinement checkpoint for the refine row");
  abl->add_option("--iterations", ao.iterations, "Override the iteration budget");
  abl->add_flag("--artifacts", ao.artifacts, "Write EPI, refocus and histogram images");

  BaselineOpts bo;
  auto* base = app.add_subcommand("baseline-sweep", "EPI slope against disparity scale");
  base->add_option("--scene", bo.scene, "Scene directory (default: --out)");
  base->add_option("--scale", bo.scales, "Disparity scales")->delimiter(',');
  base->add_option("--frame", bo.frame, "Frame index")->capture_default_str();
  base->add_option("--iterations", bo.iterations, "Override the iteration budget");

  ViewOpts vo;
  auto* rf = app.add_subcommand("refocus", "Shift-and-add refocus");
  rf->add_option("--lf", vo.lf, "Light field (PNG grid or directory)")->required();
  rf->add_option("--alpha", vo.alpha, "Focus disparity")->capture_default_str();
  rf->add_option("--name", vo.name, "Output file name");
  auto* ep = app.add_subcommand("epi", "Epipolar-plane image and its slope");
  ep->add_option("--lf", vo.lf, "Light field (PNG grid or directory)")->required();
  ep->add_option("--row", vo.row, "Row (or column) index; default center");
  ep->add_option("--axis", vo.axis, "h or v")->check(CLI::IsMember({"h", "v"}));
  ep->add_option("--name", vo.name, "Output file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg;
    try {
      cfg = resolve_config(g);
    } catch (const ConfigError& e) {
      fail(kUsage, e.what());
    }
    const char* env = std::getenv("LFV_OUT_DIR");
    Context c{std::move(cfg), fs::path(env && *env ? env : g.out), err, out};
    const std::string sub = app.get_subcommands().front()->get_name();
    err << "lfv " << sub << " resolved config:\n";
    for (const auto& [k, v] : c.cfg.resolved()) err << "  " << k << "=" << v << "\n";
    err << "  out=" << c.out.string() << "\n";

    if (sub == "gen-scene") return cmd_gen_scene(c, gs);
    if (sub == "fit") return cmd_fit(c, fo);
    if (sub == "train") return cmd_train(c, to);
    if (sub == "train-refine") return cmd_train_refine(c, to);
    if (sub == "synthesize") return cmd_synthesize(c, so);
    if (sub == "eval") {
      if (eo.gt.empty() && eo.scene.empty()) fail(kUsage, "eval needs --gt or --scene");
      return cmd_eval(c, eo);
    }
    if (sub == "ablate") return cmd_ablate(c, ao);
    if (sub == "baseline-sweep") return cmd_baseline(c, bo);
    if (sub == "refocus") return cmd_refocus(c, vo);
    if (sub == "epi") return cmd_epi(c, vo);
    fail(kUsage, "unknown subcommand " + sub);
  } catch (const CliError& e) {
    err << "lfv: " << e.what() << "\n";
    return e.code;
  } catch (const DivergenceError& e) {
    err << "lfv: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "lfv: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace lfv::cli
