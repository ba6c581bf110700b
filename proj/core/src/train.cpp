#include "lfv/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <type_traits>

#include "lfv/fit.hpp"
#include "lfv/io.hpp"
#include "lfv/provider.hpp"

namespace lfv {

namespace fs = std::filesystem;

// ---- config -----------------------------------------------------------------------

TrainConfig TrainConfig::defaults(TrainPhase phase) {
  TrainConfig c;
  c.phase = phase;
  if (phase == TrainPhase::refine) {
    c.epochs = 15;
    c.lr = 1e-3;
    c.a_values = {1.2};
    c.b_min = c.b_max = 0.3;
  }
  return c;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train: epochs must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), "train: lr must be nonnegative");
  require(weight_decay >= 0.0, "train: weight_decay must be nonnegative");
  require(patience >= 0, "train: patience must be >= 0");
  require(crop_height >= 2 && crop_width >= 2, "train: crop must be at least 2x2");
  require(sequence_length >= 1, "train: sequence_length must be >= 1");
  require(!a_values.empty(), "train: a_values must not be empty");
  require(b_min <= b_max, "train: b_min must not exceed b_max");
  require(angular_res >= 1 && angular_res % 2 == 1, "train: angular_res must be odd");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "train: validation_fraction must be in [0,1)");
  require(synthesis.n_layers == displacement.n_layers,
          "train: synthesis and displacement heads disagree on the layer count");
  weights.validate();
  synthesis.validate();
}

namespace {

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Hex floats round-trip exactly through the checkpoint's string map.
std::string exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_exact(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  require(it != m.end(), "checkpoint: missing '" + key + "'");
  return std::strtod(it->second.c_str(), nullptr);
}

}  // namespace

std::map<std::string, std::string> TrainConfig::echo() const {
  std::string as;
  for (double a : a_values) as += (as.empty() ? "" : ",") + num(a);
  return {
      {"phase", phase == TrainPhase::selfsup ? "selfsup" : "refine"},
      {"epochs", std::to_string(epochs)},
      {"lr", num(lr)},
      {"weight_decay", num(weight_decay)},
      {"patience", std::to_string(patience)},
      {"crop_height", std::to_string(crop_height)},
      {"crop_width", std::to_string(crop_width)},
      {"sequence_length", std::to_string(sequence_length)},
      {"a_values", as},
      {"b_min", num(b_min)},
      {"b_max", num(b_max)},
      {"angular_res", std::to_string(angular_res)},
      {"validation_fraction", num(validation_fraction)},
      {"lambda_photo", num(weights.photo)},
      {"lambda_geo", num(weights.geo)},
      {"lambda_temp", num(weights.temp)},
      {"lambda_occ", num(weights.occ)},
      {"lambda_bins", num(weights.bins)},
      {"lambda_tv", num(weights.tv)},
      {"n_layers", std::to_string(synthesis.n_layers)},
      {"rank", std::to_string(synthesis.rank)},
      {"base_width", std::to_string(synthesis.base_width)},
      {"stages", std::to_string(synthesis.stages)},
      {"max_width", std::to_string(synthesis.max_width)},
      {"disp_width", std::to_string(displacement.width)},
      {"patch_size", std::to_string(refinement.patch_size)},
      {"embed", std::to_string(refinement.embed)},
      {"refine_depth", std::to_string(refinement.depth)},
      {"heads", std::to_string(refinement.heads)},
      {"seed", std::to_string(seed)},
  };
}

TrainConfig TrainConfig::from_echo(const std::map<std::string, std::string>& m) {
  const auto phase_it = m.find("phase");
  TrainConfig c = defaults(phase_it != m.end() && phase_it->second == "refine" ? TrainPhase::refine : TrainPhase::selfsup);
  auto get = [&](const char* k, auto& dst) {
    const auto it = m.find(k);
    if (it == m.end()) return;
    using T = std::decay_t<decltype(dst)>;
    try {
      if constexpr (std::is_same_v<T, double>)
        dst = std::stod(it->second);
      else if constexpr (std::is_same_v<T, std::uint64_t>)
        dst = std::stoull(it->second);
      else
        dst = std::stoi(it->second);
    } catch (const std::logic_error&) {
      throw Error(std::string("checkpoint: bad value for '") + k + "': " + it->second);
    }
  };
  get("epochs", c.epochs);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("patience", c.patience);
  get("crop_height", c.crop_height);
  get("crop_width", c.crop_width);
  get("sequence_length", c.sequence_length);
  get("b_min", c.b_min);
  get("b_max", c.b_max);
  get("angular_res", c.angular_res);
  get("validation_fraction", c.validation_fraction);
  get("lambda_photo", c.weights.photo);
  get("lambda_geo", c.weights.geo);
  get("lambda_temp", c.weights.temp);
  get("lambda_occ", c.weights.occ);
  get("lambda_bins", c.weights.bins);
  get("lambda_tv", c.weights.tv);
  get("n_layers", c.synthesis.n_layers);
  c.displacement.n_layers = c.synthesis.n_layers;
  get("rank", c.synthesis.rank);
  get("base_width", c.synthesis.base_width);
  get("stages", c.synthesis.stages);
  get("max_width", c.synthesis.max_width);
  get("disp_width", c.displacement.width);
  get("patch_size", c.refinement.patch_size);
  get("embed", c.refinement.embed);
  get("refine_depth", c.refinement.depth);
  get("heads", c.refinement.heads);
  get("seed", c.seed);
  if (const auto it = m.find("a_values"); it != m.end()) {
    c.a_values.clear();
    std::size_t pos = 0;
    while (pos <= it->second.size()) {
      const auto comma = it->second.find(',', pos);
      const std::string cell = it->second.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!cell.empty()) c.a_values.push_back(std::stod(cell));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return c;
}

namespace {

void check_architecture(const Checkpoint& ck, const TrainConfig& cfg, const std::vector<std::string>& keys) {
  const auto mine = cfg.echo();
  for (const auto& k : keys) {
    const auto it = ck.config.find(k);
    require(it != ck.config.end(), "checkpoint/config mismatch: checkpoint has no '" + k + "'");
    require(it->second == mine.at(k),
            "checkpoint/config mismatch: " + k + " is " + it->second + " in the checkpoint but " + mine.at(k) + " in the config");
  }
}

const std::vector<std::string> kBackboneKeys{"n_layers", "rank", "base_width", "stages", "max_width", "disp_width"};
const std::vector<std::string> kRefineKeys{"angular_res", "patch_size", "embed", "refine_depth", "heads"};

RefinementConfig refinement_config(const TrainConfig& cfg) {
  RefinementConfig rc = cfg.refinement;
  rc.angular_res = cfg.angular_res;
  return rc;
}

}  // namespace

// ---- data --------------------------------------------------------------------------

namespace {

// Crops the two leading (spatial) dimensions of an [H, W, ...] tensor.
Tensor crop_hw(const Tensor& t, int y0, int x0, int h, int w) {
  Shape s = t.shape();
  const int W = s[1];
  const std::size_t inner = t.size() / (static_cast<std::size_t>(s[0]) * W);
  s[0] = h;
  s[1] = w;
  Tensor out(s);
  for (int y = 0; y < h; ++y)
    std::copy_n(t.data() + ((static_cast<std::size_t>(y0 + y) * W + x0) * inner), static_cast<std::size_t>(w) * inner,
                out.data() + static_cast<std::size_t>(y) * w * inner);
  return out;
}

LightField crop_lf(const LightField& L, int y0, int x0, int h, int w) {
  const auto& g = L.grid();
  LightField out(g, h, w);
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv)
      out.set_view(iu, iv, Image(crop_hw(L.view(iu, iv).tensor(), y0, x0, h, w)));
  return out;
}

DepthMap normalized_depth(const DisparityMap& d, const AffineDepthParams& p) {
  DepthMap z(d.height(), d.width());
  for (std::size_t i = 0; i < z.tensor().size(); ++i) z.tensor()[i] = (d.tensor()[i] - p.b) / p.a;
  return z;
}

DisparityMap affine_disparity(const DepthMap& z, double a, double b) {
  return depth_to_disparity(z, {a, b});
}

LightField load_any_lf(const std::string& path, int angular_res) {
  require(fs::exists(path), "missing light field '" + path + "'");
  return fs::is_directory(path) ? load_lf_dir(path) : load_lf_grid(path, angular_res, angular_res);
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t idx) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(idx)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kValidationEpoch = 0xFFFFFFFFu;

struct Draw {
  double a = 1.0;
  double b = 0.0;
  int y0 = 0, x0 = 0, h = 0, w = 0;
  int start = 0, len = 0;
};

Draw draw(std::mt19937_64& rng, const TrainConfig& cfg, int H, int W, int T) {
  Draw d;
  d.a = cfg.a_values[std::uniform_int_distribution<std::size_t>(0, cfg.a_values.size() - 1)(rng)];
  d.b = cfg.b_min == cfg.b_max ? cfg.b_min : std::uniform_real_distribution<double>(cfg.b_min, cfg.b_max)(rng);
  d.h = std::min(cfg.crop_height, H);
  d.w = std::min(cfg.crop_width, W);
  d.y0 = std::uniform_int_distribution<int>(0, H - d.h)(rng);
  d.x0 = std::uniform_int_distribution<int>(0, W - d.w)(rng);
  d.len = std::min(cfg.sequence_length, T);
  d.start = std::uniform_int_distribution<int>(0, T - d.len)(rng);
  return d;
}

TrainSequence crop_sequence(const TrainSequence& s, const Draw& d) {
  TrainSequence out;
  for (int t = d.start; t < d.start + d.len; ++t) {
    out.frames.emplace_back(crop_hw(s.frames[static_cast<std::size_t>(t)].tensor(), d.y0, d.x0, d.h, d.w));
    out.depth.emplace_back(crop_hw(s.depth[static_cast<std::size_t>(t)].tensor(), d.y0, d.x0, d.h, d.w));
    if (t + 1 < d.start + d.len) {
      out.forward.emplace_back(crop_hw(s.forward[static_cast<std::size_t>(t)].tensor(), d.y0, d.x0, d.h, d.w));
      out.backward.emplace_back(crop_hw(s.backward[static_cast<std::size_t>(t)].tensor(), d.y0, d.x0, d.h, d.w));
    }
  }
  return out;
}

void check_sequence(const TrainSequence& s) {
  const int T = s.length();
  require(T >= 1, "train: empty sequence");
  require(static_cast<int>(s.depth.size()) == T, "train: one depth map per frame required");
  require(static_cast<int>(s.forward.size()) == T - 1 && static_cast<int>(s.backward.size()) == T - 1,
          "train: T-1 forward and backward flows required");
}

}  // namespace

TrainSequence sequence_from_scene(const SceneTruth& scene) {
  const auto shared = std::make_shared<const SceneTruth>(scene);
  const SceneOracleProvider p(shared);
  TrainSequence s;
  for (int t = 0; t < scene.frames(); ++t) {
    s.frames.push_back(scene.center[static_cast<std::size_t>(t)]);
    s.depth.push_back(p.depth(t));
    if (t + 1 < scene.frames()) {
      s.forward.push_back(p.flow({t, {}}, {t + 1, {}}));
      s.backward.push_back(p.flow({t + 1, {}}, {t, {}}));
    }
  }
  return s;
}

TrainSequence sequence_from_lf(const LightField& lf, int frames, std::uint64_t seed) {
  VideoSimConfig vc;
  vc.frames = frames;
  vc.seed = seed;
  const LfVideo video = simulate_lf_video(lf, vc);
  const DisparityMap full = estimate_disparity(lf);
  const AffineDepthParams p = normalization_for(full.min(), full.max());
  const int h = video.center.front().height(), w = video.center.front().width();
  TrainSequence s;
  for (int t = 0; t < frames; ++t) {
    s.frames.push_back(video.center[static_cast<std::size_t>(t)]);
    const DisparityMap d(
        crop_hw(full.tensor(), video.origin_y + t * video.step_y, video.origin_x + t * video.step_x, h, w));
    s.depth.push_back(normalized_depth(d, p));
    if (t + 1 < frames) {
      s.forward.push_back(video.flow(t, t + 1));
      s.backward.push_back(video.flow(t + 1, t));
    }
  }
  return s;
}

std::vector<TrainSequence> load_sequences(const std::string& manifest, const TrainConfig& cfg) {
  std::vector<TrainSequence> out;
  for (const auto& e : read_manifest(manifest))
    out.push_back(sequence_from_lf(load_any_lf(e.lf_path, cfg.angular_res), e.frames, e.seed));
  require(!out.empty(), "train: manifest '" + manifest + "' lists no data");
  return out;
}

RefinementSample refinement_sample(const LightField& lf) {
  const DisparityMap d = estimate_disparity(lf);
  return {lf, normalized_depth(d, normalization_for(d.min(), d.max()))};
}

std::vector<RefinementSample> load_refinement_samples(const std::string& manifest, const TrainConfig& cfg) {
  std::vector<RefinementSample> out;
  for (const auto& e : read_manifest(manifest)) out.push_back(refinement_sample(load_any_lf(e.lf_path, cfg.angular_res)));
  require(!out.empty(), "train: manifest '" + manifest + "' lists no data");
  return out;
}

// ---- backbone ----------------------------------------------------------------------

Backbone::Backbone(const TrainConfig& cfg) : synth(cfg.synthesis), disp(cfg.displacement) {}

nn::NamedParams Backbone::parameters() const {
  nn::NamedParams p = synth.parameters();
  for (auto& kv : disp.parameters()) p.push_back(kv);
  return p;
}

std::pair<LightField, nn::RecurrentState> Backbone::synthesize(const Image& prev, const Image& cur, const Image& next,
                                                               const DisparityMap& d, const AngularGrid& grid,
                                                               const nn::RecurrentState& state) const {
  const ad::Var input = stack_inputs(prev, cur, next, d);
  auto [F, s] = synth.forward(input, state);
  const ad::Var D = disp.forward(input, d);
  const ad::Var L = td_synthesize(F, D, grid);
  return {LightField(grid, L.value()), s.detached()};
}

LightField backbone_single(const Backbone& net, const Image& I, const DisparityMap& d, const AngularGrid& grid) {
  return net.synthesize(I, I, I, d, grid, {}).first;
}

std::vector<LightField> synthesize_video(const Backbone& net, const RefinementBlock* refine,
                                         const std::vector<Image>& frames, const std::vector<DisparityMap>& d,
                                         const AngularGrid& grid) {
  const int T = static_cast<int>(frames.size());
  require(T >= 1, "synthesize_video: no frames");
  require(d.size() == frames.size(), "synthesize_video: one disparity map per frame required");
  std::vector<LightField> out;
  nn::RecurrentState state;
  for (int t = 0; t < T; ++t) {
    const int tp = t > 0 ? t - 1 : std::min(t + 1, T - 1);
    const int tn = t + 1 < T ? t + 1 : std::max(t - 1, 0);
    auto [L, s] = net.synthesize(frames[static_cast<std::size_t>(tp)], frames[static_cast<std::size_t>(t)],
                                 frames[static_cast<std::size_t>(tn)], d[static_cast<std::size_t>(t)], grid, state);
    state = s;
    if (refine) L = refine->refine(L, frames[static_cast<std::size_t>(t)]).refined;
    out.push_back(std::move(L));
  }
  return out;
}

void load_backbone(const Checkpoint& ck, const TrainConfig& cfg, Backbone& net) {
  check_architecture(ck, cfg, kBackboneKeys);
  restore_params(ck, net.parameters());
}

void load_refinement(const Checkpoint& ck, const TrainConfig& cfg, RefinementBlock& block) {
  check_architecture(ck, cfg, kRefineKeys);
  restore_params(ck, block.parameters());
}

// ---- self-supervised phase ------------------------------------------------------------

ad::Var sequence_loss(const Backbone& net, const TrainSequence& seq, double a, double b, const TrainConfig& cfg) {
  check_sequence(seq);
  const int T = seq.length();
  const AngularGrid grid = cfg.grid();
  const LossWeights& w = cfg.weights;
  nn::RecurrentState state;
  ad::Var total = ad::constant(Tensor({1}, 0.0));
  auto add = [&](double weight, const ad::Var& term) {
    if (weight > 0.0) total = ad::add(total, ad::scale(term, weight));
  };
  auto frame = [&](int t) -> const Image& { return seq.frames[static_cast<std::size_t>(t)]; };
  // Center flow between adjacent frames.
  auto flow = [&](int from, int to) -> const FlowField& {
    return to == from + 1 ? seq.forward[static_cast<std::size_t>(from)] : seq.backward[static_cast<std::size_t>(to)];
  };
  for (int t = 0; t < T; ++t) {
    // At the ends the missing neighbor is replaced by the existing one.
    const int tp = t > 0 ? t - 1 : std::min(t + 1, T - 1);
    const int tn = t + 1 < T ? t + 1 : std::max(t - 1, 0);
    const DisparityMap d = affine_disparity(seq.depth[static_cast<std::size_t>(t)], a, b);
    const ad::Var input = stack_inputs(frame(tp), frame(t), frame(tn), d);
    auto [F, s] = net.synth.forward(input, state);
    state = s;
    const ad::Var D = net.disp.forward(input, d);
    const ad::Var L = td_synthesize(F, D, grid);
    add(w.photo, photometric_loss(L, frame(t)));
    add(w.geo, geometric_loss(L, frame(t), d));
    if (T >= 2) {
      if (w.temp > 0.0) add(w.temp, temporal_loss(L, frame(tn), d, flow(tn, t)));
      if (w.occ > 0.0) {
        const int H = frame(t).height(), W = frame(t).width();
        LightField cp(grid, H, W), cn(grid, H, W);
        for (int iu = 0; iu < grid.U; ++iu)
          for (int iv = 0; iv < grid.V; ++iv) {
            const ViewOffset o = grid.offset(iu, iv);
            cp.set_view(iu, iv, flow_warp_candidate(frame(tp), compose_view_flow(d, flow(t, tp), o)));
            cn.set_view(iu, iv, flow_warp_candidate(frame(tn), compose_view_flow(d, flow(t, tn), o)));
          }
        add(w.occ, disocclusion_loss(L, cp, cn, disocclusion_mask(frame(t), d, grid)));
      }
    }
    add(w.bins, bin_density_loss(D, d));
    add(w.tv, tv_loss(L));
  }
  return ad::scale(total, 1.0 / T);
}

namespace {

struct Split {
  std::vector<std::size_t> train, val;
};

// The last fraction of the dataset validates; a single item does both.
Split split_dataset(std::size_t n, double fraction) {
  Split s;
  const std::size_t n_val = n >= 2 && fraction > 0.0
                                ? std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * n)))
                                : 0;
  for (std::size_t i = 0; i < n - n_val; ++i) s.train.push_back(i);
  for (std::size_t i = n - n_val; i < n; ++i) s.val.push_back(i);
  if (s.val.empty()) s.val = s.train;
  return s;
}

void store_schedule(Checkpoint& ck, int epoch, const AdamW& opt, const PlateauScheduler& sched) {
  ck.config["epoch"] = std::to_string(epoch);
  ck.config["current_lr"] = exact(opt.lr());
  const auto st = sched.state();
  ck.config["sched_best"] = exact(st.best);
  ck.config["sched_seen"] = st.seen ? "1" : "0";
  ck.config["sched_bad"] = std::to_string(st.bad);
}

int restore_schedule(const Checkpoint& ck, AdamW& opt, PlateauScheduler& sched) {
  opt.set_lr(parse_exact(ck.config, "current_lr"));
  PlateauScheduler::State st;
  st.best = parse_exact(ck.config, "sched_best");
  st.seen = ck.config.at("sched_seen") == "1";
  st.bad = std::stoi(ck.config.at("sched_bad"));
  sched.restore(st);
  return std::stoi(ck.config.at("epoch"));
}

void emit_checkpoint(const TrainOptions& opts, const std::string& stem, int epoch, const Checkpoint& ck) {
  if (opts.out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  require(!ec, "train: cannot create '" + opts.out_dir + "'");
  char name[64];
  std::snprintf(name, sizeof(name), "%s_e%03d.ckpt", stem.c_str(), epoch);
  save_checkpoint((fs::path(opts.out_dir) / name).string(), ck);
  save_checkpoint((fs::path(opts.out_dir) / (stem + "_last.ckpt")).string(), ck);
}

void say(const TrainOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

void check_finite(double v, const char* phase, int epoch, std::size_t idx) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string(phase) + ": loss is not finite at epoch " + std::to_string(epoch) + ", item " +
                          std::to_string(idx));
}

}  // namespace

TrainResult train_selfsup(const std::vector<TrainSequence>& data, const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  require(!data.empty(), "train_selfsup: empty dataset");
  for (const auto& s : data) check_sequence(s);
  const Split split = split_dataset(data.size(), cfg.validation_fraction);

  Backbone net(cfg);
  const auto params = net.parameters();
  AdamW opt(nn::values_of(params), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  PlateauScheduler sched(cfg.patience, 0.5, 1e-3);
  int start = 0;
  std::int64_t step = 0;
  if (!opts.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(opts.resume_from);
    check_architecture(ck, cfg, kBackboneKeys);
    restore_params(ck, params);
    restore_optimizer(ck, "opt", opt);
    start = restore_schedule(ck, opt, sched) + 1;
    step = ck.step;
    say(opts, "resumed from " + opts.resume_from + " at epoch " + std::to_string(start));
  }

  TrainResult res;
  for (int epoch = start; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    auto shuffle_rng = step_rng(cfg.seed, static_cast<std::uint64_t>(epoch), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (const std::size_t idx : order) {
      const TrainSequence& s = data[idx];
      auto rng = step_rng(cfg.seed, static_cast<std::uint64_t>(epoch), idx + 1);
      const Draw dr = draw(rng, cfg, s.frames.front().height(), s.frames.front().width(), s.length());
      opt.zero_grad();
      const ad::Var loss = sequence_loss(net, crop_sequence(s, dr), dr.a, dr.b, cfg);
      const double v = loss.value()[0];
      check_finite(v, "train_selfsup", epoch, idx);
      ad::backward(loss);
      opt.step();
      ++step;
      res.step_losses.push_back(v);
    }
    double val = 0.0;
    for (const std::size_t idx : split.val) {
      const TrainSequence& s = data[idx];
      auto rng = step_rng(cfg.seed, kValidationEpoch, idx + 1);
      const Draw dr = draw(rng, cfg, s.frames.front().height(), s.frames.front().width(), s.length());
      val += sequence_loss(net, crop_sequence(s, dr), dr.a, dr.b, cfg).value()[0];
    }
    val /= static_cast<double>(split.val.size());
    check_finite(val, "train_selfsup validation", epoch, 0);
    res.val_losses.push_back(val);
    opt.set_lr(opt.lr() * sched.observe(val));
    res.lrs.push_back(opt.lr());

    Checkpoint ck;
    ck.config = cfg.echo();
    ck.step = step;
    store_params(ck, params);
    store_optimizer(ck, "opt", opt);
    store_schedule(ck, epoch, opt, sched);
    emit_checkpoint(opts, "selfsup", epoch, ck);
    res.checkpoint = std::move(ck);
    say(opts, "epoch " + std::to_string(epoch) + " train " + num(res.step_losses.empty() ? 0.0 : res.step_losses.back()) +
                  " val " + num(val) + " lr " + num(opt.lr()));
  }
  return res;
}

// ---- refinement phase ------------------------------------------------------------------

TrainResult train_refinement(const std::vector<RefinementSample>& data, const Checkpoint& backbone,
                             const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  require(!data.empty(), "train_refinement: empty dataset");
  const AngularGrid grid = cfg.grid();
  for (const auto& s : data) {
    require(s.lf.grid() == grid, "train_refinement: light fields must be " + std::to_string(cfg.angular_res) + "x" +
                                     std::to_string(cfg.angular_res));
    require(s.depth.height() == s.lf.height() && s.depth.width() == s.lf.width(),
            "train_refinement: depth and light field sizes differ");
  }
  Backbone net(cfg);
  load_backbone(backbone, cfg, net);
  const auto frozen = net.parameters();
  std::vector<Tensor> snapshot;
  for (const auto& kv : frozen) snapshot.push_back(kv.second.value());

  RefinementBlock block(refinement_config(cfg));
  const auto params = block.parameters();
  AdamW opt(nn::values_of(params), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  PlateauScheduler sched(cfg.patience, 0.5, 1e-3);
  int start = 0;
  std::int64_t step = 0;
  if (!opts.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(opts.resume_from);
    check_architecture(ck, cfg, kRefineKeys);
    restore_params(ck, params);
    restore_optimizer(ck, "ropt", opt);
    start = restore_schedule(ck, opt, sched) + 1;
    step = ck.step;
  }

  const Split split = split_dataset(data.size(), cfg.validation_fraction);
  auto sample_loss = [&](const RefinementSample& s, std::mt19937_64& rng) {
    const Draw dr = draw(rng, cfg, s.lf.height(), s.lf.width(), 1);
    const LightField gt = crop_lf(s.lf, dr.y0, dr.x0, dr.h, dr.w);
    const Image I = center_view(gt);
    const DisparityMap d = affine_disparity(DepthMap(crop_hw(s.depth.tensor(), dr.y0, dr.x0, dr.h, dr.w)), dr.a, dr.b);
    const LightField base = backbone_single(net, I, d, grid);
    return refinement_loss(block.forward(ad::constant(base.tensor()), I).refined, gt);
  };

  TrainResult res;
  for (int epoch = start; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    auto shuffle_rng = step_rng(cfg.seed, static_cast<std::uint64_t>(epoch), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (const std::size_t idx : order) {
      auto rng = step_rng(cfg.seed, static_cast<std::uint64_t>(epoch), idx + 1);
      opt.zero_grad();
      const ad::Var loss = sample_loss(data[idx], rng);
      const double v = loss.value()[0];
      check_finite(v, "train_refinement", epoch, idx);
      ad::backward(loss);
      for (const auto& [name, p] : frozen)
        for (double g : p.grad().values()) require(g == 0.0, "train_refinement: gradient reached backbone weight " + name);
      opt.step();
      ++step;
      res.step_losses.push_back(v);
    }
    double val = 0.0;
    for (const std::size_t idx : split.val) {
      auto rng = step_rng(cfg.seed, kValidationEpoch, idx + 1);
      val += sample_loss(data[idx], rng).value()[0];
    }
    val /= static_cast<double>(split.val.size());
    res.val_losses.push_back(val);
    opt.set_lr(opt.lr() * sched.observe(val));
    res.lrs.push_back(opt.lr());

    Checkpoint ck;
    ck.config = cfg.echo();
    ck.step = step;
    store_params(ck, frozen);
    store_params(ck, params);
    store_optimizer(ck, "ropt", opt);
    store_schedule(ck, epoch, opt, sched);
    emit_checkpoint(opts, "refine", epoch, ck);
    res.checkpoint = std::move(ck);
    say(opts, "epoch " + std::to_string(epoch) + " train " + num(res.step_losses.empty() ? 0.0 : res.step_losses.back()) +
                  " val " + num(val) + " lr " + num(opt.lr()));
  }
  for (std::size_t k = 0; k < frozen.size(); ++k)
    require(frozen[k].second.value().storage() == snapshot[k].storage(),
            "train_refinement: backbone weight " + frozen[k].first + " changed");
  return res;
}

}  // namespace lfv
