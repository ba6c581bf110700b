#include "lfv/networks.hpp"

#include <algorithm>
#include <cmath>

namespace lfv {

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

bool is_pow2(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int log2i(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return k;
}

// [U,V,H,W,C] values clamped into a LightField / plain tensor.
LightField to_light_field(const AngularGrid& g, const Tensor& t) {
  Tensor c = t;
  for (auto& x : c.values()) x = std::clamp(x, 0.0, 1.0);
  return LightField(g, std::move(c));
}

}  // namespace

ad::Var stack_inputs(const Image& I_prev, const Image& I_t, const Image& I_next, const DisparityMap& d) {
  const int H = I_t.height(), W = I_t.width();
  require(I_prev.same_size(I_t) && I_next.same_size(I_t) && I_t.channels() == 3,
          "network inputs must be three equally sized RGB frames");
  require(d.height() == H && d.width() == W, "network inputs: disparity size mismatch");
  Tensor x({1, H, W, 10});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      double* o = x.data() + (static_cast<std::size_t>(y) * W + xx) * 10;
      for (int c = 0; c < 3; ++c) {
        o[c] = I_prev.at(y, xx, c);
        o[3 + c] = I_t.at(y, xx, c);
        o[6 + c] = I_next.at(y, xx, c);
      }
      o[9] = d.at(y, xx);
    }
  return ad::constant(std::move(x));
}

// ---- synthesis network -------------------------------------------------------

void SynthesisConfig::validate() const {
  require(stages >= 1, "synthesis config: stages must be >= 1");
  require(base_width >= 1 && max_width >= base_width, "synthesis config: bad channel widths");
  require(n_layers >= 1 && rank >= 1, "synthesis config: N and R must be >= 1");
}

SynthesisNet::SynthesisNet(const SynthesisConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::Init init(cfg_.seed);
  std::vector<int> w;
  for (int s = 0; s <= cfg_.stages; ++s) w.push_back(std::min(cfg_.base_width << s, cfg_.max_width));
  stem_ = nn::Conv2d(10, w[0], 3, 1, init);
  for (int s = 0; s < cfg_.stages; ++s) {
    down_.emplace_back(w[s], w[s + 1], 3, 2, init);
    down_mix_.emplace_back(w[s + 1], w[s + 1], 3, 1, init);
  }
  lstm_ = nn::ConvLSTMCell(w.back(), w.back(), init);
  for (int s = cfg_.stages - 1; s >= 0; --s) up_.emplace_back(w[s + 1] + w[s], w[s], 3, 1, init);
  head_ = nn::Conv2d(w[0], cfg_.output_channels(), 3, 1, init);
  // Start every layer near f = (0.5 / R)^(1/N) so the initial rank sum sits
  // mid-range instead of saturating the [0,1] clip.
  const double f0 = std::pow(0.5 / cfg_.rank, 1.0 / cfg_.n_layers);
  for (auto& b : head_.b.mutable_value().values()) b = std::log(f0 / (1.0 - f0));
}

std::pair<ad::Var, nn::RecurrentState> SynthesisNet::forward(const ad::Var& input,
                                                             const nn::RecurrentState& state) const {
  require(input.value().rank() == 4 && input.dim(0) == 1 && input.dim(3) == 10,
          "synthesis net: input must be [1,H,W,10], got " + shape_str(input.shape()));
  const int H = input.dim(1), W = input.dim(2);
  const int m = 1 << cfg_.stages;
  ad::Var cur = ad::relu(stem_(ad::pad_replicate(input, round_up(H, m), round_up(W, m))));
  std::vector<ad::Var> skips{cur};
  for (int s = 0; s < cfg_.stages; ++s) {
    cur = ad::relu(down_mix_[s](ad::relu(down_[s](cur))));
    if (s + 1 < cfg_.stages) skips.push_back(cur);
  }
  auto [h, next_state] = lstm_(cur, state);
  cur = h;
  for (int j = 0; j < cfg_.stages; ++j) {
    const int s = cfg_.stages - 1 - j;
    const ad::Var parts[2] = {ad::upsample2x(cur), skips[s]};
    cur = ad::relu(up_[j](ad::concat_last(parts)));
  }
  ad::Var out = ad::crop(ad::sigmoid(head_(cur)), H, W);
  out = ad::reshape(out, {H, W, cfg_.n_layers, cfg_.rank, 3});
  return {ad::permute(out, {2, 3, 0, 1, 4}), next_state};
}

std::pair<TDRepresentation, nn::RecurrentState> SynthesisNet::synth_forward(const Image& I_prev, const Image& I_t,
                                                                            const Image& I_next,
                                                                            const DisparityMap& d,
                                                                            const nn::RecurrentState& state) const {
  auto [F, s] = forward(stack_inputs(I_prev, I_t, I_next, d), state);
  return {TDRepresentation(F.value()), s.detached()};
}

nn::NamedParams SynthesisNet::parameters() const {
  nn::NamedParams p;
  stem_.collect("synth.stem", p);
  for (std::size_t s = 0; s < down_.size(); ++s) {
    down_[s].collect("synth.down" + std::to_string(s), p);
    down_mix_[s].collect("synth.mix" + std::to_string(s), p);
  }
  lstm_.collect("synth.lstm", p);
  for (std::size_t j = 0; j < up_.size(); ++j) up_[j].collect("synth.up" + std::to_string(j), p);
  head_.collect("synth.head", p);
  return p;
}

// ---- displacement head -------------------------------------------------------

ad::Var widths_to_displacements(const ad::Var& widths, double lo, double hi) {
  require(widths.value().rank() == 1, "widths_to_displacements: widths must be a vector");
  require(hi > lo, "widths_to_displacements: empty range");
  const int N = widths.dim(0);
  Tensor T({N, N}, 0.0);
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < n; ++m) T[static_cast<std::size_t>(n) * N + m] = 1.0;
    T[static_cast<std::size_t>(n) * N + n] = 0.5;
  }
  ad::Var mid = ad::matmul(ad::constant(std::move(T)), ad::reshape(widths, {N, 1}));
  return ad::reshape(ad::add_scalar(ad::scale(mid, hi - lo), lo), {N});
}

DisplacementVector widths_to_displacements(const std::vector<double>& widths, double lo, double hi) {
  for (double w : widths) require(w > 0.0, "widths_to_displacements: widths must be positive");
  const auto D = widths_to_displacements(ad::constant(Tensor({static_cast<int>(widths.size())}, widths)), lo, hi);
  return DisplacementVector{D.value().storage()};
}

DisplacementHead::DisplacementHead(const DisplacementConfig& cfg) : cfg_(cfg) {
  require(cfg_.n_layers >= 1 && cfg_.width >= 1, "displacement config: bad sizes");
  nn::Init init(cfg_.seed);
  c1_ = nn::Conv2d(10, cfg_.width, 3, 2, init);
  c2_ = nn::Conv2d(cfg_.width, cfg_.width, 3, 2, init);
  key_ = nn::Linear(cfg_.width, cfg_.width, init);
  query_ = ad::parameter(init.uniform({cfg_.width, 1}, 0.1));
  fc1_ = nn::Linear(cfg_.width, cfg_.width, init);
  fc2_ = nn::Linear(cfg_.width, cfg_.n_layers, init);
}

ad::Var DisplacementHead::forward(const ad::Var& input, const DisparityMap& d) const {
  require(input.value().rank() == 4 && input.dim(3) == 10, "displacement head: input must be [1,H,W,10]");
  const ad::Var feat = ad::relu(c2_(ad::relu(c1_(input))));
  const int T = feat.dim(1) * feat.dim(2), C = cfg_.width;
  const ad::Var values = ad::reshape(feat, {T, C});
  const ad::Var scores = ad::scale(ad::matmul(key_(values), query_), 1.0 / std::sqrt(static_cast<double>(C)));
  const ad::Var attn = ad::softmax_last(ad::reshape(scores, {1, T}));
  const ad::Var pooled = ad::matmul(attn, values);  // [1, C]
  const ad::Var logits = fc2_(ad::relu(fc1_(pooled)));
  const ad::Var widths = ad::reshape(ad::softmax_last(logits), {cfg_.n_layers});
  return widths_to_displacements(widths, d.min() - cfg_.margin, d.max() + cfg_.margin);
}

DisplacementVector DisplacementHead::displacement_forward(const Image& I_prev, const Image& I_t,
                                                          const Image& I_next, const DisparityMap& d) const {
  const auto D = forward(stack_inputs(I_prev, I_t, I_next, d), d);
  return DisplacementVector{D.value().storage()};
}

nn::NamedParams DisplacementHead::parameters() const {
  nn::NamedParams p;
  c1_.collect("disp.c1", p);
  c2_.collect("disp.c2", p);
  key_.collect("disp.key", p);
  p.emplace_back("disp.query", query_);
  fc1_.collect("disp.fc1", p);
  fc2_.collect("disp.fc2", p);
  return p;
}

// ---- refinement block --------------------------------------------------------

void RefinementConfig::validate() const {
  require(is_pow2(patch_size) && patch_size >= 4, "refinement config: patch size must be a power of two >= 4");
  require(angular_res >= 1 && angular_res % 2 == 1, "refinement config: angular resolution must be odd");
  require(depth >= 1 && heads >= 1 && embed % heads == 0, "refinement config: embed must divide into heads");
  require(enc_width >= 1 && dec_width >= 1, "refinement config: bad widths");
}

TokenCount count_tokens(const RefinementConfig& cfg, int H, int W) {
  const int p = cfg.patch_size;
  return {((H + p - 1) / p) * ((W + p - 1) / p), cfg.angular_res * cfg.angular_res + 1};
}

ad::Var blend(const ad::Var& L, const ad::Var& L_res, const ad::Var& M) {
  require(L.shape() == L_res.shape(), "blend: light field shapes differ");
  const ad::Var m3[3] = {M, M, M};
  const ad::Var Mx = ad::concat_last(m3);
  require(Mx.shape() == L.shape(), "blend: mask shape does not match");
  return ad::add(ad::mul(Mx, L), ad::mul(ad::one_minus(Mx), L_res));
}

RefinementBlock::RefinementBlock(const RefinementConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::Init init(cfg_.seed);
  const int c = cfg_.enc_width;
  enc_in_ = nn::Conv2d(3, c, 3, 1, init);
  enc_res1_ = nn::Conv2d(c, c, 3, 1, init);
  enc_res2_ = nn::Conv2d(c, c, 3, 1, init);
  const int q = cfg_.patch_size / 4;
  embed_ = nn::Linear(q * q * c, cfg_.embed, init);
  pos_ = ad::parameter(init.uniform({cfg_.angular_res * cfg_.angular_res + 1, cfg_.embed}, 0.02));
  for (int i = 0; i < cfg_.depth; ++i) layers_.emplace_back(cfg_.embed, cfg_.heads, 2 * cfg_.embed, init);
  const int ups = log2i(cfg_.patch_size);
  for (int i = 0; i < ups; ++i) dec_.emplace_back(i == 0 ? cfg_.embed : cfg_.dec_width, cfg_.dec_width, 3, 1, init);
  fuse_ = nn::Conv2d(cfg_.dec_width + 6, cfg_.dec_width, 3, 1, init);
  out_ = nn::Conv2d(cfg_.dec_width, 4, 3, 1, init);
  out_.b.mutable_value()[3] = cfg_.mask_bias;
}

ad::Var RefinementBlock::decode_tokens(const ad::Var& tokens) const {
  ad::Var cur = tokens;
  for (const auto& conv : dec_) cur = ad::relu(conv(ad::upsample2x(cur)));
  return cur;
}

RefinementVars RefinementBlock::forward(const ad::Var& L, const Image& I_t, std::optional<double> mask_override) const {
  require(L.value().rank() == 5 && L.dim(4) == 3, "refine: light field must be [U,V,H,W,3]");
  const int U = L.dim(0), V = L.dim(1), H = L.dim(2), W = L.dim(3);
  require(U == cfg_.angular_res && V == cfg_.angular_res,
          "refine: light field is " + std::to_string(U) + "x" + std::to_string(V) + " views but the block expects " +
              std::to_string(cfg_.angular_res) + "x" + std::to_string(cfg_.angular_res));
  require(I_t.height() == H && I_t.width() == W && I_t.channels() == 3, "refine: input frame size mismatch");
  const int UV = U * V, B = UV + 1, E = cfg_.embed, p = cfg_.patch_size, q = p / 4, c = cfg_.enc_width;
  const int Hp = round_up(H, p), Wp = round_up(W, p), Hs = Hp / p, Ws = Wp / p, P = Hs * Ws;

  const ad::Var views = ad::reshape(L, {UV, H, W, 3});
  const ad::Var image = ad::constant(I_t.tensor().reshaped({1, H, W, 3}));
  const ad::Var flat[2] = {ad::reshape(views, {UV * H * W * 3}), ad::reshape(image, {H * W * 3})};
  const ad::Var batch = ad::reshape(ad::concat_last(flat), {B, H, W, 3});

  // Shared patch encoder over all U^2 views plus the input frame.
  ad::Var f = ad::relu(enc_in_(ad::pad_replicate(batch, Hp, Wp)));
  f = ad::relu(ad::add(f, enc_res2_(ad::relu(enc_res1_(f)))));
  f = ad::avg_pool2(ad::avg_pool2(f));
  f = ad::reshape(f, {B, Hs, q, Ws, q, c});
  f = ad::reshape(ad::permute(f, {0, 1, 3, 2, 4, 5}), {B, P, q * q * c});
  ad::Var tok = ad::permute(embed_(f), {1, 0, 2});  // [P, B, E]

  std::vector<std::size_t> pos_idx(static_cast<std::size_t>(P) * B * E);
  for (int s = 0; s < P; ++s)
    for (int b = 0; b < B; ++b)
      for (int e = 0; e < E; ++e) pos_idx[(static_cast<std::size_t>(s) * B + b) * E + e] = static_cast<std::size_t>(b) * E + e;
  tok = ad::add(tok, ad::gather(pos_, std::move(pos_idx), {P, B, E}));
  for (const auto& layer : layers_) tok = layer(tok);

  // Drop the input-frame token; reassemble each view's P tokens spatially.
  tok = ad::permute(tok, {1, 0, 2});  // [B, P, E]
  std::vector<std::size_t> keep(static_cast<std::size_t>(UV) * P * E);
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  tok = ad::gather(tok, std::move(keep), {UV, Hs, Ws, E});

  ad::Var dec = ad::crop(decode_tokens(tok), H, W);
  std::vector<std::size_t> img_idx(static_cast<std::size_t>(UV) * H * W * 3);
  const std::size_t plane = static_cast<std::size_t>(H) * W * 3;
  for (std::size_t i = 0; i < img_idx.size(); ++i) img_idx[i] = i % plane;
  const ad::Var parts[3] = {dec, views, ad::gather(image, std::move(img_idx), {UV, H, W, 3})};
  const ad::Var o = out_(ad::relu(fuse_(ad::concat_last(parts))));

  RefinementVars r;
  r.residual = ad::reshape(ad::sigmoid(ad::slice_last(o, 0, 3)), {U, V, H, W, 3});
  if (mask_override) {
    require(*mask_override >= 0.0 && *mask_override <= 1.0, "refine: mask override must be in [0,1]");
    r.mask = ad::constant(Tensor({U, V, H, W, 1}, *mask_override));
  } else {
    r.mask = ad::reshape(ad::sigmoid(ad::slice_last(o, 3, 1)), {U, V, H, W, 1});
  }
  r.refined = blend(L, r.residual, r.mask);
  return r;
}

RefinementOutput RefinementBlock::refine(const LightField& L, const Image& I_t,
                                         std::optional<double> mask_override) const {
  const auto r = forward(ad::constant(L.tensor()), I_t, mask_override);
  const AngularGrid& g = L.grid();
  return {to_light_field(g, r.refined.value()), to_light_field(g, r.residual.value()),
          r.mask.value().reshaped({g.U, g.V, L.height(), L.width()})};
}

nn::NamedParams RefinementBlock::parameters() const {
  nn::NamedParams p;
  enc_in_.collect("refine.enc_in", p);
  enc_res1_.collect("refine.enc_res1", p);
  enc_res2_.collect("refine.enc_res2", p);
  embed_.collect("refine.embed", p);
  p.emplace_back("refine.pos", pos_);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("refine.layer" + std::to_string(i), p);
  for (std::size_t i = 0; i < dec_.size(); ++i) dec_[i].collect("refine.dec" + std::to_string(i), p);
  fuse_.collect("refine.fuse", p);
  out_.collect("refine.out", p);
  return p;
}

}  // namespace lfv
