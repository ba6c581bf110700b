#include "lfv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lfv/io.hpp"

namespace lfv {

namespace fs = std::filesystem;

// ---- PSNR / MAE ---------------------------------------------------------------

namespace {

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

// Calls fn(view, y, x) for the pixels of every view inside the margin frame;
// falls back to the full view when the margin leaves nothing.
template <class Fn>
void for_interior(const AngularGrid& g, int H, int W, int margin, Fn&& fn) {
  if (2 * margin >= H || 2 * margin >= W) margin = 0;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv)
      for (int y = margin; y < H - margin; ++y)
        for (int x = margin; x < W - margin; ++x) fn(iu, iv, y, x);
}

void require_same_lf(const LightField& a, const LightField& b, const char* who) {
  require(a.grid() == b.grid() && a.tensor().shape() == b.tensor().shape(),
          std::string(who) + ": light field shapes differ (" + shape_str(a.tensor().shape()) + " vs " +
              shape_str(b.tensor().shape()) + ")");
}

}  // namespace

double psnr(const Image& a, const Image& b, int margin) {
  require(a.same_size(b), "psnr: image shapes differ (" + shape_str(a.tensor().shape()) + " vs " +
                              shape_str(b.tensor().shape()) + ")");
  double s = 0.0;
  long n = 0;
  for_interior(AngularGrid(1, 1), a.height(), a.width(), margin, [&](int, int, int y, int x) {
    for (int c = 0; c < a.channels(); ++c) {
      const double d = a.at(y, x, c) - b.at(y, x, c);
      s += d * d;
      ++n;
    }
  });
  return psnr_from_mse(s / static_cast<double>(n));
}

double psnr(const LightField& a, const LightField& b, int margin) {
  require_same_lf(a, b, "psnr");
  double s = 0.0;
  long n = 0;
  for_interior(a.grid(), a.height(), a.width(), margin, [&](int iu, int iv, int y, int x) {
    for (int c = 0; c < 3; ++c) {
      const double d = a.at(iu, iv, y, x, c) - b.at(iu, iv, y, x, c);
      s += d * d;
      ++n;
    }
  });
  return psnr_from_mse(s / static_cast<double>(n));
}

double psnr_masked(const LightField& a, const LightField& b, const HoleMask& mask, bool holes, int margin) {
  require_same_lf(a, b, "psnr_masked");
  double s = 0.0;
  long n = 0;
  for_interior(a.grid(), a.height(), a.width(), margin, [&](int iu, int iv, int y, int x) {
    if ((mask.at(iu, iv, y, x) != 0) != holes) return;
    for (int c = 0; c < 3; ++c) {
      const double d = a.at(iu, iv, y, x, c) - b.at(iu, iv, y, x, c);
      s += d * d;
      ++n;
    }
  });
  require(n > 0, "psnr_masked: the mask selects no pixels");
  return psnr_from_mse(s / static_cast<double>(n));
}

double mae_masked(const LightField& a, const LightField& b, const HoleMask& mask, bool holes, int margin) {
  require_same_lf(a, b, "mae_masked");
  double s = 0.0;
  long n = 0;
  for_interior(a.grid(), a.height(), a.width(), margin, [&](int iu, int iv, int y, int x) {
    if ((mask.at(iu, iv, y, x) != 0) != holes) return;
    for (int c = 0; c < 3; ++c) {
      s += std::abs(a.at(iu, iv, y, x, c) - b.at(iu, iv, y, x, c));
      ++n;
    }
  });
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

// ---- SSIM -----------------------------------------------------------------------

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_taps() {
  std::vector<double> g(kSsimWindow);
  double s = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    g[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Valid-mode separable filtering of an [H,W] plane.
std::vector<double> filter_valid(const std::vector<double>& in, int H, int W, const std::vector<double>& g) {
  const int K = kSsimWindow, Ho = H - K + 1, Wo = W - K + 1;
  std::vector<double> tmp(static_cast<std::size_t>(H) * Wo), out(static_cast<std::size_t>(Ho) * Wo);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += g[k] * in[static_cast<std::size_t>(y) * W + x + k];
      tmp[static_cast<std::size_t>(y) * Wo + x] = s;
    }
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += g[k] * tmp[static_cast<std::size_t>(y + k) * Wo + x];
      out[static_cast<std::size_t>(y) * Wo + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require(a.same_size(b), "ssim: image shapes differ");
  const int H = a.height(), W = a.width(), C = a.channels();
  require(H >= kSsimWindow && W >= kSsimWindow,
          "ssim: images must be at least " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow));
  const auto g = gaussian_taps();
  const std::size_t n = static_cast<std::size_t>(H) * W;
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.tensor()[i * C + c];
      pb[i] = b.tensor()[i * C + c];
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto ma = filter_valid(pa, H, W, g), mb = filter_valid(pb, H, W, g);
    const auto saa = filter_valid(aa, H, W, g), sbb = filter_valid(bb, H, W, g), sab = filter_valid(ab, H, W, g);
    double s = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
      s += ((2 * ma[i] * mb[i] + kC1) * (2 * cov + kC2)) /
           ((ma[i] * ma[i] + mb[i] * mb[i] + kC1) * (va + vb + kC2));
    }
    total += s / static_cast<double>(ma.size());
  }
  return total / C;
}

double ssim(const LightField& a, const LightField& b) {
  require_same_lf(a, b, "ssim");
  const auto& g = a.grid();
  double s = 0.0;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) s += ssim(a.view(iu, iv), b.view(iu, iv));
  return s / g.view_count();
}

// ---- temporal stability ------------------------------------------------------------

double temporal_stability(const LightField& pred_t, const LightField& gt_prev,
                          const std::vector<FlowField>& flows_prev_to_t) {
  require_same_lf(pred_t, gt_prev, "temporal_stability");
  const auto& g = pred_t.grid();
  require(flows_prev_to_t.size() == static_cast<std::size_t>(g.view_count()),
          "temporal_stability: one flow per view required");
  const int H = pred_t.height(), W = pred_t.width();
  double total = 0.0;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) {
      const FlowField& f = flows_prev_to_t[static_cast<std::size_t>(iu * g.V + iv)];
      require(f.height() == H && f.width() == W, "temporal_stability: flow size mismatch");
      const Image warped = inverse_warp(pred_t.view(iu, iv), f);
      double s = 0.0;
      long n = 0;
      for_interior(AngularGrid(1, 1), H, W, kBorderMargin, [&](int, int, int y, int x) {
        for (int c = 0; c < 3; ++c) {
          const double d = warped.at(y, x, c) - gt_prev.at(iu, iv, y, x, c);
          s += d * d;
          ++n;
        }
      });
      total += std::sqrt(s / static_cast<double>(n));
    }
  return total;
}

double temporal_stability(const LightField& pred_t, const LightField& gt_prev, const Provider& provider, int t) {
  require(t >= 1, "temporal_stability: frame t needs a previous frame");
  std::vector<FlowField> flows;
  for (const auto o : pred_t.grid().offsets()) flows.push_back(provider.flow({t - 1, o}, {t, o}));
  return temporal_stability(pred_t, gt_prev, flows);
}

// ---- ablation -------------------------------------------------------------------------

namespace {

struct Variant {
  std::string name;
  bool occ = false;
  bool adaptive = false;
  bool refine = false;
};

std::vector<Variant> variants_for(const AblationToggles& t) {
  std::vector<Variant> out{{"Base"}};
  Variant cur = out.front();
  if (t.occ) {
    cur.occ = true;
    cur.name += "+occ";
    out.push_back(cur);
  }
  if (t.adaptive) {
    cur.adaptive = true;
    cur.name += "+adpt";
    out.push_back(cur);
  }
  if (t.refine) {
    cur.refine = true;
    cur.name += "+ref";
    out.push_back(cur);
  }
  if (t.occ && t.adaptive && t.refine) out.back().name = "Proposed";
  return out;
}

}  // namespace

MetricReport run_ablation(const std::vector<AblationScene>& scenes, const AblationToggles& toggles,
                          const AblationConfig& cfg) {
  require(!scenes.empty(), "run_ablation: no scenes");
  require(!cfg.seeds.empty(), "run_ablation: no seeds");
  require(!toggles.refine || cfg.refinement != nullptr,
          "run_ablation: the refinement row needs a trained refinement block");
  MetricReport report;
  report.experiment = "ablation";
  const auto variants = variants_for(toggles);
  for (const auto& sc : scenes) {
    require(sc.truth != nullptr, "run_ablation: scene '" + sc.name + "' has no ground truth");
    const SceneTruth& S = *sc.truth;
    require(sc.frame >= 0 && sc.frame < S.frames(), "run_ablation: frame out of range for scene '" + sc.name + "'");
    const SceneOracleProvider provider(sc.truth);
    const LightField& gt = S.lf[static_cast<std::size_t>(sc.frame)];
    for (const auto seed : cfg.seeds)
      for (const auto& v : variants) {
        FitConfig fc = cfg.fit;
        fc.seed = seed;
        if (!v.occ) fc.weights.occ = 0.0;
        if (!v.adaptive) {
          fc.fixed_displacements = DisplacementVector::uniform(fc.n_layers);
          fc.weights.bins = 0.0;
        } else {
          fc.fixed_displacements.reset();
        }
        if (S.frames() < 2) fc.weights.temp = fc.weights.occ = 0.0;
        const FitInputs in = make_fit_inputs(provider, S.center, sc.frame, S.grid(), fc.weights);
        const FitResult fit = direct_fit(in, fc);
        LightField L = fit.synthesize(S.grid());
        if (v.refine) L = cfg.refinement->refine(L, in.cur).refined;

        MetricRow row;
        row.experiment = report.experiment;
        row.scene = sc.name;
        row.variant = v.name;
        row.seed = seed;
        row.psnr_db = psnr(L, gt, kBorderMargin);
        row.ssim = ssim(L, gt);
        row.e_temp = sc.frame >= 1 ? temporal_stability(L, S.lf[static_cast<std::size_t>(sc.frame - 1)], provider, sc.frame)
                                   : 0.0;
        row.hole_mae = mae_masked(L, gt, S.holes[static_cast<std::size_t>(sc.frame)], true);
        report.rows.push_back(row);
        if (cfg.keep_artifacts)
          report.artifacts.push_back({sc.name + "_" + v.name + "_s" + std::to_string(seed), std::move(L),
                                      S.disparity[static_cast<std::size_t>(sc.frame)], fit.D});
      }
  }
  return report;
}

double mean_of(const std::vector<MetricRow>& rows, const std::string& variant, double MetricRow::*field) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.variant == variant) {
      s += r.*field;
      ++n;
    }
  require(n > 0, "mean_of: no rows for variant '" + variant + "'");
  return s / n;
}

// ---- variable baseline ----------------------------------------------------------------

double lf_epi_slope(const LightField& L) {
  const int H = L.height();
  double s = 0.0;
  for (int row : {H / 4, H / 2, (3 * H) / 4}) s += epi_slope(extract_epi(L, EpiAxis::horizontal, row));
  return s / 3.0;
}

std::vector<BaselinePoint> variable_baseline_experiment(const SceneTruth& scene, const std::vector<double>& scales,
                                                        const FitConfig& fit, int frame) {
  require(!scales.empty(), "variable_baseline_experiment: no scales");
  require(frame >= 0 && frame < scene.frames(), "variable_baseline_experiment: frame out of range");
  const DisparityMap& d = scene.disparity[static_cast<std::size_t>(frame)];
  const Image& I = scene.center[static_cast<std::size_t>(frame)];
  // Reject textureless frames up front; a flat EPI has no slope.
  double lo = I.tensor()[0], hi = lo;
  for (double v : I.tensor().values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  require(hi - lo > 1e-6, "variable_baseline_experiment: the frame has no texture");

  auto slope_at = [&](double s) {
    FitConfig fc = fit;
    fc.weights.temp = fc.weights.occ = 0.0;
    FitInputs in;
    in.grid = scene.grid();
    in.cur = in.prev = in.next = I;
    in.disparity = d;
    for (auto& v : in.disparity.tensor().values()) v *= s;
    const FitResult r = direct_fit(in, fc);
    return lf_epi_slope(r.synthesize(in.grid));
  };
  const double ref = slope_at(1.0);
  require(std::abs(ref) > 1e-6, "variable_baseline_experiment: reference slope is zero");
  std::vector<BaselinePoint> out;
  for (double s : scales) {
    const double slope = s == 1.0 ? ref : slope_at(s);
    out.push_back({s, slope, slope / ref});
  }
  return out;
}

// ---- reports ----------------------------------------------------------------------------

Image epi_strip(const LightField& L, int row, int angular_scale) {
  require(angular_scale >= 1, "epi_strip: scale must be >= 1");
  const Image epi = extract_epi(L, EpiAxis::horizontal, row);
  Image out(epi.height() * angular_scale, epi.width(), 3);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = epi.at(y / angular_scale, x, c);
  return out;
}

Image displacement_histogram(const DisparityMap& d, const DisplacementVector& D, int width, int height) {
  require(width >= 8 && height >= 8, "displacement_histogram: image too small");
  double lo = d.min(), hi = d.max();
  for (double v : D.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo -= 0.5;
  hi += 0.5;
  std::vector<double> bins(static_cast<std::size_t>(width), 0.0);
  auto column = [&](double v) { return std::clamp(static_cast<int>((v - lo) / (hi - lo) * width), 0, width - 1); };
  for (double v : d.tensor().values()) bins[static_cast<std::size_t>(column(v))] += 1.0;
  const double peak = *std::max_element(bins.begin(), bins.end());
  Image img(height, width, 3, 1.0);
  for (int x = 0; x < width; ++x) {
    const int bar = peak > 0 ? static_cast<int>(std::round(bins[static_cast<std::size_t>(x)] / peak * (height - 1))) : 0;
    for (int y = height - bar; y < height; ++y)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.35;
  }
  for (double v : D.values) {
    const int x = column(v);
    for (int y = 0; y < height; ++y) {
      img.at(y, x, 0) = 0.9;
      img.at(y, x, 1) = 0.1;
      img.at(y, x, 2) = 0.1;
    }
  }
  return img;
}

namespace {

std::string check_field(const std::string& s) {
  require(s.find_first_of(",\n\r") == std::string::npos, "metrics: field '" + s + "' contains a separator");
  return s;
}

}  // namespace

void emit_report(const std::vector<MetricReport>& reports, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), "emit_report: cannot create output directory '" + out_dir + "'");
  const auto csv_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream os(csv_path, std::ios::trunc);
  require(static_cast<bool>(os), "emit_report: cannot write '" + csv_path + "'");
  os << kMetricsHeader << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (const auto& rep : reports)
    for (const auto& r : rep.rows)
      os << check_field(r.experiment) << ',' << check_field(r.scene) << ',' << check_field(r.variant) << ','
         << num(r.psnr_db) << ',' << num(r.ssim) << ',' << num(r.e_temp) << ',' << r.seed << "\n";
  require(static_cast<bool>(os), "emit_report: write to '" + csv_path + "' failed");

  for (const auto& rep : reports)
    for (const auto& a : rep.artifacts) {
      const fs::path dir(out_dir);
      write_png((dir / ("epi_" + a.name + ".png")).string(), epi_strip(a.lf, a.lf.height() / 2));
      double lo = 0.0, hi = 0.0;
      if (!a.disparity.tensor().empty()) {
        lo = a.disparity.min();
        hi = a.disparity.max();
      } else if (a.displacements.size() > 0) {
        lo = *std::min_element(a.displacements.values.begin(), a.displacements.values.end());
        hi = *std::max_element(a.displacements.values.begin(), a.displacements.values.end());
      }
      constexpr int kSteps = 5;
      for (int k = 0; k < kSteps; ++k) {
        const double alpha = lo + (hi - lo) * k / (kSteps - 1);
        std::snprintf(buf, sizeof(buf), "_%02d.png", k);
        write_png((dir / ("refocus_" + a.name + buf)).string(), refocus(a.lf, alpha));
      }
      if (!a.disparity.tensor().empty())
        write_png((dir / ("hist_" + a.name + ".png")).string(), displacement_histogram(a.disparity, a.displacements));
    }
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "read_metrics_csv: cannot open '" + path + "'");
  std::string line;
  require(std::getline(is, line) && line == kMetricsHeader, "read_metrics_csv: '" + path + "' has an unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    require(f.size() == 7, "read_metrics_csv: expected 7 fields in '" + line + "'");
    MetricRow r;
    r.experiment = f[0];
    r.scene = f[1];
    r.variant = f[2];
    try {
      r.psnr_db = std::stod(f[3]);
      r.ssim = std::stod(f[4]);
      r.e_temp = std::stod(f[5]);
      r.seed = std::stoull(f[6]);
    } catch (const std::logic_error&) {
      throw Error("read_metrics_csv: bad number in '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lfv
