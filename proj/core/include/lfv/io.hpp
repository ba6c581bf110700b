#pragma once

#include <string>
#include <vector>

#include "lfv/light_field.hpp"
#include "lfv/warp.hpp"

namespace lfv {

/// 8-bit PNG. Gray, gray+alpha, RGBA and 16-bit inputs are converted to RGB.
Image read_png(const std::string& path);
/// Writes 1- or 3-channel images as 8-bit PNG; values are clamped to [0,1]
/// and rounded to the nearest level.
void write_png(const std::string& path, const Image& img);

/// Rounds to the nearest multiple of 1/255, the value a PNG round trip yields.
Image quantize8(const Image& img);

/// PFM: "Pf" (1 channel) or "PF" (3 channels), negative scale = little endian,
/// rows stored bottom to top. Returns [H,W,C] with float32 precision.
Tensor read_pfm(const std::string& path);
/// Writes [H,W] or [H,W,1] as "Pf", [H,W,3] as "PF", little endian.
void write_pfm(const std::string& path, const Tensor& t);

/// Middlebury .flo: float 202021.25, int32 width, int32 height, then
/// interleaved float32 (dx, dy) rows top to bottom.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& f);

/// One PNG holding U x V tiles: tile row = u index (top to bottom), tile
/// column = v index (left to right).
LightField load_lf_grid(const std::string& path, int U, int V);
void save_lf_grid(const LightField& L, const std::string& path);

/// Directory with one file per view named view_{u:+d}_{v:+d}.png.
LightField load_lf_dir(const std::string& dir);
void save_lf_dir(const LightField& L, const std::string& dir);
std::string view_filename(ViewOffset o);

struct ManifestEntry {
  std::string lf_path;
  int frames = 8;
  std::uint64_t seed = 0;
};

/// Lines `lf_path,T,seed`; blank lines and '#' comments are skipped and
/// relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace lfv
