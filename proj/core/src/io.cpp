#include "lfv/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace lfv {

namespace fs = std::filesystem;

// ---- PNG ----------------------------------------------------------------------

Image read_png(const std::string& path) {
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    throw Error("cannot read PNG '" + path + "': " + im.message);
  im.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&im);
    throw Error("cannot decode PNG '" + path + "': " + im.message);
  }
  const int H = static_cast<int>(im.height), W = static_cast<int>(im.width);
  Image out(H, W, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) out.tensor()[i] = buf[i] / 255.0;
  return out;
}

void write_png(const std::string& path, const Image& img) {
  require(img.channels() == 1 || img.channels() == 3, "write_png: image must have 1 or 3 channels");
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width());
  im.height = static_cast<png_uint_32>(img.height());
  im.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(img.tensor().size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = img.tensor()[i];
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr))
    throw Error("cannot write PNG '" + path + "': " + im.message);
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.tensor().values()) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

// ---- PFM ----------------------------------------------------------------------

namespace {

std::uint32_t bswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xff00u) | ((x << 8) & 0xff0000u) | (x << 24);
}

float from_bytes(const char* p, bool big_endian) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if (big_endian != (std::endian::native == std::endian::big)) u = bswap32(u);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void to_le_bytes(float f, char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if (std::endian::native == std::endian::big) u = bswap32(u);
  std::memcpy(p, &u, 4);
}

std::string read_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c) && std::isspace(static_cast<unsigned char>(c))) {
  }
  if (!is) return tok;
  tok.push_back(c);
  while (is.get(c) && !std::isspace(static_cast<unsigned char>(c))) tok.push_back(c);
  return tok;  // the single whitespace after the token has been consumed
}

std::vector<char> read_exact(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<char> buf(n);
  is.read(buf.data(), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(is.gcount()) == n, what + ": truncated data");
  return buf;
}

}  // namespace

Tensor read_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open PFM '" + path + "'");
  const std::string magic = read_token(is);
  require(magic == "Pf" || magic == "PF", "PFM '" + path + "': bad magic '" + magic + "'");
  const int C = magic == "PF" ? 3 : 1;
  int W = 0, H = 0;
  double scale = 0.0;
  try {
    W = std::stoi(read_token(is));
    H = std::stoi(read_token(is));
    scale = std::stod(read_token(is));
  } catch (const std::logic_error&) {
    throw Error("PFM '" + path + "': malformed header");
  }
  require(W > 0 && H > 0 && scale != 0.0 && std::isfinite(scale), "PFM '" + path + "': malformed header");
  const bool big = scale > 0.0;
  const auto buf = read_exact(is, static_cast<std::size_t>(W) * H * C * 4, "PFM '" + path + "'");
  Tensor t({H, W, C});
  for (int row = 0; row < H; ++row) {
    const int y = H - 1 - row;
    for (int i = 0; i < W * C; ++i)
      t[static_cast<std::size_t>(y) * W * C + i] =
          from_bytes(buf.data() + (static_cast<std::size_t>(row) * W * C + i) * 4, big);
  }
  return t;
}

void write_pfm(const std::string& path, const Tensor& t) {
  require(t.rank() == 2 || (t.rank() == 3 && (t.dim(2) == 1 || t.dim(2) == 3)),
          "write_pfm: expects [H,W], [H,W,1] or [H,W,3]");
  const int H = t.dim(0), W = t.dim(1), C = t.rank() == 3 ? t.dim(2) : 1;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), "cannot write PFM '" + path + "'");
  os << (C == 3 ? "PF" : "Pf") << "\n" << W << " " << H << "\n-1.0\n";
  std::vector<char> buf(static_cast<std::size_t>(W) * H * C * 4);
  for (int row = 0; row < H; ++row) {
    const int y = H - 1 - row;
    for (int i = 0; i < W * C; ++i)
      to_le_bytes(static_cast<float>(t[static_cast<std::size_t>(y) * W * C + i]),
                  buf.data() + (static_cast<std::size_t>(row) * W * C + i) * 4);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(os), "write to PFM '" + path + "' failed");
}

// ---- FLO ----------------------------------------------------------------------

namespace {
constexpr float kFloMagic = 202021.25f;
}

FlowField read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open flow file '" + path + "'");
  const auto head = read_exact(is, 12, "flow file '" + path + "'");
  require(from_bytes(head.data(), false) == kFloMagic, "flow file '" + path + "': bad magic number");
  std::int32_t W, H;
  std::memcpy(&W, head.data() + 4, 4);
  std::memcpy(&H, head.data() + 8, 4);
  if (std::endian::native == std::endian::big) {
    W = static_cast<std::int32_t>(bswap32(static_cast<std::uint32_t>(W)));
    H = static_cast<std::int32_t>(bswap32(static_cast<std::uint32_t>(H)));
  }
  require(W > 0 && H > 0 && W < (1 << 16) && H < (1 << 16), "flow file '" + path + "': bad dimensions");
  const auto buf = read_exact(is, static_cast<std::size_t>(W) * H * 8, "flow file '" + path + "'");
  Tensor t({H, W, 2});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = from_bytes(buf.data() + i * 4, false);
  return FlowField(std::move(t));
}

void write_flo(const std::string& path, const FlowField& f) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), "cannot write flow file '" + path + "'");
  std::vector<char> buf(12 + f.tensor().size() * 4);
  to_le_bytes(kFloMagic, buf.data());
  std::int32_t dims[2] = {f.width(), f.height()};
  for (int k = 0; k < 2; ++k) {
    std::uint32_t u = static_cast<std::uint32_t>(dims[k]);
    if (std::endian::native == std::endian::big) u = bswap32(u);
    std::memcpy(buf.data() + 4 + 4 * k, &u, 4);
  }
  for (std::size_t i = 0; i < f.tensor().size(); ++i)
    to_le_bytes(static_cast<float>(f.tensor()[i]), buf.data() + 12 + i * 4);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(os), "write to flow file '" + path + "' failed");
}

// ---- light-field containers -------------------------------------------------

LightField load_lf_grid(const std::string& path, int U, int V) {
  const AngularGrid g(U, V);
  const Image img = read_png(path);
  require(img.height() % U == 0 && img.width() % V == 0,
          "LF grid '" + path + "': " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
              " image does not split into " + std::to_string(U) + "x" + std::to_string(V) + " tiles");
  const int H = img.height() / U, W = img.width() / V;
  LightField L(g, H, W);
  for (int iu = 0; iu < U; ++iu)
    for (int iv = 0; iv < V; ++iv)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c) L.at(iu, iv, y, x, c) = img.at(iu * H + y, iv * W + x, c);
  return L;
}

void save_lf_grid(const LightField& L, const std::string& path) {
  const auto& g = L.grid();
  const int H = L.height(), W = L.width();
  Image img(g.U * H, g.V * W, 3);
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c) img.at(iu * H + y, iv * W + x, c) = L.at(iu, iv, y, x, c);
  write_png(path, img);
}

std::string view_filename(ViewOffset o) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "view_%+d_%+d.png", o.u, o.v);
  return buf;
}

LightField load_lf_dir(const std::string& dir) {
  require(fs::is_directory(dir), "LF directory '" + dir + "' does not exist");
  const std::regex pat(R"(view_([+-]\d+)_([+-]\d+)\.png)");
  std::map<std::pair<int, int>, std::string> files;
  int max_u = 0, max_v = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (!std::regex_match(name, m, pat)) continue;
    const int u = std::stoi(m[1]), v = std::stoi(m[2]);
    files[{u, v}] = e.path().string();
    max_u = std::max(max_u, std::abs(u));
    max_v = std::max(max_v, std::abs(v));
  }
  require(!files.empty(), "LF directory '" + dir + "' has no view_*_*.png files");
  const AngularGrid g(2 * max_u + 1, 2 * max_v + 1);
  require(files.size() == static_cast<std::size_t>(g.view_count()),
          "LF directory '" + dir + "': expected " + std::to_string(g.view_count()) + " views, found " +
              std::to_string(files.size()));
  LightField L;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) {
      const auto o = g.offset(iu, iv);
      const auto it = files.find({o.u, o.v});
      require(it != files.end(), "LF directory '" + dir + "': missing " + view_filename(o));
      const Image img = read_png(it->second);
      if (iu == 0 && iv == 0) L = LightField(g, img.height(), img.width());
      require(img.height() == L.height() && img.width() == L.width(), "LF directory '" + dir + "': view sizes differ");
      L.set_view(iu, iv, img);
    }
  return L;
}

void save_lf_dir(const LightField& L, const std::string& dir) {
  fs::create_directories(dir);
  const auto& g = L.grid();
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) write_png((fs::path(dir) / view_filename(g.offset(iu, iv))).string(), L.view(iu, iv));
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string p, t, s;
    require(std::getline(ss, p, ',') && std::getline(ss, t, ',') && std::getline(ss, s),
            "manifest '" + path + "' line " + std::to_string(lineno) + ": expected lf_path,T,seed");
    ManifestEntry e;
    fs::path lp(p);
    e.lf_path = lp.is_absolute() ? lp.string() : (base / lp).string();
    try {
      e.frames = std::stoi(t);
      e.seed = std::stoull(s);
    } catch (const std::logic_error&) {
      throw Error("manifest '" + path + "' line " + std::to_string(lineno) + ": bad T or seed");
    }
    require(e.frames >= 1, "manifest '" + path + "' line " + std::to_string(lineno) + ": T must be >= 1");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace lfv
