#include "lfv/optim.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lfv {

AdamW::AdamW(std::vector<ad::Var> params, const AdamWConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  require(cfg_.lr >= 0.0 && cfg_.weight_decay >= 0.0, "AdamW: learning rate and decay must be nonnegative");
  for (const auto& p : params_) {
    require(p.requires_grad(), "AdamW: every parameter must require a gradient");
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor& g = params_[k].grad();
    if (g.empty()) continue;
    Tensor& w = params_[k].mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      const double upd = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      w[i] -= cfg_.lr * (upd + cfg_.weight_decay * w[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double PlateauScheduler::observe(double loss) {
  if (!seen_ || loss < best_ * (1.0 - tol_)) {
    best_ = seen_ ? std::min(best_, loss) : loss;
    seen_ = true;
    bad_ = 0;
    return 1.0;
  }
  if (++bad_ > patience_) {
    bad_ = 0;
    return factor_;
  }
  return 1.0;
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'F', 'V', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
  for (auto& [n, v] : tensors)
    if (n == name) {
      v = t;
      return;
    }
  tensors.emplace_back(name, t);
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return &v;
  return nullptr;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const Tensor* t = find(name);
  require(t != nullptr, "checkpoint: missing tensor '" + name + "'");
  return *t;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = ck.config;
  header["step"] = ck.step;
  std::uint64_t offset = 0;
  auto& index = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), "checkpoint: cannot open '" + tmp + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ck.tensors)
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    require(static_cast<bool>(os), "checkpoint: write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, "checkpoint: rename to '" + path + "' failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  require(is && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, "checkpoint: '" + path + "' has a bad magic number");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(is && len < (1ull << 32), "checkpoint: truncated header");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(is), "checkpoint: truncated header");

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ck.config = header.at("config").get<std::map<std::string, std::string>>();
    ck.step = header.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint: malformed header: " + std::string(e.what()));
  }
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<Shape>());
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    require(static_cast<bool>(is), "checkpoint: truncated tensor data");
    ck.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

void store_params(Checkpoint& ck, const nn::NamedParams& params) {
  for (const auto& [name, v] : params) ck.put(name, v.value());
}

void restore_params(const Checkpoint& ck, const nn::NamedParams& params) {
  for (const auto& [name, v] : params) {
    const Tensor& t = ck.get(name);
    require(t.shape() == v.shape(), "checkpoint: tensor '" + name + "' has shape " + shape_str(t.shape()) +
                                        ", model expects " + shape_str(v.shape()));
    ad::Var alias = v;
    alias.mutable_value() = t;
  }
}

void store_optimizer(Checkpoint& ck, const std::string& prefix, AdamW& opt) {
  for (std::size_t k = 0; k < opt.first_moments().size(); ++k) {
    ck.put(prefix + ".m" + std::to_string(k), opt.first_moments()[k]);
    ck.put(prefix + ".v" + std::to_string(k), opt.second_moments()[k]);
  }
  ck.put(prefix + ".t", Tensor({1}, static_cast<double>(opt.steps())));
  ck.put(prefix + ".lr", Tensor({1}, opt.lr()));
}

void restore_optimizer(const Checkpoint& ck, const std::string& prefix, AdamW& opt) {
  for (std::size_t k = 0; k < opt.first_moments().size(); ++k) {
    const Tensor& m = ck.get(prefix + ".m" + std::to_string(k));
    const Tensor& v = ck.get(prefix + ".v" + std::to_string(k));
    require(m.shape() == opt.first_moments()[k].shape(), "checkpoint: optimizer state shape mismatch");
    opt.first_moments()[k] = m;
    opt.second_moments()[k] = v;
  }
  opt.set_steps(static_cast<std::int64_t>(ck.get(prefix + ".t")[0]));
  opt.set_lr(ck.get(prefix + ".lr")[0]);
}

}  // namespace lfv
