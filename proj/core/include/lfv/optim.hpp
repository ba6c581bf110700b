#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lfv/autodiff.hpp"
#include "lfv/nn.hpp"

namespace lfv {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// Adam with decoupled weight decay. Parameters without a gradient after
/// backward() are left untouched.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<ad::Var> params, const AdamWConfig& cfg);

  void step();
  void zero_grad();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps() const { return t_; }

  /// First/second moment buffers, one pair per parameter, for checkpoints.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<ad::Var> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

/// Halves the learning rate once the monitored loss has failed to improve by
/// a relative `tolerance` for more than `patience` consecutive observations.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(int patience = 4, double factor = 0.5, double tolerance = 1e-3)
      : patience_(patience), factor_(factor), tol_(tolerance) {}

  /// Returns the multiplier to apply to the learning rate (1 or `factor`).
  double observe(double loss);
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }

  /// Everything observe() depends on, for checkpoints.
  struct State {
    double best = 0.0;
    bool seen = false;
    int bad = 0;
  };
  State state() const { return {best_, seen_, bad_}; }
  void restore(const State& s) {
    best_ = s.best;
    seen_ = s.seen;
    bad_ = s.bad;
  }

 private:
  int patience_;
  double factor_;
  double tol_;
  double best_ = 0.0;
  bool seen_ = false;
  int bad_ = 0;
};

/// Self-describing weight archive: magic, JSON header (config echo, step,
/// tensor index), raw little-endian doubles.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(const std::string& name, const Tensor& t);
  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
};

/// Written to `path.tmp` then renamed over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

void store_params(Checkpoint& ck, const nn::NamedParams& params);
/// Copies stored values into the parameters; throws on a missing name or a
/// shape mismatch.
void restore_params(const Checkpoint& ck, const nn::NamedParams& params);

void store_optimizer(Checkpoint& ck, const std::string& prefix, AdamW& opt);
void restore_optimizer(const Checkpoint& ck, const std::string& prefix, AdamW& opt);

}  // namespace lfv
