#pragma once

// Flat key=value run configuration shared by the command-line tools.
//
//   n_layers rank lambda_photo lambda_geo lambda_temp lambda_occ lambda_bins
//   lambda_tv patch_size angular_res lr epochs seed provider.kind
//   provider.depth_dir provider.flow_dir iterations step d_step init
//   weight_decay patience crop_height crop_width sequence_length a_values
//   b_min b_max base_width stages max_width phase
//
// '#' starts a comment. Unknown keys and malformed values are errors.

#include <map>
#include <string>

#include "lfv/fit.hpp"
#include "lfv/train.hpp"

namespace lfv {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  FitConfig fit;
  TrainConfig train;
  /// Views per axis for scene generation and direct fits.
  int angular_res = 5;
  std::string provider_kind = "oracle";
  std::string depth_dir;
  std::string flow_dir;
  std::uint64_t seed = 0;

  /// Applies one key; throws ConfigError on an unknown key or a bad value.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value.
  std::map<std::string, std::string> resolved() const;
  void validate() const;
};

/// Parses `text` on top of `base`. `origin` names the source in errors.
RunConfig parse_run_config(const std::string& text, RunConfig base = {}, const std::string& origin = "config");
RunConfig load_run_config(const std::string& path, RunConfig base = {});

}  // namespace lfv
