#pragma once

#include <cstdint>
#include <string>

namespace tal {

/// All run hyperparameters. Defaults are the reference operating point;
/// every field can be overridden by a JSON config file and again by CLI
/// flags.
struct RunConfig {
  // loss weighting
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  double lambda3 = 1e-5;
  double alpha = 0.8;
  double tau = 0.7;
  int iterations = 10;  // refinement stages M

  // optimization
  double learning_rate = 1e-3;
  int epochs = 10;
  int lr_decay_epoch = 5;  // lr is divided by 10 from this epoch on
  int batch_size = 16;     // videos per Adam step
  std::uint64_t seed = 1;

  // sampling
  int n_per_gt = 16;
  double kappa = 0.25;
  int grid_sample_cap = 0;     // 0 keeps the full Ts(Ts+1)/2 set
  int uniform_sample_cap = 0;
  bool use_uniform_samples = true;
  bool use_gt_local_samples = true;

  // model
  int hidden_width = 64;
  int hidden_layers = 2;
  int cell_dim = 64;
  int boundary_hidden = 32;
  int soi_bins = 16;
  int frames_per_snippet = 8;
  bool offset_positives_only = true;
  bool stop_gradient_coords = false;

  // inference
  double softnms_threshold = 0.3;
  double softnms_floor = 1e-4;
  int top_q = 100;
};

/// Load config keys from a JSON file over the given base. Unknown keys are
/// an error.
RunConfig load_run_config(const std::string& path, const RunConfig& base);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace tal
