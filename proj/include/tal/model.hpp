#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tal/geometry.hpp"

namespace tal {

/// Snippet feature matrix (D x Ts) with its time step. Column k sits at
/// time k * step; values are held in double precision regardless of the
/// interchange format.
struct FeatureSequence {
  Eigen::MatrixXd values;
  double step = 0.0;

  int dim() const { return static_cast<int>(values.rows()); }
  int length() const { return static_cast<int>(values.cols()); }
  double duration() const { return step * length(); }
  TimeGrid grid() const { return {length(), duration()}; }
};

struct ScorerConfig {
  int feature_dim = 16;
  int hidden_width = 64;   // trunk layer width
  int hidden_layers = 2;
  int cell_dim = 64;       // recurrent hidden state size
  int boundary_hidden = 32;
  int soi_bins = 16;

  int input_dim() const { return 3 * feature_dim + 2; }
  friend bool operator==(const ScorerConfig&, const ScorerConfig&) = default;
};

/// All learnable parameters: trunk MLP, gated update cell, output head and
/// the per-snippet boundary head. Also serves as the gradient container.
struct ScorerParams {
  ScorerConfig cfg;
  std::vector<Eigen::MatrixXd> w;  // trunk weights, layer l: width x fan_in
  std::vector<Eigen::VectorXd> b;
  Eigen::MatrixXd wz, wc;          // cell gate/candidate: H x (W + H)
  Eigen::VectorXd bz, bc;
  Eigen::MatrixXd wo;              // head: 4 x H -> (p1, p2, ds, de)
  Eigen::VectorXd bo;
  Eigen::MatrixXd wb1;             // boundary head: hidden x D, then 2 x hidden
  Eigen::VectorXd bb1;
  Eigen::MatrixXd wb2;
  Eigen::VectorXd bb2;

  double squared_norm() const;
  std::size_t count() const;
  void set_zero();
  void add_scaled(const ScorerParams& other, double scale);
  void scale(double s);

  double get_flat(std::size_t idx) const;
  void add_flat(std::size_t idx, double delta);
};

ScorerParams init_scorer(const ScorerConfig& cfg, std::uint64_t seed);
ScorerParams zeros_like(const ScorerParams& p);

/// Visit every parameter tensor as a flat (pointer, size) span, in a fixed
/// order shared by serialization, Adam and flat indexing.
std::vector<std::pair<double*, std::size_t>> tensor_views(ScorerParams& p);
std::vector<std::pair<const double*, std::size_t>> tensor_views(
    const ScorerParams& p);

struct ScorerOutput {
  double p1 = 0.0;
  double p2 = 0.0;
  OffsetPair offset;
};

/// Linear interpolation between the two nearest snippet columns; t is
/// clamped into [0, (Ts-1)*step]. `slope` (optional) receives d/dt, zero
/// where the clamp is active.
Eigen::VectorXd interpolate_feature(const FeatureSequence& f, double t,
                                    Eigen::VectorXd* slope = nullptr);

/// Segment-of-interest pooling: mean of interpolated features at `bins`
/// evenly spaced interior points. A zero-length segment reduces to a point
/// lookup.
Eigen::VectorXd soi_pool(const FeatureSequence& f, const Segment& x, int bins);

/// Everything the batched backward pass needs from a forward evaluation.
struct ScorerBatchCache {
  Eigen::MatrixXd z;                  // N x (3D+2) conditioning
  std::vector<Eigen::MatrixXd> acts;  // trunk activations, N x W each
  Eigen::MatrixXd h_in, gate, cand, h_out;  // N x H
  Eigen::MatrixXd y;                  // N x 4 raw head outputs
  Eigen::VectorXd p1, p2;             // sigmoided confidences
  // Conditioning partials w.r.t. the sample coordinates.
  Eigen::MatrixXd slope_s, slope_e, soi_ds, soi_de;  // N x D
  double inv_duration = 0.0;

  Eigen::MatrixXd offsets() const { return y.rightCols(2); }
  int size() const { return static_cast<int>(z.rows()); }
};

/// Batched scorer evaluation at continuous coordinates with a carried
/// hidden state. The plain (non-recurrent) scorer is the h_in == 0 case.
void scorer_forward_batch(const ScorerParams& params, const FeatureSequence& f,
                          const Eigen::ArrayX2d& coords,
                          const Eigen::MatrixXd& h_in, ScorerBatchCache& cache);

/// Reverse pass matching scorer_forward_batch. Adds parameter gradients
/// into `grads` and returns the adjoints of the carried hidden state and of
/// the input coordinates.
void scorer_backward_batch(const ScorerParams& params,
                           const ScorerBatchCache& cache,
                           const Eigen::VectorXd& d_p1,
                           const Eigen::VectorXd& d_p2,
                           const Eigen::MatrixXd& d_offsets,
                           const Eigen::MatrixXd& d_h_out, ScorerParams& grads,
                           Eigen::MatrixXd* d_h_in = nullptr,
                           Eigen::ArrayX2d* d_coords = nullptr);

/// Single-sample scorer with zero hidden state.
std::pair<ScorerOutput, ScorerBatchCache> forward(const ScorerParams& params,
                                                  const FeatureSequence& f,
                                                  const Segment& sample);

/// Single-sample reverse pass from upstream output gradients.
ScorerParams backward(const ScorerParams& params, const ScorerBatchCache& cache,
                      double d_p1, double d_p2, const OffsetPair& d_offset);

/// Per-snippet boundary start/end probabilities (each length Ts).
struct BoundaryCache {
  Eigen::MatrixXd hidden;  // Hb x Ts
  Eigen::MatrixXd logits;  // 2 x Ts
  Eigen::VectorXd start_prob, end_prob;
};
void boundary_forward(const ScorerParams& params, const FeatureSequence& f,
                      BoundaryCache& cache);
void boundary_backward(const ScorerParams& params, const FeatureSequence& f,
                       const BoundaryCache& cache,
                       const std::vector<double>& d_start,
                       const std::vector<double>& d_end, ScorerParams& grads);

struct AdamState {
  ScorerParams m, v;
  long step = 0;
};
AdamState init_adam(const ScorerParams& params);

/// Standard Adam update with bias correction.
void adam_step(ScorerParams& params, const ScorerParams& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Versioned binary checkpoint: magic, config, tensor dims and row-major
/// 64-bit floats, plus an optional optimizer block so training can resume
/// bitwise. Round-trips exactly.
struct Checkpoint {
  ScorerParams params;
  bool has_optimizer = false;
  AdamState opt;
  int next_epoch = 0;
  std::uint64_t run_seed = 0;
};
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tal
