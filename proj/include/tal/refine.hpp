#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tal/model.hpp"
#include "tal/sampling.hpp"
#include "tal/supervision.hpp"

namespace tal {

struct RefineOptions {
  int iterations = 10;           // M
  int frames_per_snippet = 8;    // SPF floor denominator
};

struct RefineState {
  Eigen::MatrixXd hidden;   // N x H
  Eigen::ArrayX2d coords;   // N x 2
  int iteration = 0;

  int size() const { return static_cast<int>(coords.rows()); }
};

/// Zero hidden state at the sample coordinates.
RefineState init_state(const SampleSet& samples, int hidden_dim);

struct StageOutput {
  Eigen::ArrayX2d coords_in;   // where the scorer was evaluated
  Eigen::ArrayX2d coords_out;  // after the offset update, clamp and SPF floor
  Eigen::VectorXd p1, p2;
  Eigen::MatrixXd offsets;     // N x 2 raw offset predictions
};

struct RefineTrajectory {
  std::vector<StageOutput> stages;  // m = 1..M
};

/// One refinement stage: score the current coordinates with the carried
/// hidden state, then move them by the predicted relative offsets. Throws
/// std::logic_error once state.iteration reaches options.iterations.
std::pair<RefineState, StageOutput> update_step(const RefineState& state,
                                                const ScorerParams& params,
                                                const FeatureSequence& f,
                                                const RefineOptions& options);

/// Apply update_step M times, recording every stage.
RefineTrajectory run_refinement(const SampleSet& samples,
                                const ScorerParams& params,
                                const FeatureSequence& f, int iterations,
                                const RefineOptions& options);

struct ObjectiveOptions {
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  double tau = 0.7;
  double alpha = 0.8;
  int iterations = 10;
  int frames_per_snippet = 8;
  bool offset_positives_only = true;
  bool stop_gradient_coords = false;  // truncate cross-stage coordinate flow
};

struct ObjectiveResult {
  std::vector<StageLossTerms> stage_terms;                 // raw per-stage losses
  std::vector<std::vector<TargetAssignment>> stage_targets;
  RefineTrajectory trajectory;
  double value = 0.0;  // sum_m alpha^m (bce + l1*mse + l2*offset); no norm term
};

/// The decay-weighted regression objective over M refinement stages, with
/// optional analytic gradients accumulated into `grads`. Stage targets are
/// assigned at each stage's input coordinates and treated as labels (no
/// gradient flows through them); passing `frozen_targets` overrides the
/// assignment, which is how finite-difference checks hold the labels fixed.
ObjectiveResult refinement_objective(
    const ScorerParams& params, const FeatureSequence& f,
    const SampleSet& samples, const std::vector<Segment>& gts,
    const ObjectiveOptions& options,
    const std::vector<std::vector<TargetAssignment>>* frozen_targets = nullptr,
    ScorerParams* grads = nullptr);

}  // namespace tal
