#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tal/geometry.hpp"
#include "tal/sampling.hpp"

namespace tal {

struct TargetAssignment {
  double tiou_star = 0.0;
  bool is_positive = false;
  OffsetPair offset_target;           // normalized by the sample's length
  std::optional<std::size_t> closest_gt;
};

/// Per-stage regression losses before any decay weighting.
struct StageLossTerms {
  double bce = 0.0;
  double mse = 0.0;
  double offset = 0.0;
};

/// Decay-weighted loss decomposition. `total` always equals
/// bce + lambda1*mse + lambda2*offset + boundary + lambda3*l2 for the
/// lambdas it was built with.
struct LossReport {
  double bce = 0.0;
  double mse = 0.0;
  double offset = 0.0;
  double boundary = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

std::vector<TargetAssignment> assign_targets(const std::vector<Segment>& samples,
                                             const std::vector<Segment>& gts,
                                             double tau);
std::vector<TargetAssignment> assign_targets(const SampleSet& samples,
                                             const std::vector<Segment>& gts,
                                             double tau);

/// Balanced binary cross entropy: the positive and negative log terms are
/// each averaged within their class and the two class means carry weight
/// 1/2. An empty class contributes 0. Probabilities are clamped into
/// (eps, 1-eps) before the log.
struct BceResult {
  double value = 0.0;
  std::vector<double> d_p;
};
BceResult balanced_bce(std::span<const double> p, std::span<const int> labels);

/// Balanced BCE on p1 against 1{tiou* > tau} plus lambda1 times the mean
/// squared error of p2 against tiou*, with analytic gradients.
struct TiouLossResult {
  double value = 0.0;
  double bce = 0.0;
  double mse = 0.0;
  std::vector<double> d_p1;
  std::vector<double> d_p2;
};
TiouLossResult loss_tiou(std::span<const double> p1, std::span<const double> p2,
                         const std::vector<TargetAssignment>& targets,
                         double lambda1);

/// Mean absolute offset error in normalized coordinates, averaged over
/// endpoints and selected samples (positives only by default). Subgradient
/// 0 at exact zeros; no selected samples gives loss 0.
struct OffsetLossResult {
  double value = 0.0;
  std::vector<OffsetPair> d_pred;
};
OffsetLossResult loss_offset(std::span<const OffsetPair> pred,
                             const std::vector<TargetAssignment>& targets,
                             bool positives_only = true);

/// Snippet-level boundary labels: a snippet is a positive start (end) when
/// its time lies within half a step of some ground-truth start (end).
struct BoundaryTargets {
  std::vector<int> start;
  std::vector<int> end;
};
BoundaryTargets boundary_targets(const TimeGrid& grid,
                                 const std::vector<Segment>& gts);

/// Boundary regularization plus parameter norm: balanced BCE over the
/// start and end snippet labels (summed) plus lambda3 times the parameter
/// squared norm. Gradients w.r.t. the per-snippet probabilities; the l2
/// gradient (2*lambda3*theta) is applied by the parameter owner.
struct NormLossResult {
  double value = 0.0;
  double boundary = 0.0;  // value minus the l2 term
  std::vector<double> d_start;
  std::vector<double> d_end;
};
NormLossResult loss_norm(std::span<const double> start_prob,
                         std::span<const double> end_prob,
                         const BoundaryTargets& targets,
                         double params_squared_norm, double lambda3);

/// Assemble the overall objective: sum over stages m=1..M of
/// alpha^m * (bce_m + lambda1*mse_m + lambda2*offset_m), plus the boundary
/// term and lambda3 times the parameter squared norm.
LossReport loss_total(const std::vector<StageLossTerms>& per_iteration,
                      double boundary, double l2_squared_norm, double alpha,
                      double lambda1, double lambda2, double lambda3);

/// Stage weights alpha^m for m = 1..M.
std::vector<double> stage_weights(double alpha, int iterations);

}  // namespace tal
