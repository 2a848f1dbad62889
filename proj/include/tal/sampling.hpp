#pragma once

#include <optional>
#include <random>
#include <vector>

#include "tal/geometry.hpp"

namespace tal {

enum class SampleOrigin { grid, uniform, gt_local };

struct SamplePoint {
  Segment segment;
  SampleOrigin origin = SampleOrigin::grid;
  std::optional<std::size_t> gt_hint;  // set iff origin == gt_local
};

struct SampleSet {
  std::vector<SamplePoint> points;
  TimeGrid grid;

  std::size_t size() const { return points.size(); }
};

/// One sample at the center of every valid (i <= j) cell of the 2D
/// start/end grid: Ts*(Ts+1)/2 points, start-major then end.
/// Diagonal cells yield zero-length segments.
SampleSet grid_samples(const TimeGrid& grid);

/// Grid centers with each endpoint independently jittered by uniform noise
/// of the given half-width (default: half a grid step, so jittered cells
/// tile the continuous domain). Endpoints are re-ordered and clipped to
/// [0, duration].
SampleSet uniform_samples(const TimeGrid& grid, std::mt19937_64& rng,
                          std::optional<double> jitter_half_width = std::nullopt);

/// For each ground truth, n_per_gt samples whose endpoints carry zero-mean
/// Gaussian noise with standard deviation kappa * gt.length(). Draws that
/// degenerate after clipping (length <= 0) are redrawn up to retry_cap
/// times, then snapped to the ground truth itself.
SampleSet scale_invariant_samples(const std::vector<Segment>& gts,
                                  int n_per_gt, const TimeGrid& grid,
                                  std::mt19937_64& rng, double kappa = 0.25,
                                  int retry_cap = 8);

/// Concatenation in (grid, uniform, gt_local) order. All three sets must
/// share one TimeGrid.
SampleSet compose_training_batch(const SampleSet& grid_s,
                                 const SampleSet& uni_s,
                                 const SampleSet& si_s);

}  // namespace tal
