#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace tal {

/// Closed temporal interval in seconds.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool valid() const;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Snippet grid underlying a feature sequence. `duration` is authoritative;
/// the step is always duration / num_snippets.
struct TimeGrid {
  int num_snippets = 0;
  double duration = 0.0;

  double step() const { return duration / num_snippets; }
  bool valid() const { return num_snippets >= 1 && duration > 0.0; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Dimensionless endpoint offsets, in units of the subject segment's length.
/// The center transform reuses delta_end as the predicted length.
struct OffsetPair {
  double delta_start = 0.0;
  double delta_end = 0.0;
};

/// Temporal IoU. Zero-measure unions (including two coincident point
/// segments) score 0.
double tiou(const Segment& a, const Segment& b);

/// Maximum tIoU over a non-empty ground-truth list and its arg-max index.
/// Ties resolve to the lowest index. Throws std::invalid_argument on an
/// empty list; callers with no ground truth assign score 0 themselves.
std::pair<double, std::size_t> best_tiou(const Segment& x,
                                         const std::vector<Segment>& gts);

/// Multi-scale anchor transform: endpoint deltas scaled by the anchor length.
Segment apply_anchor_offset(const Segment& anchor, const OffsetPair& off);

/// Anchor-free transform: shifted center plus predicted length
/// (off.delta_end, clamped at 0 when negative).
Segment apply_center_offset(double center, const OffsetPair& off);

/// Continuous-coordinate transform: endpoint deltas scaled by the segment's
/// own length. Identical to apply_anchor_offset when anchor == x.
Segment apply_continuous_offset(const Segment& x, const OffsetPair& off);

/// Clamp both endpoints into [lo, hi], preserving order.
Segment clamp_segment(const Segment& x, double lo, double hi);

/// Enforce the minimum representable duration (seconds-per-frame). Segments
/// shorter than step/frames_per_snippet are expanded symmetrically about
/// their center; expansions that cross 0 or the grid duration are shifted
/// back inside instead of truncated.
Segment clamp_spf(const Segment& x, const TimeGrid& grid,
                  int frames_per_snippet);

/// Bottom-up score fusion: product of start, end and interior confidences.
double bottom_up_fuse(double s_score, double e_score, double q_score);

}  // namespace tal
