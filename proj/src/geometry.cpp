#include "tal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tal {

bool Segment::valid() const {
  return std::isfinite(start) && std::isfinite(end) && start >= 0.0 &&
         start <= end;
}

double tiou(const Segment& a, const Segment& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::pair<double, std::size_t> best_tiou(const Segment& x,
                                         const std::vector<Segment>& gts) {
  if (gts.empty())
    throw std::invalid_argument("best_tiou: empty ground-truth list");
  double best = tiou(x, gts[0]);
  std::size_t best_idx = 0;
  for (std::size_t i = 1; i < gts.size(); ++i) {
    const double t = tiou(x, gts[i]);
    if (t > best) {
      best = t;
      best_idx = i;
    }
  }
  return {best, best_idx};
}

namespace {

// Shared tail of the offset transforms: restore ordering, then clamp at 0.
Segment order_and_clamp(double s, double e) {
  if (s > e) std::swap(s, e);
  return {std::max(0.0, s), std::max(0.0, e)};
}

}  // namespace

Segment apply_anchor_offset(const Segment& anchor, const OffsetPair& off) {
  const double l = anchor.length();
  return order_and_clamp(off.delta_start * l + anchor.start,
                         off.delta_end * l + anchor.end);
}

Segment apply_center_offset(double center, const OffsetPair& off) {
  const double l = std::max(0.0, off.delta_end);
  const double c = center + off.delta_start;
  return order_and_clamp(c - 0.5 * l, c + 0.5 * l);
}

Segment apply_continuous_offset(const Segment& x, const OffsetPair& off) {
  const double l = x.length();
  return order_and_clamp(off.delta_start * l + x.start,
                         off.delta_end * l + x.end);
}

Segment clamp_segment(const Segment& x, double lo, double hi) {
  return {std::clamp(x.start, lo, hi), std::clamp(x.end, lo, hi)};
}

Segment clamp_spf(const Segment& x, const TimeGrid& grid,
                  int frames_per_snippet) {
  const double spf = grid.step() / frames_per_snippet;
  if (x.length() >= spf) return x;
  if (grid.duration <= spf) return {0.0, grid.duration};
  const double c = x.center();
  double s = c - 0.5 * spf;
  double e = c + 0.5 * spf;
  if (s < 0.0) return {0.0, spf};
  if (e > grid.duration) return {grid.duration - spf, grid.duration};
  return {s, e};
}

double bottom_up_fuse(double s_score, double e_score, double q_score) {
  return s_score * e_score * q_score;
}

}  // namespace tal
