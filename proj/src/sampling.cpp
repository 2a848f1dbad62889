#include "tal/sampling.hpp"

#include <algorithm>
#include <stdexcept>

namespace tal {

SampleSet grid_samples(const TimeGrid& grid) {
  SampleSet out;
  out.grid = grid;
  const int ts = grid.num_snippets;
  const double step = grid.step();
  out.points.reserve(static_cast<std::size_t>(ts) * (ts + 1) / 2);
  for (int i = 0; i < ts; ++i) {
    const double s = (i + 0.5) * step;
    for (int j = i; j < ts; ++j) {
      const double e = (j + 0.5) * step;
      out.points.push_back({Segment{s, e}, SampleOrigin::grid, std::nullopt});
    }
  }
  return out;
}

SampleSet uniform_samples(const TimeGrid& grid, std::mt19937_64& rng,
                          std::optional<double> jitter_half_width) {
  const double w = jitter_half_width.value_or(0.5 * grid.step());
  SampleSet out = grid_samples(grid);
  out.grid = grid;
  if (w > 0.0) {
    std::uniform_real_distribution<double> jitter(-w, w);
    for (auto& p : out.points) {
      double s = p.segment.start + jitter(rng);
      double e = p.segment.end + jitter(rng);
      if (s > e) std::swap(s, e);
      p.segment = {std::clamp(s, 0.0, grid.duration),
                   std::clamp(e, 0.0, grid.duration)};
    }
  }
  for (auto& p : out.points) p.origin = SampleOrigin::uniform;
  return out;
}

SampleSet scale_invariant_samples(const std::vector<Segment>& gts,
                                  int n_per_gt, const TimeGrid& grid,
                                  std::mt19937_64& rng, double kappa,
                                  int retry_cap) {
  if (n_per_gt < 1)
    throw std::invalid_argument("scale_invariant_samples: n_per_gt must be >= 1");
  SampleSet out;
  out.grid = grid;
  out.points.reserve(gts.size() * static_cast<std::size_t>(n_per_gt));
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (std::size_t gi = 0; gi < gts.size(); ++gi) {
    const Segment& gt = gts[gi];
    const double sigma = kappa * gt.length();
    for (int n = 0; n < n_per_gt; ++n) {
      Segment candidate = gt;
      for (int attempt = 0; attempt <= retry_cap; ++attempt) {
        const double s =
            std::clamp(gt.start + sigma * unit_normal(rng), 0.0, grid.duration);
        const double e =
            std::clamp(gt.end + sigma * unit_normal(rng), 0.0, grid.duration);
        if (e - s > 0.0) {
          candidate = {s, e};
          break;
        }
        candidate = gt;  // exhausted draws snap back to the ground truth
      }
      out.points.push_back({candidate, SampleOrigin::gt_local, gi});
    }
  }
  return out;
}

SampleSet compose_training_batch(const SampleSet& grid_s,
                                 const SampleSet& uni_s,
                                 const SampleSet& si_s) {
  if (!(grid_s.grid == uni_s.grid) || !(grid_s.grid == si_s.grid))
    throw std::invalid_argument("compose_training_batch: mismatched grids");
  SampleSet out;
  out.grid = grid_s.grid;
  out.points.reserve(grid_s.size() + uni_s.size() + si_s.size());
  out.points.insert(out.points.end(), grid_s.points.begin(), grid_s.points.end());
  out.points.insert(out.points.end(), uni_s.points.begin(), uni_s.points.end());
  out.points.insert(out.points.end(), si_s.points.begin(), si_s.points.end());
  return out;
}

}  // namespace tal
