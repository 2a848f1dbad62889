#include "tal/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tal {

namespace {
constexpr double kProbEps = 1e-7;
}

std::vector<TargetAssignment> assign_targets(const std::vector<Segment>& samples,
                                             const std::vector<Segment>& gts,
                                             double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("assign_targets: tau must lie in (0,1)");
  std::vector<TargetAssignment> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    TargetAssignment& t = out[i];
    if (gts.empty()) continue;  // all-zero targets, no closest gt
    const Segment& x = samples[i];
    auto [score, idx] = best_tiou(x, gts);
    t.tiou_star = score;
    t.closest_gt = idx;
    t.is_positive = score > tau;
    const double l = x.length();
    if (l > 0.0) {
      const Segment& g = gts[idx];
      t.offset_target = {(g.start - x.start) / l, (g.end - x.end) / l};
    }
  }
  return out;
}

std::vector<TargetAssignment> assign_targets(const SampleSet& samples,
                                             const std::vector<Segment>& gts,
                                             double tau) {
  std::vector<Segment> segs;
  segs.reserve(samples.size());
  for (const auto& p : samples.points) segs.push_back(p.segment);
  return assign_targets(segs, gts, tau);
}

BceResult balanced_bce(std::span<const double> p, std::span<const int> labels) {
  if (p.size() != labels.size())
    throw std::invalid_argument("balanced_bce: length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  BceResult res;
  res.d_p.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbEps, 1.0 - kProbEps);
    const bool clamped = pc != p[i];
    if (labels[i]) {
      res.value += -0.5 * std::log(pc) / n_pos;
      if (!clamped) res.d_p[i] = -0.5 / (n_pos * pc);
    } else {
      res.value += -0.5 * std::log(1.0 - pc) / n_neg;
      if (!clamped) res.d_p[i] = 0.5 / (n_neg * (1.0 - pc));
    }
  }
  return res;
}

TiouLossResult loss_tiou(std::span<const double> p1, std::span<const double> p2,
                         const std::vector<TargetAssignment>& targets,
                         double lambda1) {
  if (p1.size() != targets.size() || p2.size() != targets.size())
    throw std::invalid_argument("loss_tiou: length mismatch");
  std::vector<int> labels(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    labels[i] = targets[i].is_positive ? 1 : 0;
  BceResult bce = balanced_bce(p1, labels);

  TiouLossResult res;
  res.bce = bce.value;
  res.d_p1 = std::move(bce.d_p);
  res.d_p2.assign(p2.size(), 0.0);
  const double inv_n = targets.empty() ? 0.0 : 1.0 / targets.size();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double diff = p2[i] - targets[i].tiou_star;
    res.mse += diff * diff * inv_n;
    res.d_p2[i] = lambda1 * 2.0 * diff * inv_n;
  }
  res.value = res.bce + lambda1 * res.mse;
  return res;
}

OffsetLossResult loss_offset(std::span<const OffsetPair> pred,
                             const std::vector<TargetAssignment>& targets,
                             bool positives_only) {
  if (pred.size() != targets.size())
    throw std::invalid_argument("loss_offset: length mismatch");
  std::size_t n_sel = 0;
  for (const auto& t : targets)
    if (!positives_only || t.is_positive) n_sel++;
  OffsetLossResult res;
  res.d_pred.assign(pred.size(), OffsetPair{});
  if (n_sel == 0) return res;
  const double w = 1.0 / (2.0 * n_sel);
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& t = targets[i];
    if (positives_only && !t.is_positive) continue;
    const double ds = pred[i].delta_start - t.offset_target.delta_start;
    const double de = pred[i].delta_end - t.offset_target.delta_end;
    res.value += (std::abs(ds) + std::abs(de)) * w;
    res.d_pred[i] = {sign(ds) * w, sign(de) * w};
  }
  return res;
}

BoundaryTargets boundary_targets(const TimeGrid& grid,
                                 const std::vector<Segment>& gts) {
  BoundaryTargets bt;
  bt.start.assign(grid.num_snippets, 0);
  bt.end.assign(grid.num_snippets, 0);
  const double half = 0.5 * grid.step();
  for (int k = 0; k < grid.num_snippets; ++k) {
    const double t = k * grid.step();
    for (const auto& g : gts) {
      if (std::abs(t - g.start) <= half) bt.start[k] = 1;
      if (std::abs(t - g.end) <= half) bt.end[k] = 1;
    }
  }
  return bt;
}

NormLossResult loss_norm(std::span<const double> start_prob,
                         std::span<const double> end_prob,
                         const BoundaryTargets& targets,
                         double params_squared_norm, double lambda3) {
  if (start_prob.size() != targets.start.size() ||
      end_prob.size() != targets.end.size())
    throw std::invalid_argument("loss_norm: boundary arrays must match the grid");
  BceResult s = balanced_bce(start_prob, targets.start);
  BceResult e = balanced_bce(end_prob, targets.end);
  NormLossResult res;
  res.boundary = s.value + e.value;
  res.value = res.boundary + lambda3 * params_squared_norm;
  res.d_start = std::move(s.d_p);
  res.d_end = std::move(e.d_p);
  return res;
}

std::vector<double> stage_weights(double alpha, int iterations) {
  std::vector<double> w(iterations);
  double acc = 1.0;
  for (int m = 0; m < iterations; ++m) {
    acc *= alpha;
    w[m] = acc;
  }
  return w;
}

LossReport loss_total(const std::vector<StageLossTerms>& per_iteration,
                      double boundary, double l2_squared_norm, double alpha,
                      double lambda1, double lambda2, double lambda3) {
  if (per_iteration.empty())
    throw std::invalid_argument("loss_total: at least one iteration required");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("loss_total: alpha must lie in (0,1]");
  LossReport r;
  const std::vector<double> w =
      stage_weights(alpha, static_cast<int>(per_iteration.size()));
  for (std::size_t m = 0; m < per_iteration.size(); ++m) {
    r.bce += w[m] * per_iteration[m].bce;
    r.mse += w[m] * per_iteration[m].mse;
    r.offset += w[m] * per_iteration[m].offset;
  }
  r.boundary = boundary;
  r.l2 = l2_squared_norm;
  r.total = r.bce + lambda1 * r.mse + lambda2 * r.offset + r.boundary +
            lambda3 * r.l2;
  return r;
}

}  // namespace tal
