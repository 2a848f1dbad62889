#include "tal/refine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tal {

namespace {

enum class SpfBranch { none, center, left, right, full };

// Branch record for one coordinate update, enough to replay the exact
// piecewise-linear Jacobian in reverse.
struct TransformRec {
  double l = 0.0;       // input segment length
  double ds = 0.0, de = 0.0;
  bool swapped = false;
  bool clamp_s = false, clamp_e = false;
  SpfBranch spf = SpfBranch::none;
};

// coords -> offset segment -> reorder -> clamp [0,dur] -> SPF floor.
void transform_forward(double xs, double xe, double ds, double de, double dur,
                       double spf, double& out_s, double& out_e,
                       TransformRec& rec) {
  rec.l = xe - xs;
  rec.ds = ds;
  rec.de = de;
  double s = ds * rec.l + xs;
  double e = de * rec.l + xe;
  rec.swapped = s > e;
  if (rec.swapped) std::swap(s, e);
  rec.clamp_s = s < 0.0 || s > dur;
  rec.clamp_e = e < 0.0 || e > dur;
  s = std::clamp(s, 0.0, dur);
  e = std::clamp(e, 0.0, dur);
  if (e - s >= spf) {
    rec.spf = SpfBranch::none;
  } else if (dur <= spf) {
    rec.spf = SpfBranch::full;
    s = 0.0;
    e = dur;
  } else {
    const double c = 0.5 * (s + e);
    if (c - 0.5 * spf < 0.0) {
      rec.spf = SpfBranch::left;
      s = 0.0;
      e = spf;
    } else if (c + 0.5 * spf > dur) {
      rec.spf = SpfBranch::right;
      s = dur - spf;
      e = dur;
    } else {
      rec.spf = SpfBranch::center;
      s = c - 0.5 * spf;
      e = c + 0.5 * spf;
    }
  }
  out_s = s;
  out_e = e;
}

// Adjoint of transform_forward: output coordinate gradients back to the
// input coordinates and the predicted offsets.
void transform_backward(const TransformRec& rec, double d_out_s, double d_out_e,
                        double& d_xs, double& d_xe, double& d_ds,
                        double& d_de) {
  double gs = d_out_s, ge = d_out_e;
  switch (rec.spf) {
    case SpfBranch::none:
      break;
    case SpfBranch::center: {
      const double t = 0.5 * (gs + ge);
      gs = t;
      ge = t;
      break;
    }
    default:  // left/right/full are constant plateaus
      gs = 0.0;
      ge = 0.0;
      break;
  }
  if (rec.clamp_s) gs = 0.0;
  if (rec.clamp_e) ge = 0.0;
  if (rec.swapped) std::swap(gs, ge);
  // s1 = ds*l + xs, e1 = de*l + xe with l = xe - xs.
  d_ds = gs * rec.l;
  d_de = ge * rec.l;
  d_xs = gs * (1.0 - rec.ds) + ge * (-rec.de);
  d_xe = gs * rec.ds + ge * (1.0 + rec.de);
}

std::vector<Segment> coords_to_segments(const Eigen::ArrayX2d& coords) {
  std::vector<Segment> out(coords.rows());
  for (Eigen::Index i = 0; i < coords.rows(); ++i)
    out[i] = {coords(i, 0), coords(i, 1)};
  return out;
}

std::vector<OffsetPair> offsets_to_pairs(const Eigen::MatrixXd& off) {
  std::vector<OffsetPair> out(off.rows());
  for (Eigen::Index i = 0; i < off.rows(); ++i)
    out[i] = {off(i, 0), off(i, 1)};
  return out;
}

void apply_stage_transform(const Eigen::ArrayX2d& coords_in,
                           const Eigen::MatrixXd& offsets, double dur,
                           double spf, Eigen::ArrayX2d& coords_out,
                           std::vector<TransformRec>* recs) {
  const Eigen::Index n = coords_in.rows();
  coords_out.resize(n, 2);
  if (recs) recs->resize(n);
  TransformRec scratch;
  for (Eigen::Index i = 0; i < n; ++i) {
    TransformRec& rec = recs ? (*recs)[i] : scratch;
    transform_forward(coords_in(i, 0), coords_in(i, 1), offsets(i, 0),
                      offsets(i, 1), dur, spf, coords_out(i, 0),
                      coords_out(i, 1), rec);
  }
}

}  // namespace

RefineState init_state(const SampleSet& samples, int hidden_dim) {
  if (hidden_dim < 1)
    throw std::invalid_argument("init_state: hidden_dim must be >= 1");
  RefineState st;
  const int n = static_cast<int>(samples.size());
  st.hidden = Eigen::MatrixXd::Zero(n, hidden_dim);
  st.coords.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    st.coords(i, 0) = samples.points[i].segment.start;
    st.coords(i, 1) = samples.points[i].segment.end;
  }
  st.iteration = 0;
  return st;
}

std::pair<RefineState, StageOutput> update_step(const RefineState& state,
                                                const ScorerParams& params,
                                                const FeatureSequence& f,
                                                const RefineOptions& options) {
  if (state.iteration >= options.iterations)
    throw std::logic_error("update_step: iteration overflow");
  ScorerBatchCache cache;
  scorer_forward_batch(params, f, state.coords, state.hidden, cache);

  StageOutput out;
  out.coords_in = state.coords;
  out.p1 = cache.p1;
  out.p2 = cache.p2;
  out.offsets = cache.y.rightCols(2);

  const double spf = f.grid().step() / options.frames_per_snippet;
  apply_stage_transform(state.coords, out.offsets, f.duration(), spf,
                        out.coords_out, nullptr);

  RefineState next;
  next.hidden = cache.h_out;
  next.coords = out.coords_out;
  next.iteration = state.iteration + 1;
  return {std::move(next), std::move(out)};
}

RefineTrajectory run_refinement(const SampleSet& samples,
                                const ScorerParams& params,
                                const FeatureSequence& f, int iterations,
                                const RefineOptions& options) {
  if (iterations < 1)
    throw std::invalid_argument("run_refinement: iterations must be >= 1");
  RefineOptions opts = options;
  opts.iterations = iterations;
  RefineState st = init_state(samples, params.cfg.cell_dim);
  RefineTrajectory traj;
  traj.stages.reserve(iterations);
  for (int m = 0; m < iterations; ++m) {
    auto [next, stage] = update_step(st, params, f, opts);
    traj.stages.push_back(std::move(stage));
    st = std::move(next);
  }
  return traj;
}

namespace {

struct StageCtx {
  ScorerBatchCache cache;
  Eigen::ArrayX2d coords_in;
  std::vector<TransformRec> tf;
  TiouLossResult tiou_loss;
  OffsetLossResult off_loss;
};

}  // namespace

ObjectiveResult refinement_objective(
    const ScorerParams& params, const FeatureSequence& f,
    const SampleSet& samples, const std::vector<Segment>& gts,
    const ObjectiveOptions& options,
    const std::vector<std::vector<TargetAssignment>>* frozen_targets,
    ScorerParams* grads) {
  const int m_total = options.iterations;
  if (m_total < 1)
    throw std::invalid_argument("refinement_objective: iterations must be >= 1");
  if (frozen_targets && static_cast<int>(frozen_targets->size()) != m_total)
    throw std::invalid_argument("refinement_objective: frozen target stages mismatch");

  const int n = static_cast<int>(samples.size());
  const double dur = f.duration();
  const double spf = f.grid().step() / options.frames_per_snippet;
  const std::vector<double> weights = stage_weights(options.alpha, m_total);

  ObjectiveResult res;
  res.stage_terms.resize(m_total);
  res.stage_targets.resize(m_total);
  res.trajectory.stages.resize(m_total);
  std::vector<StageCtx> ctx(m_total);

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, params.cfg.cell_dim);
  Eigen::ArrayX2d coords(n, 2);
  for (int i = 0; i < n; ++i) {
    coords(i, 0) = samples.points[i].segment.start;
    coords(i, 1) = samples.points[i].segment.end;
  }

  for (int m = 0; m < m_total; ++m) {
    StageCtx& c = ctx[m];
    c.coords_in = coords;
    scorer_forward_batch(params, f, coords, h, c.cache);

    res.stage_targets[m] =
        frozen_targets ? (*frozen_targets)[m]
                       : assign_targets(coords_to_segments(coords), gts,
                                        options.tau);

    const auto& p1 = c.cache.p1;
    const auto& p2 = c.cache.p2;
    c.tiou_loss = loss_tiou({p1.data(), static_cast<std::size_t>(p1.size())},
                            {p2.data(), static_cast<std::size_t>(p2.size())},
                            res.stage_targets[m], options.lambda1);
    const Eigen::MatrixXd offsets = c.cache.y.rightCols(2);
    const std::vector<OffsetPair> off_pairs = offsets_to_pairs(offsets);
    c.off_loss = loss_offset(off_pairs, res.stage_targets[m],
                             options.offset_positives_only);

    res.stage_terms[m] = {c.tiou_loss.bce, c.tiou_loss.mse, c.off_loss.value};
    res.value += weights[m] * (c.tiou_loss.bce +
                               options.lambda1 * c.tiou_loss.mse +
                               options.lambda2 * c.off_loss.value);

    StageOutput& stage = res.trajectory.stages[m];
    stage.coords_in = coords;
    stage.p1 = p1;
    stage.p2 = p2;
    stage.offsets = offsets;
    apply_stage_transform(coords, offsets, dur, spf, stage.coords_out, &c.tf);

    coords = stage.coords_out;
    h = c.cache.h_out;
  }

  if (!grads) return res;

  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, params.cfg.cell_dim);
  Eigen::ArrayX2d dx = Eigen::ArrayX2d::Zero(n, 2);
  for (int m = m_total - 1; m >= 0; --m) {
    StageCtx& c = ctx[m];
    const double w = weights[m];

    Eigen::VectorXd d_p1(n), d_p2(n);
    for (int i = 0; i < n; ++i) {
      d_p1(i) = w * c.tiou_loss.d_p1[i];
      d_p2(i) = w * c.tiou_loss.d_p2[i];
    }
    Eigen::MatrixXd d_off(n, 2);
    for (int i = 0; i < n; ++i) {
      d_off(i, 0) = w * options.lambda2 * c.off_loss.d_pred[i].delta_start;
      d_off(i, 1) = w * options.lambda2 * c.off_loss.d_pred[i].delta_end;
    }

    Eigen::ArrayX2d dx_through_tf = Eigen::ArrayX2d::Zero(n, 2);
    if (!options.stop_gradient_coords) {
      for (int i = 0; i < n; ++i) {
        double dxs, dxe, dds, dde;
        transform_backward(c.tf[i], dx(i, 0), dx(i, 1), dxs, dxe, dds, dde);
        d_off(i, 0) += dds;
        d_off(i, 1) += dde;
        dx_through_tf(i, 0) = dxs;
        dx_through_tf(i, 1) = dxe;
      }
    }

    Eigen::MatrixXd dh_in;
    Eigen::ArrayX2d d_coords_cond;
    scorer_backward_batch(params, c.cache, d_p1, d_p2, d_off, dh, *grads,
                          &dh_in,
                          options.stop_gradient_coords ? nullptr
                                                       : &d_coords_cond);
    dh = std::move(dh_in);
    if (options.stop_gradient_coords)
      dx.setZero();
    else
      dx = dx_through_tf + d_coords_cond;
  }
  return res;
}

}  // namespace tal
