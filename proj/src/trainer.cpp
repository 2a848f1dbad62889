#include "tal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tal/postproc.hpp"

namespace tal {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

TrainState init_train_state(const RunConfig& cfg, int feature_dim) {
  ScorerConfig sc;
  sc.feature_dim = feature_dim;
  sc.hidden_width = cfg.hidden_width;
  sc.hidden_layers = cfg.hidden_layers;
  sc.cell_dim = cfg.cell_dim;
  sc.boundary_hidden = cfg.boundary_hidden;
  sc.soi_bins = cfg.soi_bins;
  TrainState st;
  st.params = init_scorer(sc, mix_seed(cfg.seed, 0x1717, 0));
  st.opt = init_adam(st.params);
  st.next_epoch = 0;
  st.run_seed = cfg.seed;
  return st;
}

double lr_at_epoch(const RunConfig& cfg, int epoch) {
  return epoch >= cfg.lr_decay_epoch ? cfg.learning_rate / 10.0
                                     : cfg.learning_rate;
}

namespace {

// Deterministic subsample without replacement, keeping draw order.
void subsample_points(std::vector<SamplePoint>& points, int cap,
                      std::mt19937_64& rng) {
  if (cap <= 0 || static_cast<int>(points.size()) <= cap) return;
  for (int i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, points.size() - 1);
    std::swap(points[i], points[pick(rng)]);
  }
  points.resize(cap);
}

}  // namespace

SampleSet build_training_samples(const VideoRecord& video,
                                 const FeatureSequence& f,
                                 const RunConfig& cfg, std::mt19937_64& rng,
                                 const std::vector<Segment>& gts) {
  const TimeGrid grid = f.grid();
  SampleSet grid_s = grid_samples(grid);
  subsample_points(grid_s.points, cfg.grid_sample_cap, rng);

  SampleSet uni_s;
  uni_s.grid = grid;
  if (cfg.use_uniform_samples) {
    uni_s = uniform_samples(grid, rng);
    subsample_points(uni_s.points, cfg.uniform_sample_cap, rng);
  }

  SampleSet si_s;
  si_s.grid = grid;
  if (cfg.use_gt_local_samples && !gts.empty())
    si_s = scale_invariant_samples(gts, cfg.n_per_gt, grid, rng, cfg.kappa);

  return compose_training_batch(grid_s, uni_s, si_s);
}

LossReport train_epoch(TrainState& state, const Dataset& dataset,
                       const FeatureStore& features, const RunConfig& cfg,
                       int epoch) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dataset.videos.size(); ++i)
    if (dataset.videos[i].split == Split::train) order.push_back(i);
  if (order.empty()) throw DataError("train: no training videos");
  {
    std::mt19937_64 shuffle_rng(mix_seed(state.run_seed, epoch, 0x50f1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
  }

  const double lr = lr_at_epoch(cfg, epoch);
  ObjectiveOptions obj;
  obj.lambda1 = cfg.lambda1;
  obj.lambda2 = cfg.lambda2;
  obj.tau = cfg.tau;
  obj.alpha = cfg.alpha;
  obj.iterations = cfg.iterations;
  obj.frames_per_snippet = cfg.frames_per_snippet;
  obj.offset_positives_only = cfg.offset_positives_only;
  obj.stop_gradient_coords = cfg.stop_gradient_coords;

  ScorerParams grads = zeros_like(state.params);
  int in_batch = 0;
  LossReport epoch_sum;
  std::size_t video_count = 0;

  auto flush = [&](int batch_n) {
    if (batch_n == 0) return;
    grads.scale(1.0 / batch_n);
    grads.add_scaled(state.params, 2.0 * cfg.lambda3);
    adam_step(state.params, grads, state.opt, lr);
    grads.set_zero();
  };

  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const VideoRecord& video = dataset.videos[order[oi]];
    auto fit = features.find(video.id);
    if (fit == features.end())
      throw DataError("train: missing features for video " + video.id);
    const FeatureSequence& f = fit->second;
    if (std::abs(f.duration() - video.duration) >
        1e-6 * std::max(1.0, video.duration))
      throw DataError("train: feature/annotation duration mismatch for " +
                      video.id);

    std::mt19937_64 rng(mix_seed(state.run_seed, epoch, order[oi] + 1));
    const std::vector<Segment> gts = dataset.gt_segments(video);
    const SampleSet samples = build_training_samples(video, f, cfg, rng, gts);

    ObjectiveResult res = refinement_objective(state.params, f, samples, gts,
                                               obj, nullptr, &grads);

    BoundaryCache bc;
    boundary_forward(state.params, f, bc);
    const BoundaryTargets bt = boundary_targets(f.grid(), gts);
    const double sqn = state.params.squared_norm();
    NormLossResult norm = loss_norm(
        {bc.start_prob.data(), static_cast<std::size_t>(bc.start_prob.size())},
        {bc.end_prob.data(), static_cast<std::size_t>(bc.end_prob.size())},
        bt, sqn, cfg.lambda3);
    boundary_backward(state.params, f, bc, norm.d_start, norm.d_end, grads);

    const LossReport report =
        loss_total(res.stage_terms, norm.boundary, sqn, cfg.alpha, cfg.lambda1,
                   cfg.lambda2, cfg.lambda3);
    if (!std::isfinite(report.total))
      throw NumericalError("train: non-finite loss at video " + video.id);

    epoch_sum.bce += report.bce;
    epoch_sum.mse += report.mse;
    epoch_sum.offset += report.offset;
    epoch_sum.boundary += report.boundary;
    epoch_sum.l2 += report.l2;
    ++video_count;

    if (++in_batch == cfg.batch_size) {
      flush(in_batch);
      in_batch = 0;
    }
  }
  flush(in_batch);

  LossReport mean;
  const double inv = 1.0 / static_cast<double>(video_count);
  mean.bce = epoch_sum.bce * inv;
  mean.mse = epoch_sum.mse * inv;
  mean.offset = epoch_sum.offset * inv;
  mean.boundary = epoch_sum.boundary * inv;
  mean.l2 = epoch_sum.l2 * inv;
  mean.total = mean.bce + cfg.lambda1 * mean.mse + cfg.lambda2 * mean.offset +
               mean.boundary + cfg.lambda3 * mean.l2;
  return mean;
}

std::vector<LossReport> train_run(TrainState& state, const Dataset& dataset,
                                  const FeatureStore& features,
                                  const RunConfig& cfg) {
  std::vector<LossReport> log;
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    log.push_back(train_epoch(state, dataset, features, cfg, epoch));
    state.next_epoch = epoch + 1;
  }
  return log;
}

std::vector<Detection> detect_video(const ScorerParams& params,
                                    const FeatureSequence& f,
                                    const std::string& video_id,
                                    const RunConfig& cfg,
                                    const std::map<int, double>& class_scores) {
  if (params.cfg.feature_dim != f.dim())
    throw DataError("detect: checkpoint/feature dimension mismatch for " +
                    video_id);
  RefineOptions ro{cfg.iterations, cfg.frames_per_snippet};
  const SampleSet samples = grid_samples(f.grid());
  const RefineTrajectory traj =
      run_refinement(samples, params, f, cfg.iterations, ro);
  const StageOutput& last = traj.stages.back();

  std::vector<Detection> merged;
  for (const auto& [label, cls_score] : class_scores) {
    std::vector<Detection> dets;
    dets.reserve(last.coords_out.rows());
    for (Eigen::Index i = 0; i < last.coords_out.rows(); ++i) {
      const double proposal = last.p1(i) * last.p2(i);
      const double fused = fuse_scores(proposal, cls_score);
      if (fused < cfg.softnms_floor) continue;
      dets.push_back({Segment{last.coords_out(i, 0), last.coords_out(i, 1)},
                      fused, label, video_id});
    }
    std::vector<Detection> kept =
        soft_nms(dets, cfg.softnms_threshold, cfg.softnms_floor);
    merged.insert(merged.end(), kept.begin(), kept.end());
  }
  return top_q(merged, cfg.top_q);
}

std::vector<Detection> detect_dataset(const ScorerParams& params,
                                      const Dataset& dataset,
                                      const FeatureStore& features,
                                      const RunConfig& cfg,
                                      const ClassScores* class_scores,
                                      Split split) {
  std::vector<Detection> out;
  for (const auto& video : dataset.videos) {
    if (video.split != split) continue;
    auto fit = features.find(video.id);
    if (fit == features.end())
      throw DataError("detect: missing features for video " + video.id);
    std::map<int, double> scores;
    const std::map<std::string, double>* row = nullptr;
    if (class_scores) {
      auto it = class_scores->find(video.id);
      if (it != class_scores->end()) row = &it->second;
    }
    for (std::size_t label = 0; label < dataset.labels.size(); ++label) {
      if (!row) {
        scores[static_cast<int>(label)] = 1.0;
      } else {
        auto sit = row->find(dataset.labels[label]);
        scores[static_cast<int>(label)] = sit == row->end() ? 0.0 : sit->second;
      }
    }
    auto dets = detect_video(params, fit->second, video.id, cfg, scores);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

std::vector<GtInstance> gather_gt_instances(const Dataset& dataset,
                                            Split split) {
  std::vector<GtInstance> out;
  for (const auto& video : dataset.videos) {
    if (video.split != split) continue;
    for (const auto& [seg, label] : video.annotations)
      out.push_back({video.id, seg, label});
  }
  return out;
}

}  // namespace tal
