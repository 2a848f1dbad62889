#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tal/config.hpp"
#include "tal/data.hpp"
#include "tal/eval.hpp"
#include "tal/model.hpp"
#include "tal/refine.hpp"
#include "tal/supervision.hpp"

namespace tal {

/// Non-finite loss or gradient (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using FeatureStore = std::map<std::string, FeatureSequence>;

/// Deterministic sub-stream seed derivation (splitmix64 over the inputs),
/// so epochs and videos own independent reproducible generators.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

struct TrainState {
  ScorerParams params;
  AdamState opt;
  int next_epoch = 0;
  std::uint64_t run_seed = 0;
};

TrainState init_train_state(const RunConfig& cfg, int feature_dim);

double lr_at_epoch(const RunConfig& cfg, int epoch);

/// Per-video training batch per the configured sampler mix.
SampleSet build_training_samples(const VideoRecord& video,
                                 const FeatureSequence& f,
                                 const RunConfig& cfg, std::mt19937_64& rng,
                                 const std::vector<Segment>& gts);

/// One pass over the training split: per video, sample batch, refinement
/// objective, boundary loss, accumulate gradients, Adam step per
/// batch_size videos. Returns the epoch-mean loss decomposition.
LossReport train_epoch(TrainState& state, const Dataset& dataset,
                       const FeatureStore& features, const RunConfig& cfg,
                       int epoch);

/// Run epochs [state.next_epoch, cfg.epochs), appending one report each.
std::vector<LossReport> train_run(TrainState& state, const Dataset& dataset,
                                  const FeatureStore& features,
                                  const RunConfig& cfg);

// --- inference ----------------------------------------------------------

/// Grid-initialized refinement followed by score fusion, per-class Soft-NMS
/// and top-Q selection. `class_scores` maps label id to the video-level
/// classification score (all-1 when absent).
std::vector<Detection> detect_video(const ScorerParams& params,
                                    const FeatureSequence& f,
                                    const std::string& video_id,
                                    const RunConfig& cfg,
                                    const std::map<int, double>& class_scores);

std::vector<Detection> detect_dataset(const ScorerParams& params,
                                      const Dataset& dataset,
                                      const FeatureStore& features,
                                      const RunConfig& cfg,
                                      const ClassScores* class_scores,
                                      Split split);

/// Flatten a dataset split into eval ground-truth instances.
std::vector<GtInstance> gather_gt_instances(const Dataset& dataset,
                                            Split split);

}  // namespace tal
