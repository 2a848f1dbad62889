#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tal/geometry.hpp"
#include "tal/model.hpp"
#include "tal/postproc.hpp"

namespace tal {

/// Data or file validation failure (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { train, val, test };
const char* split_name(Split s);

struct VideoRecord {
  std::string id;
  double duration = 0.0;
  std::vector<std::pair<Segment, int>> annotations;
  Split split = Split::train;
};

/// Annotation database plus its label vocabulary (sorted label names; the
/// integer class ids index into it).
struct Dataset {
  std::vector<VideoRecord> videos;
  std::vector<std::string> labels;

  std::vector<Segment> gt_segments(const VideoRecord& v) const;
};

struct SynthConfig {
  int num_videos = 250;
  int num_val = 50;            // trailing videos assigned to the val split
  int classes = 3;
  double duration_min = 200.0;
  double duration_max = 400.0;
  int segments_min = 1;
  int segments_max = 4;
  double length_min = 1.0;     // log-uniform length bounds, seconds
  double length_max = 200.0;
  int feature_dim = 16;
  int num_snippets = 64;
  double snr = 10.0;
  int frames_per_snippet = 8;
  std::uint64_t seed = 1;
};

/// Planted-segment corpus: per video, non-overlapping ground truths with a
/// log-uniform length distribution; features carry a per-class signature
/// inside each segment (weighted by snippet coverage), onset bumps at the
/// boundaries, and Gaussian noise at the configured SNR. Deterministic
/// under the seed. Throws DataError when requested segments cannot be
/// packed after bounded retries.
std::pair<Dataset, std::map<std::string, FeatureSequence>> generate_synthetic(
    const SynthConfig& config);

// --- file formats -----------------------------------------------------

/// Annotation file (versioned JSON, ActivityNet-style database schema).
void save_annotations(const std::string& path, const Dataset& dataset);
Dataset load_annotations(const std::string& path);

/// Detection results file (versioned JSON; label ids refer to the
/// companion annotation file's vocabulary; scores round-trip exactly).
void save_detections(const std::string& path,
                     const std::vector<Detection>& dets);
std::vector<Detection> load_detections(const std::string& path);

/// Feature file: magic "CTALFEAT", version, D, Ts, step, row-major 32-bit
/// floats. Values are promoted to double in memory; generated features are
/// quantized to float32 up front so the round-trip is exact.
void save_features(const std::string& path, const FeatureSequence& f);
FeatureSequence load_features(const std::string& path);

/// Optional per-video classification scores keyed by label name; absent
/// entries default to 1.0 downstream.
using ClassScores = std::map<std::string, std::map<std::string, double>>;
void save_class_scores(const std::string& path, const ClassScores& scores);
ClassScores load_class_scores(const std::string& path);

/// Synth settings as JSON over a base config; unknown keys are an error.
SynthConfig load_synth_config(const std::string& path, const SynthConfig& base);
std::string synth_config_to_json(const SynthConfig& cfg);

/// Write-temp-then-rename text write.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace tal
