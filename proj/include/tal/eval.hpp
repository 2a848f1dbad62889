#pragma once

#include <map>
#include <string>
#include <vector>

#include "tal/geometry.hpp"
#include "tal/postproc.hpp"

namespace tal {

struct GtInstance {
  std::string video;
  Segment segment;
  int label = 0;
};

/// Duration buckets used for sensitivity and false-negative profiling.
enum class LengthGroup { XS, S, M, L, XL };

const char* length_group_name(LengthGroup g);
LengthGroup length_group_of(double length_seconds);

struct EvalReport {
  std::map<double, double> per_threshold_map;
  double average_map = 0.0;
  std::map<LengthGroup, double> per_group_map;
  std::map<LengthGroup, double> per_group_fn_rate;
  double recall_at_q = 0.0;
  int recall_q = 0;
  double group_threshold = 0.0;
};

/// Average precision for a single class. Detections are ranked by score
/// (ties keep input order); each one greedily matches the unmatched ground
/// truth of its video with the highest tIoU when that tIoU reaches the
/// threshold. AP sums the precision at each true-positive rank, divided by
/// the ground-truth count.
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GtInstance>& gts, double threshold);

/// Per-threshold mean of per-class AP over the classes present in the
/// ground truth.
std::map<double, double> map_at(const std::vector<Detection>& dets,
                                const std::vector<GtInstance>& gts,
                                const std::vector<double>& thresholds);

/// Mean mAP over the ten thresholds 0.50, 0.55, ..., 0.95.
double average_map(const std::vector<Detection>& dets,
                   const std::vector<GtInstance>& gts);
std::vector<double> average_map_thresholds();

/// Per-length-group restricted mAP and false-negative rate at one
/// threshold. Detections are matched against the full ground-truth set
/// first; a group's mAP is then evaluated against that group's ground
/// truths with the detections matched to other groups removed. Groups
/// without ground truths are omitted.
struct GroupProfile {
  std::map<LengthGroup, double> map;
  std::map<LengthGroup, double> fn_rate;
};
GroupProfile length_group_profiles(const std::vector<Detection>& dets,
                                   const std::vector<GtInstance>& gts,
                                   double threshold);

/// Restricted mAP over a union of length groups (e.g. XS+S for a
/// short-actions summary), same protocol as length_group_profiles.
double group_union_map(const std::vector<Detection>& dets,
                       const std::vector<GtInstance>& gts, double threshold,
                       const std::vector<LengthGroup>& groups);

/// Fraction of ground truths matched by any of the top-q detections of
/// their video at the tIoU threshold, class-agnostic.
double recall_at(const std::vector<Detection>& dets,
                 const std::vector<GtInstance>& gts, double threshold, int q);

}  // namespace tal
