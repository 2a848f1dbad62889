#pragma once

#include <string>
#include <vector>

#include "tal/geometry.hpp"

namespace tal {

struct Detection {
  Segment segment;
  double score = 0.0;
  int label = 0;
  std::string video;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Proposal-score fusion: product of the tIoU-branch score and the
/// classification score.
double fuse_scores(double p_tiou, double p_cls);

/// Linear-decay Soft-NMS over one (video, class) group: repeatedly keep the
/// highest-scored detection and rescale the rest by (1 - tIoU) whenever
/// their tIoU with it exceeds the threshold; detections falling below
/// score_floor are dropped. Output is sorted by final score descending,
/// ties by original position; segment coordinates are never modified.
std::vector<Detection> soft_nms(const std::vector<Detection>& dets,
                                double tiou_threshold,
                                double score_floor = 1e-4);

/// First q detections by final score; fewer if unavailable.
std::vector<Detection> top_q(const std::vector<Detection>& dets, int q);

}  // namespace tal
