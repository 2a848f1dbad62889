#include "tal/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace tal {

const char* length_group_name(LengthGroup g) {
  switch (g) {
    case LengthGroup::XS: return "XS";
    case LengthGroup::S: return "S";
    case LengthGroup::M: return "M";
    case LengthGroup::L: return "L";
    case LengthGroup::XL: return "XL";
  }
  return "?";
}

LengthGroup length_group_of(double length_seconds) {
  if (length_seconds <= 30.0) return LengthGroup::XS;
  if (length_seconds <= 60.0) return LengthGroup::S;
  if (length_seconds <= 120.0) return LengthGroup::M;
  if (length_seconds <= 180.0) return LengthGroup::L;
  return LengthGroup::XL;
}

namespace {

std::vector<std::size_t> rank_by_score(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });
  return order;
}

// Greedy score-ordered matching within one class. Returns, per detection,
// the matched ground-truth index (or npos) and marks matched ground truths.
std::vector<std::size_t> greedy_match(const std::vector<Detection>& dets,
                                      const std::vector<GtInstance>& gts,
                                      double threshold,
                                      std::vector<bool>& gt_matched) {
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::map<std::string, std::vector<std::size_t>> gts_by_video;
  for (std::size_t i = 0; i < gts.size(); ++i)
    gts_by_video[gts[i].video].push_back(i);
  gt_matched.assign(gts.size(), false);
  std::vector<std::size_t> det_match(dets.size(), npos);
  for (std::size_t rank : rank_by_score(dets)) {
    const Detection& d = dets[rank];
    auto it = gts_by_video.find(d.video);
    if (it == gts_by_video.end()) continue;
    double best = -1.0;
    std::size_t best_gt = npos;
    for (std::size_t gi : it->second) {
      if (gt_matched[gi]) continue;
      const double t = tiou(d.segment, gts[gi].segment);
      if (t > best) {
        best = t;
        best_gt = gi;
      }
    }
    if (best_gt != npos && best >= threshold) {
      gt_matched[best_gt] = true;
      det_match[rank] = best_gt;
    }
  }
  return det_match;
}

std::vector<int> classes_present(const std::vector<GtInstance>& gts) {
  std::set<int> s;
  for (const auto& g : gts) s.insert(g.label);
  return {s.begin(), s.end()};
}

template <class DetPred, class GtPred>
double class_mean_ap(const std::vector<Detection>& dets,
                     const std::vector<GtInstance>& gts, double threshold,
                     DetPred det_keep, GtPred gt_keep) {
  std::vector<GtInstance> kept_gts;
  for (const auto& g : gts)
    if (gt_keep(g)) kept_gts.push_back(g);
  const std::vector<int> classes = classes_present(kept_gts);
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (int c : classes) {
    std::vector<Detection> cd;
    for (const auto& d : dets)
      if (d.label == c && det_keep(d)) cd.push_back(d);
    std::vector<GtInstance> cg;
    for (const auto& g : kept_gts)
      if (g.label == c) cg.push_back(g);
    sum += average_precision(cd, cg, threshold);
  }
  return sum / classes.size();
}

}  // namespace

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GtInstance>& gts,
                         double threshold) {
  if (gts.empty()) return 0.0;
  std::vector<bool> gt_matched;
  const auto det_match = greedy_match(dets, gts, threshold, gt_matched);
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t rank : rank_by_score(dets)) {
    ++seen;
    if (det_match[rank] != npos) {
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(seen);
    }
  }
  return ap / static_cast<double>(gts.size());
}

std::map<double, double> map_at(const std::vector<Detection>& dets,
                                const std::vector<GtInstance>& gts,
                                const std::vector<double>& thresholds) {
  std::map<double, double> out;
  for (double thr : thresholds)
    out[thr] = class_mean_ap(dets, gts, thr,
                             [](const Detection&) { return true; },
                             [](const GtInstance&) { return true; });
  return out;
}

std::vector<double> average_map_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(0.5 + 0.05 * k);
  return t;
}

double average_map(const std::vector<Detection>& dets,
                   const std::vector<GtInstance>& gts) {
  const auto per = map_at(dets, gts, average_map_thresholds());
  double sum = 0.0;
  for (const auto& [thr, v] : per) sum += v;
  return sum / per.size();
}

GroupProfile length_group_profiles(const std::vector<Detection>& dets,
                                   const std::vector<GtInstance>& gts,
                                   double threshold) {
  GroupProfile out;
  // Full-set matching, per class, determines FN rates and which detections
  // belong to which group.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> det_group_gt(dets.size(), npos);
  std::vector<bool> matched_all(gts.size(), false);
  for (int c : classes_present(gts)) {
    std::vector<Detection> cd;
    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].label == c) {
        cd.push_back(dets[i]);
        det_idx.push_back(i);
      }
    std::vector<GtInstance> cg;
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gts[i].label == c) {
        cg.push_back(gts[i]);
        gt_idx.push_back(i);
      }
    std::vector<bool> gm;
    const auto dm = greedy_match(cd, cg, threshold, gm);
    for (std::size_t i = 0; i < cg.size(); ++i)
      if (gm[i]) matched_all[gt_idx[i]] = true;
    for (std::size_t i = 0; i < cd.size(); ++i)
      if (dm[i] != npos) det_group_gt[det_idx[i]] = gt_idx[dm[i]];
  }

  std::map<LengthGroup, std::size_t> group_total, group_matched;
  std::vector<LengthGroup> gt_group(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    gt_group[i] = length_group_of(gts[i].segment.length());
    group_total[gt_group[i]]++;
    if (matched_all[i]) group_matched[gt_group[i]]++;
  }

  for (const auto& [group, total] : group_total) {
    out.fn_rate[group] =
        1.0 - static_cast<double>(group_matched[group]) / total;
    // Restricted evaluation: this group's ground truths against the
    // detections not claimed by other groups.
    std::vector<Detection> rd;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const std::size_t g = det_group_gt[i];
      if (g == npos || gt_group[g] == group) rd.push_back(dets[i]);
    }
    std::vector<GtInstance> rg;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gt_group[i] == group) rg.push_back(gts[i]);
    out.map[group] = class_mean_ap(rd, rg, threshold,
                                   [](const Detection&) { return true; },
                                   [](const GtInstance&) { return true; });
  }
  return out;
}

double group_union_map(const std::vector<Detection>& dets,
                       const std::vector<GtInstance>& gts, double threshold,
                       const std::vector<LengthGroup>& groups) {
  auto in_union = [&](LengthGroup g) {
    return std::find(groups.begin(), groups.end(), g) != groups.end();
  };
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> det_group_gt(dets.size(), npos);
  for (int c : classes_present(gts)) {
    std::vector<Detection> cd;
    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].label == c) {
        cd.push_back(dets[i]);
        det_idx.push_back(i);
      }
    std::vector<GtInstance> cg;
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gts[i].label == c) {
        cg.push_back(gts[i]);
        gt_idx.push_back(i);
      }
    std::vector<bool> gm;
    const auto dm = greedy_match(cd, cg, threshold, gm);
    for (std::size_t i = 0; i < cd.size(); ++i)
      if (dm[i] != npos) det_group_gt[det_idx[i]] = gt_idx[dm[i]];
  }
  std::vector<Detection> rd;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::size_t g = det_group_gt[i];
    if (g == npos || in_union(length_group_of(gts[g].segment.length())))
      rd.push_back(dets[i]);
  }
  std::vector<GtInstance> rg;
  for (const auto& g : gts)
    if (in_union(length_group_of(g.segment.length()))) rg.push_back(g);
  return class_mean_ap(rd, rg, threshold,
                       [](const Detection&) { return true; },
                       [](const GtInstance&) { return true; });
}

double recall_at(const std::vector<Detection>& dets,
                 const std::vector<GtInstance>& gts, double threshold, int q) {
  if (gts.empty()) return 0.0;
  std::map<std::string, std::vector<Detection>> by_video;
  for (const auto& d : dets) by_video[d.video].push_back(d);
  std::map<std::string, std::vector<std::size_t>> gts_by_video;
  for (std::size_t i = 0; i < gts.size(); ++i)
    gts_by_video[gts[i].video].push_back(i);

  std::size_t matched = 0;
  std::vector<bool> gt_matched(gts.size(), false);
  for (auto& [video, vdets] : by_video) {
    auto it = gts_by_video.find(video);
    if (it == gts_by_video.end()) continue;
    const auto order = rank_by_score(vdets);
    const std::size_t limit = std::min<std::size_t>(order.size(), std::max(q, 0));
    for (std::size_t r = 0; r < limit; ++r) {
      const Detection& d = vdets[order[r]];
      double best = -1.0;
      std::size_t best_gt = static_cast<std::size_t>(-1);
      for (std::size_t gi : it->second) {
        if (gt_matched[gi]) continue;
        const double t = tiou(d.segment, gts[gi].segment);
        if (t > best) {
          best = t;
          best_gt = gi;
        }
      }
      if (best_gt != static_cast<std::size_t>(-1) && best >= threshold) {
        gt_matched[best_gt] = true;
        ++matched;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(gts.size());
}

}  // namespace tal
