#include "tal/postproc.hpp"

#include <algorithm>
#include <numeric>

namespace tal {

double fuse_scores(double p_tiou, double p_cls) { return p_tiou * p_cls; }

std::vector<Detection> soft_nms(const std::vector<Detection>& dets,
                                double tiou_threshold, double score_floor) {
  std::vector<Detection> pool = dets;
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Detection> out;
  out.reserve(pool.size());
  std::vector<bool> used(pool.size(), false);
  for (;;) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      if (best == pool.size() || pool[i].score > pool[best].score) best = i;
    }
    if (best == pool.size()) break;
    used[best] = true;
    const Detection& kept = pool[best];
    if (kept.score >= score_floor) out.push_back(kept);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      const double t = tiou(kept.segment, pool[i].segment);
      if (t > tiou_threshold) pool[i].score *= (1.0 - t);
    }
  }
  return out;
}

std::vector<Detection> top_q(const std::vector<Detection>& dets, int q) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> out;
  const std::size_t keep = std::min<std::size_t>(dets.size(), std::max(q, 0));
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(dets[order[i]]);
  return out;
}

}  // namespace tal
