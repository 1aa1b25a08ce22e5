#include <algorithm>
#include <numeric>

#include "vbackcheck/rinstruct.hpp"

namespace vbackcheck::rinstruct {

std::vector<std::size_t> semantic_nms_indices(const std::vector<Caption>& captions,
                                              const backends::SimilarityBackend& sim,
                                              double threshold) {
  std::vector<std::size_t> order(captions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return captions[a].fg_score > captions[b].fg_score;
  });

  std::vector<bool> suppressed(captions.size(), false);
  std::vector<std::size_t> keep;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t ref = order[pos];
    if (suppressed[ref]) continue;
    keep.push_back(ref);
    for (std::size_t later = pos + 1; later < order.size(); ++later) {
      const std::size_t cand = order[later];
      if (suppressed[cand]) continue;
      if (sim.text_similarity({captions[ref].text, captions[cand].text}) >= threshold) {
        suppressed[cand] = true;
      }
    }
  }
  return keep;
}

std::vector<Caption> semantic_nms(const std::vector<Caption>& captions,
                                  const backends::SimilarityBackend& sim,
                                  const PipelineConfig& cfg) {
  std::vector<Caption> out;
  for (std::size_t i : semantic_nms_indices(captions, sim, cfg.nms_similarity_threshold)) {
    out.push_back(captions[i]);
  }
  return out;
}

}  // namespace vbackcheck::rinstruct
