#include <algorithm>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"

namespace vbackcheck::evalkit {

std::optional<double> Ratio::value() const {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json to_json(const Ratio& r) {
  nlohmann::ordered_json j;
  j["num"] = r.num;
  j["den"] = r.den;
  const auto v = r.value();
  j["value"] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
  return j;
}

// ------------------------------------------------------------- grounding

std::optional<double> GroundingMetrics::mean_iou() const {
  if (iou_items == 0) return std::nullopt;
  return iou_sum / static_cast<double>(iou_items);
}

std::optional<double> GroundingMetrics::cum_iou() const {
  if (cum_union == 0) return std::nullopt;
  return static_cast<double>(cum_intersection) / static_cast<double>(cum_union);
}

GroundingMetrics& GroundingMetrics::merge(const GroundingMetrics& o) {
  n_acc.merge(o.n_acc);
  t_acc.merge(o.t_acc);
  if (o.t_acc_at_iou) {
    if (!t_acc_at_iou) t_acc_at_iou = Ratio{};
    t_acc_at_iou->merge(*o.t_acc_at_iou);
  }
  iou_sum += o.iou_sum;
  iou_items += o.iou_items;
  cum_intersection += o.cum_intersection;
  cum_union += o.cum_union;
  errors += o.errors;
  return *this;
}

GroundingMetrics grounding_metrics(const std::vector<GroundingEvalItem>& items,
                                   std::optional<double> t_acc_iou_threshold) {
  GroundingMetrics m;
  if (t_acc_iou_threshold) m.t_acc_at_iou = Ratio{};

  for (const auto& item : items) {
    const bool positive = item.gt_label == GroundTruth::Positive;
    const bool seg = item.pred_token == Token::Seg;

    if (positive && seg) {
      Overlap o;
      try {
        if (!item.gt_mask || !item.pred_mask) throw FormatError("positive SEG item lacks a mask");
        o = mask_overlap(rle_decode(*item.gt_mask), rle_decode(*item.pred_mask));
      } catch (const Error&) {
        ++m.errors;
        continue;
      }
      const double iou = o.union_size == 0
                             ? 1.0
                             : static_cast<double>(o.intersection) / static_cast<double>(o.union_size);
      m.t_acc.add(true);
      if (m.t_acc_at_iou) m.t_acc_at_iou->add(iou >= *t_acc_iou_threshold);
      m.iou_sum += iou;
      ++m.iou_items;
      m.cum_intersection += o.intersection;
      m.cum_union += o.union_size;
    } else if (positive) {
      m.t_acc.add(false);
      if (m.t_acc_at_iou) m.t_acc_at_iou->add(false);
      ++m.iou_items;
    } else {
      m.n_acc.add(!seg);
      if (!seg) m.iou_sum += 1.0;
      ++m.iou_items;
    }
  }
  return m;
}

nlohmann::ordered_json to_json(const GroundingMetrics& m) {
  auto opt = [](std::optional<double> v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["mean_iou"] = {{"sum", m.iou_sum}, {"items", m.iou_items}, {"value", opt(m.mean_iou())}};
  j["cum_iou"] = {{"intersection", m.cum_intersection}, {"union", m.cum_union}, {"value", opt(m.cum_iou())}};
  j["n_acc"] = to_json(m.n_acc);
  j["t_acc"] = to_json(m.t_acc);
  j["t_acc_at_iou"] = m.t_acc_at_iou ? to_json(*m.t_acc_at_iou) : nlohmann::ordered_json();
  j["errors"] = m.errors;
  return j;
}

// ------------------------------------------------------------- detection

std::optional<double> DetectionMetrics::balanced_acc() const {
  const auto n = neg_acc.value();
  const auto p = pos_acc.value();
  if (!n || !p) return std::nullopt;
  return (*n + *p) / 2.0;
}

DetectionMetrics& DetectionMetrics::merge(const DetectionMetrics& o) {
  acc.merge(o.acc);
  neg_acc.merge(o.neg_acc);
  pos_acc.merge(o.pos_acc);
  for (const auto& [c, r] : o.per_category) per_category[c].merge(r);
  return *this;
}

DetectionMetrics detection_metrics(const std::vector<DetectionEvalItem>& items) {
  DetectionMetrics m;
  for (const auto& item : items) {
    if (item.gt_hallucinated != item.gt_category.has_value()) {
      throw ContractError("detection item: category must be present iff hallucinated");
    }
    const bool correct = item.pred_hallucinated == item.gt_hallucinated;
    m.acc.add(correct);
    if (item.gt_hallucinated) {
      m.neg_acc.add(correct);
      m.per_category[*item.gt_category].add(correct);
    } else {
      m.pos_acc.add(correct);
    }
  }
  return m;
}

nlohmann::ordered_json to_json(const DetectionMetrics& m) {
  nlohmann::ordered_json j;
  j["acc"] = to_json(m.acc);
  j["neg_acc"] = to_json(m.neg_acc);
  j["pos_acc"] = to_json(m.pos_acc);
  const auto b = m.balanced_acc();
  j["balanced_acc"] = b ? nlohmann::ordered_json(*b) : nlohmann::ordered_json();
  j["per_category"] = nlohmann::ordered_json::object();
  for (auto c : {HallucinationCategory::ObjectLevel, HallucinationCategory::AttributeLevel,
                 HallucinationCategory::RelationLevel}) {
    const auto it = m.per_category.find(c);
    j["per_category"][std::string(to_string(c))] = to_json(it == m.per_category.end() ? Ratio{} : it->second);
  }
  return j;
}

Ratio pope_accuracy(const std::vector<PopeItem>& items, PopeSplit split) {
  Ratio r;
  for (const auto& item : items) {
    if (item.split == split) r.add(item.gt_yes == item.pred_yes);
  }
  return r;
}

}  // namespace vbackcheck::evalkit
