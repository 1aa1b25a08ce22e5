#include <algorithm>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/rinstruct.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::rinstruct {

void PipelineConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1]");
  };
  unit(consistency_threshold, "consistency_threshold");
  unit(nms_similarity_threshold, "nms_similarity_threshold");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (negatives_per_caption < 0) throw ConfigError("negatives_per_caption must be >= 0");
  if (templates.caption.empty() || templates.holistic.empty() || templates.inject.empty()) {
    throw ConfigError("template ids must be non-empty");
  }
}

void InstructSample::validate(bool allow_mask) const {
  const bool has_seg = response.find("[SEG]") != std::string::npos;
  const bool has_rej = response.find("[REJ]") != std::string::npos;
  if (label == Label::Positive) {
    if (!has_seg || has_rej) throw ContractError(id + ": positive response must contain only [SEG]");
    if (hallucination_type || explanation) {
      throw ContractError(id + ": positive sample carries hallucination fields");
    }
  } else {
    if (!has_rej || has_seg) throw ContractError(id + ": negative response must contain only [REJ]");
    if (!hallucination_type || hallucination_type->empty() || !explanation || explanation->empty()) {
      throw ContractError(id + ": negative sample needs hallucination_type and explanation");
    }
    if (mask) throw ContractError(id + ": negative sample carries a mask");
  }
  if (mask && !allow_mask) throw ContractError(id + ": sample in mask-free split carries a mask");
}

nlohmann::ordered_json to_json(const InstructSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["image"] = s.image;
  j["query"] = s.query;
  j["label"] = s.label == Label::Positive ? "positive" : "negative";
  j["mask"] = s.mask ? nlohmann::ordered_json(rle_to_json(*s.mask)) : nlohmann::ordered_json();
  j["response"] = s.response;
  j["hallucination_type"] = s.hallucination_type ? nlohmann::ordered_json(*s.hallucination_type)
                                                 : nlohmann::ordered_json();
  j["explanation"] =
      s.explanation ? nlohmann::ordered_json(*s.explanation) : nlohmann::ordered_json();
  j["provenance"] = {{"stage", s.provenance.stage}, {"source_ids", s.provenance.source_ids}};
  return j;
}

std::vector<ObjectProposal> ingest_proposals(std::string_view image_id, std::string_view document,
                                             std::optional<std::pair<int, int>> image_hw) {
  std::vector<ObjectProposal> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < document.size()) {
    std::size_t end = document.find('\n', start);
    if (end == std::string_view::npos) end = document.size();
    const std::string_view line = trim(document.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;

    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw FormatError("proposal line must be an object");
      const auto& id = j.at("image_id");
      if (!id.is_string()) throw FormatError("\"image_id\" must be a string");
      if (id.get<std::string>() != image_id) continue;

      const auto& bbox = j.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4 ||
          !std::all_of(bbox.begin(), bbox.end(), [](const auto& v) { return v.is_number_integer(); })) {
        throw FormatError("\"bbox\" must be [x, y, w, h] integers");
      }
      ObjectProposal p;
      p.image_id = std::string(image_id);
      p.id = p.image_id + "#" + std::to_string(out.size());
      p.bbox = {bbox[0].get<int>(), bbox[1].get<int>(), bbox[2].get<int>(), bbox[3].get<int>()};
      p.mask = rle_from_json(j.at("mask"));
      if (image_hw) {
        const auto [h, w] = *image_hw;
        if (p.mask.height != h || p.mask.width != w) {
          throw FormatError("mask size " + std::to_string(p.mask.height) + "x" +
                            std::to_string(p.mask.width) + " does not match image " +
                            std::to_string(h) + "x" + std::to_string(w));
        }
        p.bbox.validate_within(h, w);
      } else {
        p.bbox.validate_within(p.mask.height, p.mask.width);
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(line_no, e.what());
    } catch (const FormatError& e) {
      throw IngestionError(line_no, e.what());
    }
  }
  return out;
}

std::variant<DraftCaption, Dropped> caption_proposal(const ObjectProposal& p,
                                                     const backends::GenerationBackend& gen,
                                                     const PipelineConfig& cfg) {
  backends::GenerationRequest req;
  req.template_id = cfg.templates.caption;
  req.slots = {{"image_id", p.image_id},
               {"proposal_id", p.id},
               {"bbox", {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h}}};
  std::string text = gen.generate(req);
  const auto trimmed = trim(text);
  if (trimmed.empty()) return Dropped{std::string(drop::kEmptyCaption), p.id};
  return DraftCaption{p.id, std::string(trimmed)};
}

std::variant<Caption, Dropped> fgbg_check(const ObjectProposal& p, const DraftCaption& c,
                                          const Image& image,
                                          const backends::ScorerBackend& scorer) {
  const FgBgImages parts = split_foreground(image, rle_decode(p.mask));
  Caption scored{c.proposal_id, c.text, 0.0, 0.0};
  scored.fg_score = scorer.score_image_text({p.image_id + "#fg", encode_pnm(parts.fg), c.text});
  scored.bg_score = scorer.score_image_text({p.image_id + "#bg", encode_pnm(parts.bg), c.text});
  scored.validate();
  if (!(scored.fg_score > scored.bg_score)) return Dropped{std::string(drop::kFgBg), p.id};
  return scored;
}

std::variant<Caption, Dropped> consistency_filter(const Caption& c, const PipelineConfig& cfg) {
  if (c.fg_score >= cfg.consistency_threshold) return c;
  return Dropped{std::string(drop::kConsistency), c.proposal_id};
}

std::variant<NegativeRecord, Dropped> inject_hallucination(const Caption& c,
                                                           const std::vector<Caption>& context,
                                                           const backends::GenerationBackend& gen,
                                                           const PipelineConfig& cfg,
                                                           const std::string& image_id,
                                                           int variant) {
  nlohmann::json ctx = nlohmann::json::array();
  for (const auto& other : context) ctx.push_back(other.text);
  backends::GenerationRequest req;
  req.template_id = cfg.templates.inject;
  req.slots = {{"image_id", image_id}, {"caption", c.text}, {"context", ctx}, {"variant", variant}};

  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string raw = gen.generate(req);
    nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
    const auto str_field = [&](const char* k) {
      return j.is_object() && j.contains(k) && j[k].is_string() &&
             !trim(j[k].get_ref<const std::string&>()).empty();
    };
    if (j.is_discarded() || !str_field("text") || !str_field("type") || !str_field("explanation")) {
      continue;
    }
    NegativeRecord rec{std::string(trim(j["text"].get<std::string>())), j["type"].get<std::string>(),
                       j["explanation"].get<std::string>()};
    if (rec.text == trim(c.text)) return Dropped{std::string(drop::kNoPerturbation), c.proposal_id};
    return rec;
  }
  return Dropped{std::string(drop::kInjectParse), c.proposal_id};
}

}  // namespace vbackcheck::rinstruct
