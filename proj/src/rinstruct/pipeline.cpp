#include <algorithm>
#include <fstream>
#include <mutex>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/parallel.hpp"
#include "vbackcheck/rinstruct.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::rinstruct {

namespace {

constexpr std::string_view kPositiveResponse = "It is [SEG].";

std::string negative_response(const std::string& explanation) { return "[REJ] " + explanation; }

struct ImageResult {
  std::vector<InstructSample> a;
  std::vector<InstructSample> b;
  PipelineReport report;
};

InstructSample make_negative(std::string id, const ImageEntry& img, const NegativeRecord& neg,
                             std::vector<std::string> sources) {
  InstructSample s;
  s.id = std::move(id);
  s.image = img.image;
  s.query = neg.text;
  s.label = Label::Negative;
  s.response = negative_response(neg.explanation);
  s.hallucination_type = neg.hallucination_type;
  s.explanation = neg.explanation;
  s.provenance = {"injection", std::move(sources)};
  return s;
}

// Generates negatives_per_caption hallucinated variants of `base`.
void inject_all(const Caption& base, const std::vector<Caption>& context, const std::string& id_prefix,
                const ImageEntry& img, const std::string& source_id,
                const backends::GenerationBackend& gen, const PipelineConfig& cfg,
                std::vector<InstructSample>& sink, std::uint64_t& split_counter,
                PipelineReport& report) {
  for (int v = 0; v < cfg.negatives_per_caption; ++v) {
    std::variant<NegativeRecord, Dropped> outcome;
    try {
      outcome = inject_hallucination(base, context, gen, cfg, img.image_id, v);
    } catch (const ProtocolError&) {
      report.drop(drop::kBackendProtocol);
      continue;
    }
    if (auto* d = std::get_if<Dropped>(&outcome)) {
      report.drop(d->reason);
      continue;
    }
    const auto& neg = std::get<NegativeRecord>(outcome);
    sink.push_back(make_negative(id_prefix + "/neg" + std::to_string(v), img, neg, {source_id}));
    ++split_counter;
    ++report.negatives;
  }
}

ImageResult process_image(const ImageEntry& img, std::string_view proposals_jsonl,
                          const backends::BackendSet& be, const PipelineConfig& cfg) {
  ImageResult r;
  r.report.images = 1;

  std::optional<Image> image;
  try {
    image = load_image(img.path);
  } catch (const FormatError&) {
  }

  std::vector<ObjectProposal> proposals;
  if (image) {
    proposals = ingest_proposals(img.image_id, proposals_jsonl,
                                 std::make_pair(image->height, image->width));
  } else {
    proposals = ingest_proposals(img.image_id, proposals_jsonl);
  }
  r.report.proposed = proposals.size();
  if (!image) {
    for (std::size_t i = 0; i < proposals.size(); ++i) r.report.drop(drop::kImageDecode);
    return r;
  }

  // Quality control, keeping proposal indices alongside captions.
  std::vector<Caption> passed;
  std::vector<std::size_t> passed_index;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    try {
      auto drafted = caption_proposal(p, *be.generation, cfg);
      if (auto* d = std::get_if<Dropped>(&drafted)) {
        r.report.drop(d->reason);
        continue;
      }
      ++r.report.captioned;

      auto scored = fgbg_check(p, std::get<DraftCaption>(drafted), *image, *be.scorer);
      if (auto* d = std::get_if<Dropped>(&scored)) {
        r.report.drop(d->reason);
        continue;
      }
      ++r.report.fgbg_passed;

      auto consistent = consistency_filter(std::get<Caption>(scored), cfg);
      if (auto* d = std::get_if<Dropped>(&consistent)) {
        r.report.drop(d->reason);
        continue;
      }
      ++r.report.consistency_passed;
      passed.push_back(std::get<Caption>(std::move(consistent)));
      passed_index.push_back(i);
    } catch (const ProtocolError&) {
      r.report.drop(drop::kBackendProtocol);
    }
  }

  std::vector<std::size_t> keep;
  try {
    keep = semantic_nms_indices(passed, *be.similarity, cfg.nms_similarity_threshold);
  } catch (const ProtocolError&) {
    for (std::size_t i = 0; i < passed.size(); ++i) r.report.drop(drop::kBackendProtocol);
    return r;
  }
  for (std::size_t i = keep.size(); i < passed.size(); ++i) r.report.drop(drop::kNms);
  std::sort(keep.begin(), keep.end());  // back to proposal order
  r.report.kept = keep.size();

  std::vector<Caption> kept;
  for (std::size_t k : keep) kept.push_back(passed[k]);

  for (std::size_t n = 0; n < kept.size(); ++n) {
    const auto& cap = kept[n];
    const auto& proposal = proposals[passed_index[keep[n]]];

    InstructSample pos;
    pos.id = proposal.id + "/pos";
    pos.image = img.image;
    pos.query = cap.text;
    pos.label = Label::Positive;
    pos.mask = proposal.mask;
    pos.response = std::string(kPositiveResponse);
    pos.provenance = {"object_caption", {proposal.id}};
    r.a.push_back(std::move(pos));
    ++r.report.positives_a;

    std::vector<Caption> context;
    for (std::size_t m = 0; m < kept.size(); ++m) {
      if (m != n) context.push_back(kept[m]);
    }
    inject_all(cap, context, proposal.id, img, proposal.id, *be.generation, cfg, r.a,
               r.report.negatives_a, r.report);
  }

  if (kept.empty()) return r;

  // Holistic multi-object caption: one per image, no masks.
  nlohmann::json texts = nlohmann::json::array();
  std::vector<std::string> sources;
  for (const auto& c : kept) {
    texts.push_back(c.text);
    sources.push_back(c.proposal_id);
  }
  std::string holistic;
  try {
    holistic = std::string(trim(be.generation->generate(
        {cfg.templates.holistic, {{"image_id", img.image_id}, {"captions", texts}}})));
  } catch (const ProtocolError&) {
    r.report.drop(drop::kBackendProtocol);
    return r;
  }
  if (holistic.empty()) {
    r.report.drop(drop::kEmptyHolistic);
    return r;
  }
  ++r.report.holistic_captions;

  const std::string holistic_id = img.image_id + "/holistic";
  InstructSample pos;
  pos.id = holistic_id + "/pos";
  pos.image = img.image;
  pos.query = holistic;
  pos.label = Label::Positive;
  pos.response = std::string(kPositiveResponse);
  pos.provenance = {"holistic_caption", sources};
  r.b.push_back(std::move(pos));
  ++r.report.positives_b;

  const Caption holistic_caption{holistic_id, holistic, 0.0, 0.0};
  inject_all(holistic_caption, kept, holistic_id, img, holistic_id, *be.generation, cfg, r.b,
             r.report.negatives_b, r.report);
  return r;
}

}  // namespace

PipelineReport& PipelineReport::merge(const PipelineReport& o) {
  images += o.images;
  proposed += o.proposed;
  captioned += o.captioned;
  fgbg_passed += o.fgbg_passed;
  consistency_passed += o.consistency_passed;
  kept += o.kept;
  negatives += o.negatives;
  holistic_captions += o.holistic_captions;
  positives_a += o.positives_a;
  negatives_a += o.negatives_a;
  positives_b += o.positives_b;
  negatives_b += o.negatives_b;
  for (const auto& [k, v] : o.drop_reasons) drop_reasons[k] += v;
  return *this;
}

nlohmann::ordered_json to_json(const PipelineReport& r) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  j["proposed"] = r.proposed;
  j["captioned"] = r.captioned;
  j["fgbg_passed"] = r.fgbg_passed;
  j["consistency_passed"] = r.consistency_passed;
  j["kept"] = r.kept;
  j["negatives"] = r.negatives;
  j["holistic_captions"] = r.holistic_captions;
  j["rinstruct_a"] = {{"positives", r.positives_a}, {"negatives", r.negatives_a}};
  j["rinstruct_b"] = {{"positives", r.positives_b}, {"negatives", r.negatives_b}};
  j["drop_reasons"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.drop_reasons) j["drop_reasons"][k] = v;
  return j;
}

PipelineOutput run_pipeline(const std::vector<ImageEntry>& images, std::string_view proposals_jsonl,
                            const backends::BackendSet& backends, const PipelineConfig& cfg) {
  cfg.validate();
  if (!backends.generation || !backends.scorer || !backends.similarity) {
    throw ConfigError("pipeline needs generation, scorer and similarity backends");
  }

  std::vector<const ImageEntry*> ordered;
  for (const auto& img : images) ordered.push_back(&img);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const ImageEntry* a, const ImageEntry* b) { return a->image_id < b->image_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->image_id == ordered[i - 1]->image_id) {
      throw ConfigError("duplicate image_id \"" + ordered[i]->image_id + "\" in image set");
    }
  }

  std::vector<ImageResult> results(ordered.size());
  parallel_for(ordered.size(), cfg.max_in_flight, [&](std::size_t i) {
    results[i] = process_image(*ordered[i], proposals_jsonl, backends, cfg);
  });

  PipelineOutput out;
  for (auto& r : results) {
    for (auto& s : r.a) {
      s.validate(true);
      out.rinstruct_a.push_back(std::move(s));
    }
    for (auto& s : r.b) {
      s.validate(false);
      out.rinstruct_b.push_back(std::move(s));
    }
    out.report.merge(r.report);
  }
  return out;
}

std::vector<ImageEntry> load_image_set(const std::filesystem::path& jsonl,
                                       const std::filesystem::path& base) {
  std::ifstream in(jsonl);
  if (!in) throw ConfigError("image set not found: " + jsonl.string());
  std::vector<ImageEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ImageEntry e;
      e.image_id = j.at("image_id").get<std::string>();
      e.image = j.at("path").get<std::string>();
      const std::filesystem::path p(e.image);
      e.path = p.is_absolute() ? p : base / p;
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_output(const PipelineOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_jsonl = [&](const std::vector<InstructSample>& samples, const char* name) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    for (const auto& s : samples) f << to_json(s).dump() << '\n';
    if (!f) throw Error("failed writing " + (dir / name).string());
  };
  write_jsonl(out.rinstruct_a, "rinstruct_a.jsonl");
  write_jsonl(out.rinstruct_b, "rinstruct_b.jsonl");
  std::ofstream f(dir / "report.json", std::ios::binary | std::ios::trunc);
  f << to_json(out.report).dump(2) << '\n';
  if (!f) throw Error("failed writing report.json");
}

}  // namespace vbackcheck::rinstruct
