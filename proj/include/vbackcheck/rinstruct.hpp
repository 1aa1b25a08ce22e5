#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vbackcheck/backends.hpp"
#include "vbackcheck/image.hpp"
#include "vbackcheck/types.hpp"

namespace vbackcheck::rinstruct {

struct TemplateIds {
  std::string caption = "caption";
  std::string holistic = "holistic";
  std::string inject = "inject";
};

struct PipelineConfig {
  /// Captions whose foreground score falls below this are discarded.
  double consistency_threshold = 0.5;
  /// Semantic NMS suppresses captions at or above this similarity.
  double nms_similarity_threshold = 0.85;
  int max_in_flight = 1;
  int negatives_per_caption = 1;
  TemplateIds templates;

  /// Throws ConfigError.
  void validate() const;
};

/// Reason a caption or sample left the pipeline. Used as the report key.
namespace drop {
inline constexpr std::string_view kEmptyCaption = "empty_caption";
inline constexpr std::string_view kFgBg = "fgbg";
inline constexpr std::string_view kConsistency = "consistency";
inline constexpr std::string_view kNms = "nms";
inline constexpr std::string_view kInjectParse = "inject_parse";
inline constexpr std::string_view kNoPerturbation = "no_perturbation";
inline constexpr std::string_view kImageDecode = "image_decode";
inline constexpr std::string_view kBackendProtocol = "backend_protocol";
inline constexpr std::string_view kEmptyHolistic = "empty_holistic";
}  // namespace drop

struct Dropped {
  std::string reason;
  std::string detail;
};

enum class Label { Positive, Negative };

struct Provenance {
  std::string stage;
  std::vector<std::string> source_ids;
};

struct InstructSample {
  std::string id;
  std::string image;
  std::string query;
  Label label = Label::Positive;
  std::optional<RleMask> mask;
  std::string response;
  std::optional<std::string> hallucination_type;
  std::optional<std::string> explanation;
  Provenance provenance;

  /// Throws ContractError when the label/response/payload combination is
  /// inconsistent. `allow_mask` is false for the mask-free split.
  void validate(bool allow_mask) const;
};

/// Keys in output order: id, image, query, label, mask, response,
/// hallucination_type, explanation, provenance. Absent optionals are null.
nlohmann::ordered_json to_json(const InstructSample& s);

struct NegativeRecord {
  std::string text;
  std::string hallucination_type;
  std::string explanation;
};

// ------------------------------------------------------------------ stages

/// Parses proposal JSONL (`{"image_id","bbox":[x,y,w,h],"mask":{RLE}}` per
/// line) for one image; lines for other images are skipped. When image
/// dimensions are given, masks and boxes must fit them. Proposal ids are
/// "<image_id>#<index>" with the index counting this image's lines.
/// Throws IngestionError naming the 1-based line.
std::vector<ObjectProposal> ingest_proposals(std::string_view image_id, std::string_view document,
                                             std::optional<std::pair<int, int>> image_hw = {});

/// Asks the generator for a rich-context caption. Empty output is dropped.
std::variant<DraftCaption, Dropped> caption_proposal(const ObjectProposal& p,
                                                     const backends::GenerationBackend& gen,
                                                     const PipelineConfig& cfg);

/// Scores the caption against the foreground- and background-masked images
/// and keeps it only when fg > bg.
std::variant<Caption, Dropped> fgbg_check(const ObjectProposal& p, const DraftCaption& c,
                                          const Image& image,
                                          const backends::ScorerBackend& scorer);

/// Keeps the caption when fg_score >= threshold.
std::variant<Caption, Dropped> consistency_filter(const Caption& c, const PipelineConfig& cfg);

/// Greedy suppression with text similarity as overlap and fg_score as
/// confidence. Returns indices into `captions` in keep order.
std::vector<std::size_t> semantic_nms_indices(const std::vector<Caption>& captions,
                                              const backends::SimilarityBackend& sim,
                                              double threshold);

std::vector<Caption> semantic_nms(const std::vector<Caption>& captions,
                                  const backends::SimilarityBackend& sim,
                                  const PipelineConfig& cfg);

/// Asks the generator for a hallucinated variant. Unparseable output is
/// retried once; identical text is dropped.
std::variant<NegativeRecord, Dropped> inject_hallucination(const Caption& c,
                                                           const std::vector<Caption>& context,
                                                           const backends::GenerationBackend& gen,
                                                           const PipelineConfig& cfg,
                                                           const std::string& image_id = {},
                                                           int variant = 0);

// ---------------------------------------------------------------- pipeline

struct ImageEntry {
  std::string image_id;
  /// Relative path recorded in emitted samples.
  std::string image;
  /// Resolved location on disk.
  std::filesystem::path path;
};

struct PipelineReport {
  std::uint64_t images = 0;
  std::uint64_t proposed = 0;
  std::uint64_t captioned = 0;
  std::uint64_t fgbg_passed = 0;
  std::uint64_t consistency_passed = 0;
  std::uint64_t kept = 0;
  std::uint64_t negatives = 0;
  std::uint64_t holistic_captions = 0;
  std::uint64_t positives_a = 0;
  std::uint64_t negatives_a = 0;
  std::uint64_t positives_b = 0;
  std::uint64_t negatives_b = 0;
  std::map<std::string, std::uint64_t> drop_reasons;

  void drop(std::string_view reason) { ++drop_reasons[std::string(reason)]; }
  /// Associative and commutative.
  PipelineReport& merge(const PipelineReport& other);
  bool operator==(const PipelineReport&) const = default;
};

nlohmann::ordered_json to_json(const PipelineReport& r);

struct PipelineOutput {
  std::vector<InstructSample> rinstruct_a;
  std::vector<InstructSample> rinstruct_b;
  PipelineReport report;
};

/// Runs every stage for every image. Per-item failures are dropped and
/// counted; ConfigError and TransportError abort the run.
PipelineOutput run_pipeline(const std::vector<ImageEntry>& images, std::string_view proposals_jsonl,
                            const backends::BackendSet& backends, const PipelineConfig& cfg);

/// Reads `{"image_id":str,"path":str}` lines; paths resolve against `base`.
std::vector<ImageEntry> load_image_set(const std::filesystem::path& jsonl,
                                       const std::filesystem::path& base);

/// Writes rinstruct_a.jsonl, rinstruct_b.jsonl and report.json into `dir`.
void write_output(const PipelineOutput& out, const std::filesystem::path& dir);

}  // namespace vbackcheck::rinstruct
