#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vbackcheck/mask.hpp"
#include "vbackcheck/types.hpp"

namespace vbackcheck::evalkit {

// ------------------------------------------------------------ annotation

struct AnnotationRecord {
  std::string annotator_id;
  bool hallucinated = false;
  std::optional<HallucinationCategory> category;
  /// RFC 3339 UTC instant, e.g. "2024-05-01T12:00:00Z".
  std::string timestamp;

  /// Throws ValidationError (category iff hallucinated, non-empty ids).
  void validate() const;
  bool operator==(const AnnotationRecord&) const = default;
};

struct FinalLabel {
  bool hallucinated = false;
  std::optional<HallucinationCategory> category;
  /// Hallucinated, but no category won a strict plurality; needs escalation.
  bool tie_flag = false;

  bool operator==(const FinalLabel&) const = default;
};

/// Majority over exactly three records from distinct annotators. When no
/// category wins a strict plurality among the hallucinated votes, the
/// alphabetically first tied category is reported with tie_flag set.
/// Throws ValidationError on duplicates or a count other than 3.
FinalLabel majority_vote(const std::vector<AnnotationRecord>& annotations);

struct BenchSample {
  std::string id;
  std::string image;
  std::string description;
  std::string source_model;
  std::vector<AnnotationRecord> annotations;
  std::optional<FinalLabel> final_label;
};

nlohmann::ordered_json to_json(const AnnotationRecord& r);
/// Throws ValidationError naming the offending field.
AnnotationRecord annotation_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::ordered_json to_json(const FinalLabel& f);
nlohmann::ordered_json to_json(const BenchSample& s);
BenchSample bench_sample_from_json(const nlohmann::json& j);

/// Reads bench JSONL. Throws IngestionError with the 1-based line number.
std::vector<BenchSample> load_bench(const std::filesystem::path& path);
std::vector<BenchSample> parse_bench(std::string_view document);

// ---------------------------------------------------------------- ratios

/// num / den with the raw counts kept so shards can be merged.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  void add(bool hit) {
    ++den;
    if (hit) ++num;
  }
  Ratio& merge(const Ratio& o) {
    num += o.num;
    den += o.den;
    return *this;
  }
  /// Absent when den == 0.
  std::optional<double> value() const;
  bool operator==(const Ratio&) const = default;
};

/// {"num":n,"den":d,"value":v|null}
nlohmann::ordered_json to_json(const Ratio& r);

// ------------------------------------------------------ grounding metrics

enum class GroundTruth { Positive, Negative };

struct GroundingEvalItem {
  std::string query;
  GroundTruth gt_label = GroundTruth::Positive;
  std::optional<RleMask> gt_mask;
  Token pred_token = Token::Rej;
  std::optional<RleMask> pred_mask;
};

struct GroundingMetrics {
  Ratio n_acc;
  Ratio t_acc;
  /// Positives predicted SEG whose IoU reaches the threshold, when one is set.
  std::optional<Ratio> t_acc_at_iou;
  /// Sum of per-item IoU over scored items, kept as a sum for merging.
  double iou_sum = 0.0;
  std::uint64_t iou_items = 0;
  std::uint64_t cum_intersection = 0;
  std::uint64_t cum_union = 0;
  std::uint64_t errors = 0;

  std::optional<double> mean_iou() const;
  std::optional<double> cum_iou() const;
  GroundingMetrics& merge(const GroundingMetrics& o);
};

/// Per-item IoU: mask IoU for (Positive, SEG), 1.0 for (Negative, REJ),
/// 0.0 for a token mismatch. Items with unusable masks count as errors and
/// are excluded.
GroundingMetrics grounding_metrics(const std::vector<GroundingEvalItem>& items,
                                   std::optional<double> t_acc_iou_threshold = {});
nlohmann::ordered_json to_json(const GroundingMetrics& m);

// ------------------------------------------------------ detection metrics

struct DetectionEvalItem {
  bool gt_hallucinated = false;
  std::optional<HallucinationCategory> gt_category;
  bool pred_hallucinated = false;
};

/// "Neg" is the hallucinated class and "Pos" the clean class.
struct DetectionMetrics {
  Ratio acc;
  Ratio neg_acc;
  Ratio pos_acc;
  std::map<HallucinationCategory, Ratio> per_category;

  /// Mean of neg_acc and pos_acc when both are defined.
  std::optional<double> balanced_acc() const;
  DetectionMetrics& merge(const DetectionMetrics& o);
};

DetectionMetrics detection_metrics(const std::vector<DetectionEvalItem>& items);
nlohmann::ordered_json to_json(const DetectionMetrics& m);

enum class PopeSplit { Random, Popular, Adversarial };

struct PopeItem {
  bool gt_yes = false;
  bool pred_yes = false;
  PopeSplit split = PopeSplit::Random;
};

/// Accuracy over the items tagged with `split`; 0 items gives den == 0.
Ratio pope_accuracy(const std::vector<PopeItem>& items, PopeSplit split);

// ----------------------------------------------------------------- slices

enum class SliceBy { SourceModel, LengthBucket, Category };

/// Word-count buckets: 1-5, 6-10, 11-15, 16-20, 21-30, 31-50, 51-110.
/// Descriptions outside that range land in "0" or ">110".
std::string length_bucket(std::size_t words);

/// Predictions file: JSONL `{"id":str,"hallucinated":bool}`.
std::map<std::string, bool> load_predictions(const std::filesystem::path& path);
std::map<std::string, bool> parse_predictions(std::string_view document);

struct SliceReport {
  DetectionMetrics overall;
  std::map<std::string, DetectionMetrics> slices;
  /// Finalized samples with no prediction.
  std::uint64_t missing_predictions = 0;
};

/// Groups detection metrics over finalized samples that have a prediction.
/// Category slices group by the ground-truth category ("clean" for clean
/// samples).
SliceReport slice_report(const std::vector<BenchSample>& samples,
                         const std::map<std::string, bool>& predictions, SliceBy by);
nlohmann::ordered_json to_json(const SliceReport& r);

}  // namespace vbackcheck::evalkit
