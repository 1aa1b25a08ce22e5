#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "vbackcheck/mask.hpp"
#include "vbackcheck/types.hpp"

namespace vbackcheck::backends {

/// Either a registered image identifier or inline encoded image bytes.
struct ImageRef {
  std::optional<std::string> image_id;
  std::optional<std::string> image_bytes;

  static ImageRef by_id(std::string id) { return {std::move(id), std::nullopt}; }
  static ImageRef inline_bytes(std::string bytes) { return {std::nullopt, std::move(bytes)}; }

  /// Throws ContractError unless exactly one of the two is set.
  void validate() const;
  /// Identifier, or "inline" for inline images; used in logs and stub keys.
  std::string label() const;
};

struct GroundingRequest {
  ImageRef image;
  std::string query;
};

struct GroundingResponse {
  Token token = Token::Rej;
  std::optional<RleMask> mask;
  std::optional<std::string> explanation;

  static GroundingResponse seg(RleMask mask) { return {Token::Seg, std::move(mask), std::nullopt}; }
  static GroundingResponse rej(std::string why) { return {Token::Rej, std::nullopt, std::move(why)}; }

  /// SEG carries only a valid mask, REJ only a non-empty explanation.
  /// Throws ProtocolError otherwise.
  void validate() const;

  bool operator==(const GroundingResponse&) const = default;
};

/// Wire form: `{"token":"SEG","mask":{RLE}}` or `{"token":"REJ","explanation":str}`.
nlohmann::json to_json(const GroundingResponse& r);
/// Parses and validates; failures become ProtocolError carrying `raw`.
GroundingResponse grounding_response_from_json(const nlohmann::json& j, const std::string& raw);

/// Image-text alignment request. `image_label` names the image for stub
/// lookups (e.g. "img1#fg"); remote backends send the bytes.
struct ScorerRequest {
  std::string image_label;
  std::string image_bytes;
  std::string text;
};

struct SimilarityRequest {
  std::string a;
  std::string b;
};

struct GenerationRequest {
  std::string template_id;
  nlohmann::json slots = nlohmann::json::object();
};

class GroundingBackend {
 public:
  virtual ~GroundingBackend() = default;
  virtual GroundingResponse ground(const GroundingRequest& req) const = 0;
};

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  /// Normalized to [0, 1].
  virtual double score_image_text(const ScorerRequest& req) const = 0;
};

class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  /// In [0, 1].
  virtual double text_similarity(const SimilarityRequest& req) const = 0;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string generate(const GenerationRequest& req) const = 0;
};

/// The full set of model roles the pipeline and checker talk to.
struct BackendSet {
  std::shared_ptr<const GroundingBackend> grounding;
  std::shared_ptr<const ScorerBackend> scorer;
  std::shared_ptr<const SimilarityBackend> similarity;
  std::shared_ptr<const GenerationBackend> generation;
};

/// Rejects non-finite values with ProtocolError and clamps into [0, 1].
double clamp_unit(double value, std::string_view what);

/// Case-folded, NFC-normalized, whitespace-collapsed form of a query.
std::string normalize_query(std::string_view query);

}  // namespace vbackcheck::backends
