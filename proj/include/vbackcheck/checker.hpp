#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vbackcheck/backends.hpp"
#include "vbackcheck/types.hpp"

namespace vbackcheck::checker {

/// How a sentence becomes a grounding query. `pattern` must contain
/// "{sentence}" exactly once.
struct QueryTemplate {
  std::string id = "segment-region-v1";
  std::string pattern = "Please segment the region this sentence describes: {sentence}";

  std::string render(const std::string& sentence) const;
  /// Throws ConfigError.
  void validate() const;
};

struct CheckOptions {
  QueryTemplate query_template;
  /// 0 = no limit; otherwise only the first N sentences are checked.
  std::size_t max_sentences = 0;
  /// Concurrent grounding calls per request.
  int max_in_flight = 1;
};

struct CheckRequest {
  backends::ImageRef image;
  std::string response_text;
  CheckOptions options;
};

struct CheckSummary {
  std::size_t n_sentences = 0;
  std::size_t n_hallucinated = 0;
  std::size_t n_errors = 0;
  bool hallucinated = false;
};

struct CheckReport {
  std::vector<Verdict> verdicts;
  CheckSummary summary;
  std::string template_id;
};

/// Splits the response into sentences, grounds each templated sentence and
/// maps SEG to Grounded, REJ to Hallucinated. A protocol error on one
/// sentence becomes an Error verdict; ContractError on an empty response;
/// TransportError aborts the whole request.
CheckReport check(const CheckRequest& req, const backends::GroundingBackend& backend);

/// One slot per request, in request order: either a report or an error.
struct BatchEntry {
  std::optional<CheckReport> report;
  std::optional<std::string> error;
};

std::vector<BatchEntry> check_batch(const std::vector<CheckRequest>& requests,
                                    const backends::GroundingBackend& backend, int parallelism);

nlohmann::ordered_json to_json(const CheckReport& r);

/// Parses a CheckRequest body:
///   {"image_id":str | "image_b64":str, "response":str,
///    "template_id":str?, "template":str?, "max_sentences":int?}
/// Missing template fields fall back to `defaults`. Throws ValidationError.
CheckRequest check_request_from_json(const nlohmann::json& j, const CheckOptions& defaults);

}  // namespace vbackcheck::checker
