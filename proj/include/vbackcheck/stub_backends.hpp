#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vbackcheck/backends.hpp"

namespace vbackcheck::backends {

// Deterministic in-process stand-ins for the model roles. Each stub is a
// pure function of its lookup table plus a declared default. In strict mode
// a lookup miss raises ConfigError instead of falling back to the default.
//
// Table files are JSONL, one entry per line; blank lines are ignored. A
// line of the form {"default": ...} declares the fallback.

/// Keys on (image id, normalize_query(query)).
///   {"image_id":"img1","query":"the red car","token":"SEG","mask":{RLE}}
///   {"image_id":"img1","query":"an elephant","token":"REJ","explanation":"..."}
///   {"default":{"token":"REJ","explanation":"..."}}
class StubGrounding final : public GroundingBackend {
 public:
  explicit StubGrounding(bool strict = true) : strict_(strict) {}

  static StubGrounding from_jsonl(const std::filesystem::path& path, bool strict);

  void add(const std::string& image_id, std::string_view query, GroundingResponse response);
  void set_default(GroundingResponse response) { default_ = std::move(response); }

  GroundingResponse ground(const GroundingRequest& req) const override;

 private:
  bool strict_;
  std::map<std::pair<std::string, std::string>, GroundingResponse> table_;
  std::optional<GroundingResponse> default_;
};

///   {"image":"img1#fg","text":"a cat","score":0.7}
///   {"default":0.0}
class StubScorer final : public ScorerBackend {
 public:
  explicit StubScorer(bool strict = false) : strict_(strict) {}

  static StubScorer from_jsonl(const std::filesystem::path& path, bool strict);

  void add(const std::string& image_label, const std::string& text, double score);
  void set_default(double score) { default_ = score; }

  double score_image_text(const ScorerRequest& req) const override;

 private:
  bool strict_;
  std::map<std::pair<std::string, std::string>, double> table_;
  std::optional<double> default_;
};

/// Symmetric; sim(a, a) is 1.0 without a table entry.
///   {"a":"...","b":"...","similarity":0.9}
///   {"default":0.0}
class StubSimilarity final : public SimilarityBackend {
 public:
  explicit StubSimilarity(bool strict = false) : strict_(strict) {}

  static StubSimilarity from_jsonl(const std::filesystem::path& path, bool strict);

  void add(const std::string& a, const std::string& b, double similarity);
  void set_default(double similarity) { default_ = similarity; }

  double text_similarity(const SimilarityRequest& req) const override;

 private:
  bool strict_;
  std::map<std::pair<std::string, std::string>, double> table_;
  std::optional<double> default_;
};

/// Entries match when the template is equal and every key in "match" equals
/// the request slot of the same name; the first matching line wins. "text"
/// may be a string or a JSON object (emitted compactly).
///   {"template":"caption","match":{"proposal_id":"img1#0"},"text":"a red sedan"}
///   {"template":"inject","match":{"caption":"a red sedan"},"text":{"text":"...","type":"...","explanation":"..."}}
///
/// Defaults are declared per template ("template" omitted = any template):
///   {"default":{"rule":"fixed","text":"..."}}
///   {"default":{"rule":"suffix","slot":"caption","suffix":" ..."}}
///       -> slots[slot] + suffix
///   {"default":{"rule":"inject_suffix","slot":"caption","suffix":" ...","type":"...","explanation":"..."}}
///       -> {"text": slots[slot] + suffix, "type": type, "explanation": explanation}
///   Both suffix rules append " #<variant>" when slots carry a non-zero "variant".
class StubGeneration final : public GenerationBackend {
 public:
  struct Entry {
    std::string template_id;
    nlohmann::json match;
    std::string text;
  };

  struct DefaultRule {
    std::string rule;  // fixed | suffix | inject_suffix
    std::string text;
    std::string slot = "caption";
    std::string suffix;
    std::string type;
    std::string explanation;
  };

  explicit StubGeneration(bool strict = false) : strict_(strict) {}

  static StubGeneration from_jsonl(const std::filesystem::path& path, bool strict);

  void add(Entry entry) { entries_.push_back(std::move(entry)); }
  /// Empty template id applies to every template without its own default.
  void set_default(const std::string& template_id, DefaultRule rule);

  std::string generate(const GenerationRequest& req) const override;

 private:
  bool strict_;
  std::vector<Entry> entries_;
  std::map<std::string, DefaultRule> defaults_;
};

}  // namespace vbackcheck::backends
