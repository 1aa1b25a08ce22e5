#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "vbackcheck/mask.hpp"

namespace vbackcheck {

enum class HallucinationCategory { ObjectLevel, AttributeLevel, RelationLevel };

/// "object" | "attribute" | "relation"
std::string_view to_string(HallucinationCategory c);
/// Throws FormatError for anything else.
HallucinationCategory category_from_string(std::string_view s);

/// The grounding model's decision token.
enum class Token { Seg, Rej };

std::string_view to_string(Token t);  // "SEG" | "REJ"
Token token_from_string(std::string_view s);

struct ObjectProposal {
  std::string id;
  std::string image_id;
  BBox bbox;
  RleMask mask;
};

/// Caption text before any image-text scoring has happened.
struct DraftCaption {
  std::string proposal_id;
  std::string text;
};

/// Caption that went through the foreground/background scorer.
struct Caption {
  std::string proposal_id;
  std::string text;
  double fg_score = 0.0;
  double bg_score = 0.0;

  /// Throws ContractError on empty text or a non-finite score.
  void validate() const;
};

enum class Decision { Grounded, Hallucinated, Error };

std::string_view to_string(Decision d);  // "grounded" | "hallucinated" | "error"

/// Outcome for one sentence of a checked response.
///
/// Grounded carries the SEG mask, Hallucinated carries the REJ explanation.
/// Error marks a sentence whose backend reply broke the protocol; it has
/// neither token nor mask and keeps the diagnostic in `error`.
struct Verdict {
  std::string sentence;
  Decision decision = Decision::Error;
  std::optional<RleMask> mask;
  std::optional<std::string> explanation;
  std::optional<Token> raw_token;
  std::optional<std::string> error;

  static Verdict grounded(std::string sentence, RleMask mask);
  static Verdict hallucinated(std::string sentence, std::string explanation);
  static Verdict failed(std::string sentence, std::string error);

  bool is_hallucinated() const noexcept { return decision == Decision::Hallucinated; }

  /// Throws ContractError when the decision/token/payload triple is inconsistent.
  void validate() const;
};

}  // namespace vbackcheck
