#include "vbackcheck/types.hpp"

#include <cmath>

#include "vbackcheck/errors.hpp"

namespace vbackcheck {

std::string_view to_string(HallucinationCategory c) {
  switch (c) {
    case HallucinationCategory::ObjectLevel: return "object";
    case HallucinationCategory::AttributeLevel: return "attribute";
    case HallucinationCategory::RelationLevel: return "relation";
  }
  return "object";
}

HallucinationCategory category_from_string(std::string_view s) {
  if (s == "object") return HallucinationCategory::ObjectLevel;
  if (s == "attribute") return HallucinationCategory::AttributeLevel;
  if (s == "relation") return HallucinationCategory::RelationLevel;
  throw FormatError("unknown hallucination category \"" + std::string(s) + "\"");
}

std::string_view to_string(Token t) { return t == Token::Seg ? "SEG" : "REJ"; }

Token token_from_string(std::string_view s) {
  if (s == "SEG") return Token::Seg;
  if (s == "REJ") return Token::Rej;
  throw FormatError("token must be SEG or REJ, got \"" + std::string(s) + "\"");
}

void Caption::validate() const {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ContractError("caption text is empty");
  }
  if (!std::isfinite(fg_score) || !std::isfinite(bg_score)) {
    throw ContractError("caption scores must be finite");
  }
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Grounded: return "grounded";
    case Decision::Hallucinated: return "hallucinated";
    case Decision::Error: return "error";
  }
  return "error";
}

Verdict Verdict::grounded(std::string sentence, RleMask mask) {
  Verdict v;
  v.sentence = std::move(sentence);
  v.decision = Decision::Grounded;
  v.mask = std::move(mask);
  v.raw_token = Token::Seg;
  return v;
}

Verdict Verdict::hallucinated(std::string sentence, std::string explanation) {
  Verdict v;
  v.sentence = std::move(sentence);
  v.decision = Decision::Hallucinated;
  v.explanation = std::move(explanation);
  v.raw_token = Token::Rej;
  return v;
}

Verdict Verdict::failed(std::string sentence, std::string error) {
  Verdict v;
  v.sentence = std::move(sentence);
  v.decision = Decision::Error;
  v.error = std::move(error);
  return v;
}

void Verdict::validate() const {
  switch (decision) {
    case Decision::Grounded:
      if (raw_token != Token::Seg || !mask || explanation) {
        throw ContractError("grounded verdict needs SEG token and mask, no explanation");
      }
      break;
    case Decision::Hallucinated:
      if (raw_token != Token::Rej || mask || !explanation) {
        throw ContractError("hallucinated verdict needs REJ token and explanation, no mask");
      }
      break;
    case Decision::Error:
      if (raw_token || mask || explanation || !error) {
        throw ContractError("error verdict carries only an error message");
      }
      break;
  }
}

}  // namespace vbackcheck
