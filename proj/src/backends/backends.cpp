#include "vbackcheck/backends.hpp"

#include <algorithm>
#include <cmath>

#include "vbackcheck/errors.hpp"

namespace vbackcheck::backends {

void ImageRef::validate() const {
  if (image_id.has_value() == image_bytes.has_value()) {
    throw ContractError("image reference needs exactly one of image_id or inline bytes");
  }
  if (image_id && image_id->empty()) throw ContractError("image_id is empty");
}

std::string ImageRef::label() const { return image_id ? *image_id : std::string("inline"); }

void GroundingResponse::validate() const {
  if (token == Token::Seg) {
    if (!mask) throw ProtocolError("SEG response without mask", "");
    if (explanation) throw ProtocolError("SEG response must not carry an explanation", "");
    try {
      mask->validate();
    } catch (const FormatError& e) {
      throw ProtocolError(std::string("SEG mask invalid: ") + e.what(), "");
    }
  } else {
    if (mask) throw ProtocolError("REJ response must not carry a mask", "");
    if (!explanation || explanation->empty()) {
      throw ProtocolError("REJ response needs a non-empty explanation", "");
    }
  }
}

nlohmann::json to_json(const GroundingResponse& r) {
  nlohmann::ordered_json j;
  j["token"] = std::string(to_string(r.token));
  if (r.mask) j["mask"] = rle_to_json(*r.mask);
  if (r.explanation) j["explanation"] = *r.explanation;
  return j;
}

GroundingResponse grounding_response_from_json(const nlohmann::json& j, const std::string& raw) {
  try {
    if (!j.is_object()) throw ProtocolError("grounding response is not an object", raw);
    const auto tok = j.find("token");
    if (tok == j.end() || !tok->is_string()) throw ProtocolError("missing \"token\"", raw);
    const std::string t = tok->get<std::string>();
    if (t != "SEG" && t != "REJ") throw ProtocolError("token is neither SEG nor REJ", raw);

    GroundingResponse r;
    r.token = token_from_string(t);
    if (auto m = j.find("mask"); m != j.end() && !m->is_null()) r.mask = rle_from_json(*m);
    if (auto e = j.find("explanation"); e != j.end() && !e->is_null()) {
      if (!e->is_string()) throw ProtocolError("explanation must be a string", raw);
      r.explanation = e->get<std::string>();
    }
    r.validate();
    return r;
  } catch (const ProtocolError& e) {
    if (!e.raw().empty() || raw.empty()) throw;
    throw ProtocolError(e.what(), raw);
  } catch (const FormatError& e) {
    throw ProtocolError(std::string("malformed grounding response: ") + e.what(), raw);
  }
}

double clamp_unit(double value, std::string_view what) {
  if (!std::isfinite(value)) {
    throw ProtocolError(std::string(what) + " is not finite", std::to_string(value));
  }
  return std::clamp(value, 0.0, 1.0);
}

}  // namespace vbackcheck::backends
