#include "vbackcheck/checker.hpp"

#include "vbackcheck/base64.hpp"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/parallel.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::checker {

namespace {
constexpr std::string_view kPlaceholder = "{sentence}";
}

void QueryTemplate::validate() const {
  if (id.empty()) throw ConfigError("query template id is empty");
  const auto first = pattern.find(kPlaceholder);
  if (first == std::string::npos || pattern.find(kPlaceholder, first + 1) != std::string::npos) {
    throw ConfigError("query template must contain {sentence} exactly once");
  }
}

std::string QueryTemplate::render(const std::string& sentence) const {
  std::string out = pattern;
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), sentence);
  return out;
}

CheckReport check(const CheckRequest& req, const backends::GroundingBackend& backend) {
  req.options.query_template.validate();
  req.image.validate();
  if (trim(req.response_text).empty()) throw ContractError("response text is empty");

  auto sentences = split_sentences(req.response_text);
  if (req.options.max_sentences > 0 && sentences.size() > req.options.max_sentences) {
    sentences.resize(req.options.max_sentences);
  }

  CheckReport report;
  report.template_id = req.options.query_template.id;
  report.verdicts.resize(sentences.size());
  parallel_for(sentences.size(), req.options.max_in_flight, [&](std::size_t i) {
    const std::string& s = sentences[i];
    try {
      auto reply = backend.ground({req.image, req.options.query_template.render(s)});
      reply.validate();
      report.verdicts[i] = reply.token == Token::Seg ? Verdict::grounded(s, std::move(*reply.mask))
                                                     : Verdict::hallucinated(s, std::move(*reply.explanation));
    } catch (const ProtocolError& e) {
      report.verdicts[i] = Verdict::failed(s, e.raw().empty() ? e.what() : std::string(e.what()) + ": " + e.raw());
    }
  });

  report.summary.n_sentences = report.verdicts.size();
  for (const auto& v : report.verdicts) {
    v.validate();
    if (v.decision == Decision::Hallucinated) ++report.summary.n_hallucinated;
    if (v.decision == Decision::Error) ++report.summary.n_errors;
  }
  report.summary.hallucinated = report.summary.n_hallucinated > 0;
  return report;
}

std::vector<BatchEntry> check_batch(const std::vector<CheckRequest>& requests,
                                    const backends::GroundingBackend& backend, int parallelism) {
  if (parallelism < 1) throw ContractError("parallelism must be >= 1");
  std::vector<BatchEntry> out(requests.size());
  parallel_for(requests.size(), parallelism, [&](std::size_t i) {
    try {
      out[i].report = check(requests[i], backend);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

nlohmann::ordered_json to_json(const CheckReport& r) {
  nlohmann::ordered_json j;
  j["verdicts"] = nlohmann::ordered_json::array();
  for (const auto& v : r.verdicts) {
    nlohmann::ordered_json vj;
    vj["sentence"] = v.sentence;
    vj["decision"] = std::string(to_string(v.decision));
    vj["mask"] = v.mask ? nlohmann::ordered_json(rle_to_json(*v.mask)) : nlohmann::ordered_json();
    vj["explanation"] = v.explanation ? nlohmann::ordered_json(*v.explanation) : nlohmann::ordered_json();
    if (v.error) vj["error"] = *v.error;
    j["verdicts"].push_back(std::move(vj));
  }
  j["summary"] = {{"n_sentences", r.summary.n_sentences},
                  {"n_hallucinated", r.summary.n_hallucinated},
                  {"n_errors", r.summary.n_errors},
                  {"hallucinated", r.summary.hallucinated}};
  j["template_id"] = r.template_id;
  return j;
}

CheckRequest check_request_from_json(const nlohmann::json& j, const CheckOptions& defaults) {
  if (!j.is_object()) throw ValidationError("/", "body must be a JSON object");
  CheckRequest req;
  req.options = defaults;

  const bool has_id = j.contains("image_id");
  const bool has_b64 = j.contains("image_b64");
  if (has_id == has_b64) throw ValidationError("/image_id", "exactly one of image_id or image_b64 is required");
  if (has_id) {
    if (!j["image_id"].is_string() || j["image_id"].get_ref<const std::string&>().empty()) {
      throw ValidationError("/image_id", "must be a non-empty string");
    }
    req.image = backends::ImageRef::by_id(j["image_id"].get<std::string>());
  } else {
    if (!j["image_b64"].is_string()) throw ValidationError("/image_b64", "must be a string");
    try {
      req.image = backends::ImageRef::inline_bytes(base64_decode(j["image_b64"].get<std::string>()));
    } catch (const FormatError& e) {
      throw ValidationError("/image_b64", e.what());
    }
  }

  if (!j.contains("response") || !j["response"].is_string()) {
    throw ValidationError("/response", "must be a string");
  }
  req.response_text = j["response"].get<std::string>();
  if (trim(req.response_text).empty()) throw ValidationError("/response", "must not be empty");

  if (j.contains("template_id")) {
    if (!j["template_id"].is_string()) throw ValidationError("/template_id", "must be a string");
    req.options.query_template.id = j["template_id"].get<std::string>();
  }
  if (j.contains("template")) {
    if (!j["template"].is_string()) throw ValidationError("/template", "must be a string");
    req.options.query_template.pattern = j["template"].get<std::string>();
  }
  try {
    req.options.query_template.validate();
  } catch (const ConfigError& e) {
    throw ValidationError("/template", e.what());
  }
  if (j.contains("max_sentences")) {
    const auto& m = j["max_sentences"];
    if (!m.is_number_integer() || m.get<std::int64_t>() < 0) {
      throw ValidationError("/max_sentences", "must be a non-negative integer");
    }
    req.options.max_sentences = j["max_sentences"].get<std::size_t>();
  }
  return req;
}

}  // namespace vbackcheck::checker
