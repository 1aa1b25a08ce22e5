#include "vbackcheck/stub_backends.hpp"

#include <fstream>
#include <functional>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::backends {

namespace {

// Calls `fn(json, line_no)` for every non-blank line of a JSONL table.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw ConfigError("stub table not found: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      fn(j, line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ProtocolError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
  return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

bool slots_match(const nlohmann::json& match, const nlohmann::json& slots) {
  if (match.is_null()) return true;
  for (const auto& [key, value] : match.items()) {
    const auto it = slots.find(key);
    if (it == slots.end() || *it != value) return false;
  }
  return true;
}

std::string slot_string(const nlohmann::json& slots, const std::string& name) {
  const auto it = slots.find(name);
  if (it == slots.end() || !it->is_string()) {
    throw ConfigError("generation stub default rule needs string slot \"" + name + "\"");
  }
  return it->get<std::string>();
}

std::string variant_tag(const nlohmann::json& slots) {
  const auto it = slots.find("variant");
  if (it == slots.end() || !it->is_number_integer() || it->get<int>() == 0) return "";
  return " #" + std::to_string(it->get<int>());
}

}  // namespace

// ---------------------------------------------------------------- grounding

StubGrounding StubGrounding::from_jsonl(const std::filesystem::path& path, bool strict) {
  StubGrounding stub(strict);
  for_each_line(path, [&](const nlohmann::json& j, std::size_t) {
    if (j.contains("default")) {
      stub.set_default(grounding_response_from_json(j.at("default"), j.dump()));
      return;
    }
    stub.add(j.at("image_id").get<std::string>(), j.at("query").get<std::string>(),
             grounding_response_from_json(j, j.dump()));
  });
  return stub;
}

void StubGrounding::add(const std::string& image_id, std::string_view query,
                        GroundingResponse response) {
  response.validate();
  table_.insert_or_assign({image_id, normalize_query(query)}, std::move(response));
}

GroundingResponse StubGrounding::ground(const GroundingRequest& req) const {
  req.image.validate();
  if (trim(req.query).empty()) throw ContractError("grounding query is empty");
  const auto it = table_.find({req.image.label(), normalize_query(req.query)});
  if (it != table_.end()) return it->second;
  if (strict_ || !default_) {
    throw ConfigError("grounding stub has no entry for (" + req.image.label() + ", \"" +
                      req.query + "\")");
  }
  return *default_;
}

// ------------------------------------------------------------------- scorer

StubScorer StubScorer::from_jsonl(const std::filesystem::path& path, bool strict) {
  StubScorer stub(strict);
  for_each_line(path, [&](const nlohmann::json& j, std::size_t) {
    if (j.contains("default")) {
      stub.set_default(j.at("default").get<double>());
      return;
    }
    stub.add(j.at("image").get<std::string>(), j.at("text").get<std::string>(),
             j.at("score").get<double>());
  });
  return stub;
}

void StubScorer::add(const std::string& image_label, const std::string& text, double score) {
  table_.insert_or_assign({image_label, text}, clamp_unit(score, "stub score"));
}

double StubScorer::score_image_text(const ScorerRequest& req) const {
  const auto it = table_.find({req.image_label, req.text});
  if (it != table_.end()) return it->second;
  if (strict_ || !default_) {
    throw ConfigError("scorer stub has no entry for (" + req.image_label + ", \"" + req.text +
                      "\")");
  }
  return clamp_unit(*default_, "stub default score");
}

// --------------------------------------------------------------- similarity

StubSimilarity StubSimilarity::from_jsonl(const std::filesystem::path& path, bool strict) {
  StubSimilarity stub(strict);
  for_each_line(path, [&](const nlohmann::json& j, std::size_t) {
    if (j.contains("default")) {
      stub.set_default(j.at("default").get<double>());
      return;
    }
    stub.add(j.at("a").get<std::string>(), j.at("b").get<std::string>(),
             j.at("similarity").get<double>());
  });
  return stub;
}

void StubSimilarity::add(const std::string& a, const std::string& b, double similarity) {
  table_.insert_or_assign(ordered(a, b), clamp_unit(similarity, "stub similarity"));
}

double StubSimilarity::text_similarity(const SimilarityRequest& req) const {
  if (req.a == req.b) return 1.0;
  const auto it = table_.find(ordered(req.a, req.b));
  if (it != table_.end()) return it->second;
  if (strict_ || !default_) {
    throw ConfigError("similarity stub has no entry for (\"" + req.a + "\", \"" + req.b + "\")");
  }
  return clamp_unit(*default_, "stub default similarity");
}

// --------------------------------------------------------------- generation

StubGeneration StubGeneration::from_jsonl(const std::filesystem::path& path, bool strict) {
  StubGeneration stub(strict);
  for_each_line(path, [&](const nlohmann::json& j, std::size_t) {
    const std::string tmpl = j.value("template", "");
    if (j.contains("default")) {
      const auto& d = j.at("default");
      DefaultRule rule;
      rule.rule = d.at("rule").get<std::string>();
      rule.text = d.value("text", "");
      rule.slot = d.value("slot", "caption");
      rule.suffix = d.value("suffix", "");
      rule.type = d.value("type", "");
      rule.explanation = d.value("explanation", "");
      stub.set_default(tmpl, std::move(rule));
      return;
    }
    const auto& text = j.at("text");
    stub.add({tmpl, j.value("match", nlohmann::json::object()),
              text.is_string() ? text.get<std::string>() : text.dump()});
  });
  return stub;
}

void StubGeneration::set_default(const std::string& template_id, DefaultRule rule) {
  if (rule.rule != "fixed" && rule.rule != "suffix" && rule.rule != "inject_suffix") {
    throw ConfigError("unknown generation stub rule \"" + rule.rule + "\"");
  }
  defaults_.insert_or_assign(template_id, std::move(rule));
}

std::string StubGeneration::generate(const GenerationRequest& req) const {
  for (const auto& e : entries_) {
    if (e.template_id == req.template_id && slots_match(e.match, req.slots)) return e.text;
  }
  const DefaultRule* rule = nullptr;
  if (auto it = defaults_.find(req.template_id); it != defaults_.end()) {
    rule = &it->second;
  } else if (auto any = defaults_.find(""); any != defaults_.end()) {
    rule = &any->second;
  }
  if (strict_ || rule == nullptr) {
    throw ConfigError("generation stub has no entry for template \"" + req.template_id +
                      "\" with slots " + req.slots.dump());
  }
  if (rule->rule == "fixed") return rule->text;
  const std::string perturbed = slot_string(req.slots, rule->slot) + rule->suffix + variant_tag(req.slots);
  if (rule->rule == "suffix") return perturbed;
  nlohmann::ordered_json out;
  out["text"] = perturbed;
  out["type"] = rule->type;
  out["explanation"] = rule->explanation;
  return out.dump();
}

}  // namespace vbackcheck::backends
