#include <algorithm>
#include <set>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"

namespace vbackcheck::evalkit {

void AnnotationRecord::validate() const {
  if (annotator_id.empty()) throw ValidationError("/annotator_id", "must be non-empty");
  if (hallucinated && !category) {
    throw ValidationError("/category", "required when hallucinated is true");
  }
  if (!hallucinated && category) {
    throw ValidationError("/category", "must be null when hallucinated is false");
  }
}

FinalLabel majority_vote(const std::vector<AnnotationRecord>& annotations) {
  if (annotations.size() != 3) {
    throw ValidationError("/annotations", "majority vote needs exactly 3 records, got " +
                                              std::to_string(annotations.size()));
  }
  std::set<std::string> seen;
  for (const auto& a : annotations) {
    a.validate();
    if (!seen.insert(a.annotator_id).second) {
      throw ValidationError("/annotations", "duplicate annotator \"" + a.annotator_id + "\"");
    }
  }

  const auto votes = std::count_if(annotations.begin(), annotations.end(),
                                   [](const AnnotationRecord& a) { return a.hallucinated; });
  FinalLabel out;
  out.hallucinated = votes >= 2;
  if (!out.hallucinated) return out;

  std::map<std::string_view, int> tally;  // keyed by name: attribute < object < relation
  for (const auto& a : annotations) {
    if (a.hallucinated) ++tally[to_string(*a.category)];
  }
  int best = 0;
  for (const auto& [name, n] : tally) best = std::max(best, n);
  int leaders = 0;
  for (const auto& [name, n] : tally) {
    if (n != best) continue;
    if (leaders++ == 0) out.category = category_from_string(name);
  }
  out.tie_flag = leaders > 1;
  return out;
}

nlohmann::ordered_json to_json(const AnnotationRecord& r) {
  nlohmann::ordered_json j;
  j["annotator_id"] = r.annotator_id;
  j["hallucinated"] = r.hallucinated;
  j["category"] = r.category ? nlohmann::ordered_json(std::string(to_string(*r.category)))
                             : nlohmann::ordered_json();
  j["timestamp"] = r.timestamp;
  return j;
}

AnnotationRecord annotation_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path.empty() ? "/" : path, "must be an object");
  AnnotationRecord r;
  const auto id = j.find("annotator_id");
  if (id == j.end() || !id->is_string()) throw ValidationError(path + "/annotator_id", "must be a string");
  r.annotator_id = id->get<std::string>();
  const auto h = j.find("hallucinated");
  if (h == j.end() || !h->is_boolean()) throw ValidationError(path + "/hallucinated", "must be a boolean");
  r.hallucinated = h->get<bool>();
  if (const auto c = j.find("category"); c != j.end() && !c->is_null()) {
    if (!c->is_string()) throw ValidationError(path + "/category", "must be a string or null");
    try {
      r.category = category_from_string(c->get<std::string>());
    } catch (const FormatError& e) {
      throw ValidationError(path + "/category", e.what());
    }
  }
  if (const auto t = j.find("timestamp"); t != j.end() && !t->is_null()) {
    if (!t->is_string()) throw ValidationError(path + "/timestamp", "must be an RFC 3339 string");
    r.timestamp = t->get<std::string>();
  }
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + e.field(), e.what());
  }
  return r;
}

nlohmann::ordered_json to_json(const FinalLabel& f) {
  nlohmann::ordered_json j;
  j["hallucinated"] = f.hallucinated;
  j["category"] = f.category ? nlohmann::ordered_json(std::string(to_string(*f.category)))
                             : nlohmann::ordered_json();
  j["tie"] = f.tie_flag;
  return j;
}

}  // namespace vbackcheck::evalkit
