#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::evalkit {

namespace {

std::string required_string(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ValidationError(std::string("/") + key, "must be a string");
  }
  return it->get<std::string>();
}

template <typename Fn>
void for_each_jsonl(std::string_view document, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < document.size()) {
    std::size_t end = document.find('\n', start);
    if (end == std::string_view::npos) end = document.size();
    const auto line = trim(document.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw IngestionError(line_no, e.what());
    } catch (const FormatError& e) {
      throw IngestionError(line_no, e.what());
    }
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

nlohmann::ordered_json to_json(const BenchSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["image"] = s.image;
  j["description"] = s.description;
  j["source_model"] = s.source_model;
  j["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : s.annotations) j["annotations"].push_back(to_json(a));
  if (s.final_label) {
    nlohmann::ordered_json f;
    f["hallucinated"] = s.final_label->hallucinated;
    f["category"] = s.final_label->category
                        ? nlohmann::ordered_json(std::string(to_string(*s.final_label->category)))
                        : nlohmann::ordered_json();
    j["final"] = f;
  } else {
    j["final"] = nullptr;
  }
  return j;
}

BenchSample bench_sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("/", "bench line must be an object");
  BenchSample s;
  s.id = required_string(j, "id");
  if (s.id.empty()) throw ValidationError("/id", "must be non-empty");
  s.image = required_string(j, "image");
  s.description = required_string(j, "description");
  s.source_model = required_string(j, "source_model");

  const auto anns = j.find("annotations");
  if (anns != j.end() && !anns->is_null()) {
    if (!anns->is_array()) throw ValidationError("/annotations", "must be an array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < anns->size(); ++i) {
      auto rec = annotation_from_json((*anns)[i], "/annotations/" + std::to_string(i));
      if (!seen.insert(rec.annotator_id).second) {
        throw ValidationError("/annotations/" + std::to_string(i), "duplicate annotator");
      }
      s.annotations.push_back(std::move(rec));
    }
  }

  const auto fin = j.find("final");
  if (fin != j.end() && !fin->is_null()) {
    if (!fin->is_object()) throw ValidationError("/final", "must be an object or null");
    FinalLabel f;
    const auto h = fin->find("hallucinated");
    if (h == fin->end() || !h->is_boolean()) throw ValidationError("/final/hallucinated", "must be a boolean");
    f.hallucinated = h->get<bool>();
    if (const auto c = fin->find("category"); c != fin->end() && !c->is_null()) {
      if (!c->is_string()) throw ValidationError("/final/category", "must be a string or null");
      f.category = category_from_string(c->get<std::string>());
    }
    if (f.hallucinated != f.category.has_value()) {
      throw ValidationError("/final/category", "must be present iff hallucinated");
    }
    if (s.annotations.size() == 3) f.tie_flag = majority_vote(s.annotations).tie_flag;
    s.final_label = f;
  }

  if (s.final_label.has_value() != (s.annotations.size() >= 3)) {
    throw ValidationError("/final", "must be present iff at least 3 annotations were collected");
  }
  return s;
}

std::vector<BenchSample> parse_bench(std::string_view document) {
  std::vector<BenchSample> out;
  std::set<std::string> ids;
  for_each_jsonl(document, [&](const nlohmann::json& j) {
    auto s = bench_sample_from_json(j);
    if (!ids.insert(s.id).second) throw ValidationError("/id", "duplicate sample id \"" + s.id + "\"");
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<BenchSample> load_bench(const std::filesystem::path& path) { return parse_bench(slurp(path)); }

std::map<std::string, bool> parse_predictions(std::string_view document) {
  std::map<std::string, bool> out;
  for_each_jsonl(document, [&](const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("/", "prediction line must be an object");
    const std::string id = required_string(j, "id");
    const auto h = j.find("hallucinated");
    if (h == j.end() || !h->is_boolean()) throw ValidationError("/hallucinated", "must be a boolean");
    if (!out.emplace(id, h->get<bool>()).second) {
      throw ValidationError("/id", "duplicate prediction for \"" + id + "\"");
    }
  });
  return out;
}

std::map<std::string, bool> load_predictions(const std::filesystem::path& path) {
  return parse_predictions(slurp(path));
}

std::string length_bucket(std::size_t words) {
  struct Bucket {
    std::size_t lo, hi;
    const char* name;
  };
  static constexpr std::array<Bucket, 7> kBuckets = {{{1, 5, "1-5"},
                                                      {6, 10, "6-10"},
                                                      {11, 15, "11-15"},
                                                      {16, 20, "16-20"},
                                                      {21, 30, "21-30"},
                                                      {31, 50, "31-50"},
                                                      {51, 110, "51-110"}}};
  for (const auto& b : kBuckets) {
    if (words >= b.lo && words <= b.hi) return b.name;
  }
  return words == 0 ? "0" : ">110";
}

SliceReport slice_report(const std::vector<BenchSample>& samples,
                         const std::map<std::string, bool>& predictions, SliceBy by) {
  SliceReport report;
  for (const auto& s : samples) {
    if (!s.final_label) continue;
    const auto pred = predictions.find(s.id);
    if (pred == predictions.end()) {
      ++report.missing_predictions;
      continue;
    }
    const DetectionMetrics one =
        detection_metrics({{s.final_label->hallucinated, s.final_label->category, pred->second}});
    std::string key;
    switch (by) {
      case SliceBy::SourceModel: key = s.source_model; break;
      case SliceBy::LengthBucket: key = length_bucket(word_count(s.description)); break;
      case SliceBy::Category:
        key = s.final_label->category ? std::string(to_string(*s.final_label->category)) : "clean";
        break;
    }
    report.overall.merge(one);
    report.slices[key].merge(one);
  }
  return report;
}

nlohmann::ordered_json to_json(const SliceReport& r) {
  nlohmann::ordered_json j;
  j["overall"] = to_json(r.overall);
  j["slices"] = nlohmann::ordered_json::object();
  for (const auto& [k, m] : r.slices) j["slices"][k] = to_json(m);
  j["missing_predictions"] = r.missing_predictions;
  return j;
}

}  // namespace vbackcheck::evalkit
