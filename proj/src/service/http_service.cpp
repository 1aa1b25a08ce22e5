#include "vbackcheck/http_service.hpp"

#include <chrono>
#include <ctime>

#include "httplib.h"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"

namespace vbackcheck::service {

namespace {

Reply json_reply(int status, const nlohmann::ordered_json& body) { return {status, body.dump()}; }

Reply error_reply(int status, const std::string& message, const std::string& field = {}) {
  nlohmann::ordered_json j;
  j["error"] = message;
  if (!field.empty()) j["field"] = field;
  return json_reply(status, j);
}

std::string utc_now_rfc3339() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ApiHandlers::ApiHandlers(std::shared_ptr<AnnotationStore> store,
                         std::shared_ptr<const backends::GroundingBackend> grounding,
                         checker::CheckOptions check_defaults)
    : store_(std::move(store)), grounding_(std::move(grounding)), check_defaults_(std::move(check_defaults)) {}

Reply ApiHandlers::check(const std::string& body) const {
  if (!grounding_) return error_reply(503, "no grounding backend configured");
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_reply(400, "body is not valid JSON", "/");
  try {
    const auto req = checker::check_request_from_json(j, check_defaults_);
    return json_reply(200, checker::to_json(checker::check(req, *grounding_)));
  } catch (const ValidationError& e) {
    return error_reply(400, e.what(), e.field());
  } catch (const ContractError& e) {
    return error_reply(400, e.what());
  } catch (const TransportError& e) {
    return error_reply(502, e.what());
  } catch (const ConfigError& e) {
    return error_reply(500, e.what());
  }
}

Reply ApiHandlers::next(const std::string& annotator) const {
  if (!store_) return error_reply(503, "annotation store not configured");
  if (annotator.empty()) return error_reply(400, "annotator query parameter is required", "annotator");
  const auto task = store_->next(annotator);
  if (!task) return {204, ""};
  nlohmann::ordered_json j;
  j["sample_id"] = task->sample_id;
  j["image"] = task->image;
  j["description"] = task->description;
  j["assigned_annotator"] = task->assigned_annotator;
  j["state"] = "pending";
  return json_reply(200, j);
}

Reply ApiHandlers::submit(const std::string& body) const {
  if (!store_) return error_reply(503, "annotation store not configured");
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_reply(400, "body is not valid JSON", "/");
  try {
    if (!j.is_object()) throw ValidationError("/", "body must be a JSON object");
    const auto sid = j.find("sample_id");
    if (sid == j.end() || !sid->is_string()) throw ValidationError("/sample_id", "must be a string");
    const std::string sample_id = sid->get<std::string>();
    auto record = evalkit::annotation_from_json(j);
    if (record.timestamp.empty()) record.timestamp = utc_now_rfc3339();

    const auto final_label = store_->submit(sample_id, std::move(record));
    nlohmann::ordered_json out;
    out["sample_id"] = sample_id;
    out["finalized"] = final_label.has_value();
    out["final"] = final_label ? evalkit::to_json(*final_label) : nlohmann::ordered_json();
    return json_reply(200, out);
  } catch (const ValidationError& e) {
    return error_reply(400, e.what(), e.field());
  } catch (const UnknownSampleError& e) {
    return error_reply(404, e.what());
  } catch (const DuplicateSubmissionError& e) {
    return error_reply(409, e.what());
  }
}

Reply ApiHandlers::progress() const {
  if (!store_) return error_reply(503, "annotation store not configured");
  const Progress p = store_->progress();
  nlohmann::ordered_json j;
  j["pending"] = p.pending;
  j["partially_annotated"] = p.partially_annotated;
  j["finalized"] = p.finalized;
  j["ties"] = p.ties;
  return json_reply(200, j);
}

Reply ApiHandlers::eval_report(const std::string& pred_path) const {
  if (!store_) return error_reply(503, "annotation store not configured");
  if (pred_path.empty()) return error_reply(400, "pred query parameter is required", "pred");
  std::map<std::string, bool> preds;
  try {
    preds = evalkit::load_predictions(pred_path);
  } catch (const ConfigError& e) {
    return error_reply(404, e.what(), "pred");
  } catch (const IngestionError& e) {
    return error_reply(400, e.what(), "pred");
  }
  const auto samples = store_->samples();
  nlohmann::ordered_json j;
  const auto by_model = evalkit::slice_report(samples, preds, evalkit::SliceBy::SourceModel);
  j["detection"] = evalkit::to_json(by_model.overall);
  j["missing_predictions"] = by_model.missing_predictions;
  j["slices"]["source_model"] = evalkit::to_json(by_model)["slices"];
  j["slices"]["length_bucket"] =
      evalkit::to_json(evalkit::slice_report(samples, preds, evalkit::SliceBy::LengthBucket))["slices"];
  j["slices"]["category"] =
      evalkit::to_json(evalkit::slice_report(samples, preds, evalkit::SliceBy::Category))["slices"];
  return json_reply(200, j);
}

void install_routes(httplib::Server& server, const ApiHandlers& api, const std::string& static_dir) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    if (!r.body.empty()) res.set_content(r.body, "application/json");
  };
  server.Post("/v1/check", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.check(req.body));
  });
  server.Get("/v1/annotation/next", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.next(req.get_param_value("annotator")));
  });
  server.Post("/v1/annotation/submit", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.submit(req.body));
  });
  server.Get("/v1/annotation/progress", [&api, send](const httplib::Request&, httplib::Response& res) {
    send(res, api.progress());
  });
  server.Get("/v1/eval/report", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.eval_report(req.get_param_value("pred")));
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace vbackcheck::service
