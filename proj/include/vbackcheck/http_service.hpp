#pragma once

#include <memory>
#include <string>

#include "json.hpp"
#include "vbackcheck/annotation_store.hpp"
#include "vbackcheck/backends.hpp"
#include "vbackcheck/checker.hpp"

namespace httplib {
class Server;
}

namespace vbackcheck::service {

struct Reply {
  int status = 200;
  std::string body;  // JSON, or empty for 204
};

/// Request handling for the HTTP API, independent of the socket layer.
///
///   POST /v1/check                  CheckRequest -> CheckReport
///   GET  /v1/annotation/next        ?annotator=<id> -> task | 204
///   POST /v1/annotation/submit      {"sample_id", AnnotationRecord fields}
///   GET  /v1/annotation/progress    -> {pending, partially_annotated, finalized, ties}
///   GET  /v1/eval/report            ?pred=<path> -> detection metrics + slices
///
/// Errors are `{"error":msg,"field":path?}` with 400/404/409/500/502.
class ApiHandlers {
 public:
  ApiHandlers(std::shared_ptr<AnnotationStore> store,
              std::shared_ptr<const backends::GroundingBackend> grounding,
              checker::CheckOptions check_defaults);

  Reply check(const std::string& body) const;
  Reply next(const std::string& annotator) const;
  Reply submit(const std::string& body) const;
  Reply progress() const;
  Reply eval_report(const std::string& pred_path) const;

 private:
  std::shared_ptr<AnnotationStore> store_;
  std::shared_ptr<const backends::GroundingBackend> grounding_;
  checker::CheckOptions check_defaults_;
};

/// Wires the handlers to routes; serves `static_dir` at "/" when non-empty.
void install_routes(httplib::Server& server, const ApiHandlers& api, const std::string& static_dir);

/// Exposes a BackendSet over the backend wire contract (/ground, /score,
/// /similarity, /generate). Roles left null answer 404.
void install_backend_routes(httplib::Server& server, const backends::BackendSet& backends);

}  // namespace vbackcheck::service
