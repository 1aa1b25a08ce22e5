#include "httplib.h"
#include "vbackcheck/base64.hpp"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/http_service.hpp"

namespace vbackcheck::service {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs `fn(body)` and maps library errors onto HTTP statuses.
template <typename Fn>
void guarded(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
  const auto body = nlohmann::json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    reply(res, 400, {{"error", "body must be a JSON object"}});
    return;
  }
  try {
    reply(res, 200, fn(body));
  } catch (const nlohmann::json::exception& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const ContractError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const ConfigError& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const Error& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

void install_backend_routes(httplib::Server& server, const backends::BackendSet& be) {
  using namespace backends;
  if (be.grounding) {
    server.Post("/ground", [g = be.grounding](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const nlohmann::json& b) {
        GroundingRequest gr;
        gr.image = b.contains("image_id") ? ImageRef::by_id(b.at("image_id").get<std::string>())
                                          : ImageRef::inline_bytes(base64_decode(b.at("image_b64").get<std::string>()));
        gr.query = b.at("query").get<std::string>();
        return to_json(g->ground(gr));
      });
    });
  }
  if (be.scorer) {
    server.Post("/score", [s = be.scorer](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const nlohmann::json& b) {
        // Stubs key on a label; remote callers only send bytes, so the
        // optional "image_label" field carries it when present.
        ScorerRequest sr{b.value("image_label", ""), base64_decode(b.at("image_b64").get<std::string>()),
                         b.at("text").get<std::string>()};
        return nlohmann::json{{"score", s->score_image_text(sr)}};
      });
    });
  }
  if (be.similarity) {
    server.Post("/similarity", [s = be.similarity](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const nlohmann::json& b) {
        return nlohmann::json{
            {"similarity", s->text_similarity({b.at("a").get<std::string>(), b.at("b").get<std::string>()})}};
      });
    });
  }
  if (be.generation) {
    server.Post("/generate", [g = be.generation](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const nlohmann::json& b) {
        return nlohmann::json{{"text", g->generate({b.at("template").get<std::string>(),
                                                    b.value("slots", nlohmann::json::object())})}};
      });
    });
  }
}

}  // namespace vbackcheck::service
