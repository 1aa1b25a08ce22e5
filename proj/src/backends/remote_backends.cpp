#include "vbackcheck/remote_backends.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "httplib.h"
#include "vbackcheck/base64.hpp"
#include "vbackcheck/errors.hpp"

namespace vbackcheck::backends {

std::chrono::milliseconds RetryPolicy::delay(int retry_index) const {
  const double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry_index);
  return std::min(max_backoff, std::chrono::milliseconds(static_cast<std::int64_t>(ms)));
}

HttpJsonTransport::HttpJsonTransport(RemoteOptions options, Sleeper sleeper)
    : options_(std::move(options)), sleeper_(std::move(sleeper)) {
  if (options_.base_url.empty()) throw ConfigError("remote backend needs a base_url");
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must be in [1, 1024]");
  }
  if (options_.retry.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (options_.score_mapping != "identity" && options_.score_mapping != "cosine") {
    throw ConfigError("score_mapping must be \"identity\" or \"cosine\"");
  }
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(options_.max_in_flight);
}

nlohmann::json HttpJsonTransport::post(const std::string& path, const nlohmann::json& body,
                                       bool idempotent) const {
  const int max_attempts = idempotent ? options_.retry.max_retries + 1 : 1;
  const std::string payload = body.dump();
  std::string last_error;

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) sleeper_(options_.retry.delay(attempt - 1));
    ++attempts_;

    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      in_flight_->acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{*in_flight_};

      httplib::Client client(options_.base_url);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(path, payload, "application/json");
    }

    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProtocolError(options_.base_url + path + " answered HTTP " + std::to_string(res->status),
                          res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw ProtocolError(options_.base_url + path + " returned non-JSON body", res->body);
    }
  }
  throw TransportError(options_.base_url + path + " unreachable after " +
                       std::to_string(max_attempts) + " attempt(s): " + last_error);
}

namespace {

nlohmann::json image_fields(const ImageRef& image) {
  nlohmann::json j = nlohmann::json::object();
  if (image.image_id) {
    j["image_id"] = *image.image_id;
  } else {
    j["image_b64"] = base64_encode(*image.image_bytes);
  }
  return j;
}

double number_field(const nlohmann::json& j, const char* name) {
  const auto it = j.is_object() ? j.find(name) : j.end();
  if (!j.is_object() || it == j.end() || !it->is_number()) {
    throw ProtocolError(std::string("response lacks numeric \"") + name + "\"", j.dump());
  }
  return it->get<double>();
}

}  // namespace

GroundingResponse RemoteGrounding::ground(const GroundingRequest& req) const {
  req.image.validate();
  if (req.query.empty()) throw ContractError("grounding query is empty");
  nlohmann::json body = image_fields(req.image);
  body["query"] = req.query;
  const nlohmann::json reply = transport_->post("/ground", body, true);
  return grounding_response_from_json(reply, reply.dump());
}

double RemoteScorer::score_image_text(const ScorerRequest& req) const {
  nlohmann::json body;
  body["image_b64"] = base64_encode(req.image_bytes);
  body["text"] = req.text;
  if (!req.image_label.empty()) body["image_label"] = req.image_label;
  const double raw = number_field(transport_->post("/score", body, true), "score");
  const double mapped = transport_->options().score_mapping == "cosine" ? (raw + 1.0) / 2.0 : raw;
  return clamp_unit(mapped, "score");
}

double RemoteSimilarity::text_similarity(const SimilarityRequest& req) const {
  nlohmann::json body;
  body["a"] = req.a;
  body["b"] = req.b;
  return clamp_unit(number_field(transport_->post("/similarity", body, true), "similarity"),
                    "similarity");
}

std::string RemoteGeneration::generate(const GenerationRequest& req) const {
  nlohmann::json body;
  body["template"] = req.template_id;
  body["slots"] = req.slots;
  const nlohmann::json reply = transport_->post("/generate", body, false);
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw ProtocolError("generation response lacks string \"text\"", reply.dump());
  }
  return reply["text"].get<std::string>();
}

}  // namespace vbackcheck::backends
