#include "vbackcheck/config.hpp"

#include <cstdlib>
#include <fstream>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/stub_backends.hpp"

namespace vbackcheck::service {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Typed lookup with a default; wrong types become ConfigError naming `key`.
template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

BackendConfig parse_backend(const nlohmann::json& j, const std::string& where, bool strict,
                            const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  BackendConfig b;
  const std::string kind = get_or<std::string>(j, "kind", "stub", where);
  if (kind == "stub") {
    b.kind = BackendConfig::Kind::Stub;
    const auto table = get_or<std::string>(j, "table", "", where);
    if (table.empty()) throw ConfigError(where + ".table is required for stub backends");
    b.table = resolve(base, table);
    b.strict = get_or<bool>(j, "strict", strict, where);
    if (strict && !std::filesystem::exists(b.table)) {
      throw ConfigError("stub table not found: " + b.table.string());
    }
  } else if (kind == "remote") {
    b.kind = BackendConfig::Kind::Remote;
    auto& r = b.remote;
    r.base_url = get_or<std::string>(j, "url", "", where);
    if (r.base_url.empty()) throw ConfigError(where + ".url is required for remote backends");
    r.retry.max_retries = get_or<int>(j, "max_retries", r.retry.max_retries, where);
    r.retry.initial_backoff =
        std::chrono::milliseconds(get_or<int>(j, "initial_backoff_ms", static_cast<int>(r.retry.initial_backoff.count()), where));
    r.retry.max_backoff =
        std::chrono::milliseconds(get_or<int>(j, "max_backoff_ms", static_cast<int>(r.retry.max_backoff.count()), where));
    r.retry.multiplier = get_or<double>(j, "backoff_multiplier", r.retry.multiplier, where);
    r.timeout = std::chrono::milliseconds(get_or<int>(j, "timeout_ms", static_cast<int>(r.timeout.count()), where));
    r.max_in_flight = get_or<int>(j, "max_in_flight", r.max_in_flight, where);
    r.score_mapping = get_or<std::string>(j, "score_mapping", r.score_mapping, where);
  } else {
    throw ConfigError(where + ".kind must be \"stub\" or \"remote\"");
  }
  return b;
}

}  // namespace

AppConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  AppConfig cfg;
  cfg.base_dir = base_dir;
  cfg.strict = get_or<bool>(doc, "strict", true, "config");

  const auto empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& {
    const auto it = doc.find(name);
    if (it == doc.end() || it->is_null()) return empty;
    if (!it->is_object()) throw ConfigError(std::string(name) + " must be an object");
    return *it;
  };

  const auto& be = section("backends");
  auto role = [&](const char* name) -> std::optional<BackendConfig> {
    const auto it = be.find(name);
    if (it == be.end() || it->is_null()) return std::nullopt;
    return parse_backend(*it, std::string("backends.") + name, cfg.strict, base_dir);
  };
  cfg.grounding = role("grounding");
  cfg.scorer = role("scorer");
  cfg.similarity = role("similarity");
  cfg.generation = role("generation");

  const auto& pl = section("pipeline");
  auto& p = cfg.pipeline;
  p.consistency_threshold = get_or<double>(pl, "consistency_threshold", p.consistency_threshold, "pipeline");
  p.nms_similarity_threshold =
      get_or<double>(pl, "nms_similarity_threshold", p.nms_similarity_threshold, "pipeline");
  p.max_in_flight = get_or<int>(pl, "max_in_flight", p.max_in_flight, "pipeline");
  p.negatives_per_caption = get_or<int>(pl, "negatives_per_caption", p.negatives_per_caption, "pipeline");
  if (const auto t = pl.find("templates"); t != pl.end() && t->is_object()) {
    p.templates.caption = get_or<std::string>(*t, "caption", p.templates.caption, "pipeline.templates");
    p.templates.holistic = get_or<std::string>(*t, "holistic", p.templates.holistic, "pipeline.templates");
    p.templates.inject = get_or<std::string>(*t, "inject", p.templates.inject, "pipeline.templates");
  }
  p.validate();
  if (auto v = get_or<std::string>(pl, "images", "", "pipeline"); !v.empty()) cfg.images = resolve(base_dir, v);
  if (auto v = get_or<std::string>(pl, "proposals", "", "pipeline"); !v.empty()) {
    cfg.proposals = resolve(base_dir, v);
  }

  const auto& ls = section("loss");
  cfg.loss.lambda = get_or<double>(ls, "lambda", cfg.loss.lambda, "loss");
  cfg.loss.dice_epsilon = get_or<double>(ls, "dice_epsilon", cfg.loss.dice_epsilon, "loss");
  cfg.loss.grounding_weight = get_or<double>(ls, "grounding_weight", cfg.loss.grounding_weight, "loss");
  cfg.loss.validate();

  const auto& ck = section("checker");
  auto& qt = cfg.checker.query_template;
  qt.id = get_or<std::string>(ck, "template_id", qt.id, "checker");
  qt.pattern = get_or<std::string>(ck, "template", qt.pattern, "checker");
  qt.validate();
  cfg.checker.max_in_flight = get_or<int>(ck, "max_in_flight", cfg.checker.max_in_flight, "checker");
  cfg.checker.max_sentences = get_or<std::size_t>(ck, "max_sentences", cfg.checker.max_sentences, "checker");
  if (cfg.checker.max_in_flight < 1) throw ConfigError("checker.max_in_flight must be >= 1");

  const auto& data = section("data");
  if (auto v = get_or<std::string>(data, "bench", "", "data"); !v.empty()) cfg.bench = resolve(base_dir, v);
  cfg.state_dir = resolve(base_dir, get_or<std::string>(data, "state_dir", "state", "data"));

  const auto& svc = section("service");
  cfg.host = get_or<std::string>(svc, "host", cfg.host, "service");
  cfg.port = get_or<int>(svc, "port", cfg.port, "service");
  if (auto v = get_or<std::string>(svc, "static_dir", "", "service"); !v.empty()) {
    cfg.static_dir = resolve(base_dir, v);
  }

  cfg.quorum = get_or<int>(section("annotation"), "quorum", 3, "annotation");
  if (cfg.quorum != 3) throw ConfigError("annotation.quorum must be 3");
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, std::filesystem::absolute(path).parent_path());
}

std::filesystem::path resolve_config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv("VBACKCHECK_CONFIG"); env != nullptr && *env != '\0') return env;
  throw ConfigError("no config given: pass --config or set VBACKCHECK_CONFIG");
}

backends::BackendSet build_backends(const AppConfig& cfg) {
  using namespace backends;
  BackendSet set;
  auto transport = [](const BackendConfig& b) {
    return std::make_shared<const HttpJsonTransport>(b.remote);
  };
  if (const auto& b = cfg.grounding) {
    if (b->kind == BackendConfig::Kind::Stub) {
      set.grounding = std::make_shared<StubGrounding>(StubGrounding::from_jsonl(b->table, b->strict));
    } else {
      set.grounding = std::make_shared<RemoteGrounding>(transport(*b));
    }
  }
  if (const auto& b = cfg.scorer) {
    if (b->kind == BackendConfig::Kind::Stub) {
      set.scorer = std::make_shared<StubScorer>(StubScorer::from_jsonl(b->table, b->strict));
    } else {
      set.scorer = std::make_shared<RemoteScorer>(transport(*b));
    }
  }
  if (const auto& b = cfg.similarity) {
    if (b->kind == BackendConfig::Kind::Stub) {
      set.similarity = std::make_shared<StubSimilarity>(StubSimilarity::from_jsonl(b->table, b->strict));
    } else {
      set.similarity = std::make_shared<RemoteSimilarity>(transport(*b));
    }
  }
  if (const auto& b = cfg.generation) {
    if (b->kind == BackendConfig::Kind::Stub) {
      set.generation = std::make_shared<StubGeneration>(StubGeneration::from_jsonl(b->table, b->strict));
    } else {
      set.generation = std::make_shared<RemoteGeneration>(transport(*b));
    }
  }
  return set;
}

}  // namespace vbackcheck::service
