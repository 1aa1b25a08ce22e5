#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "vbackcheck/backends.hpp"
#include "vbackcheck/checker.hpp"
#include "vbackcheck/remote_backends.hpp"
#include "vbackcheck/rinstruct.hpp"
#include "vbackcheck/tuneloss.hpp"

namespace vbackcheck::service {

/// One model role: either a stub table or a remote endpoint.
struct BackendConfig {
  enum class Kind { Stub, Remote };
  Kind kind = Kind::Stub;
  std::filesystem::path table;
  bool strict = true;
  backends::RemoteOptions remote;
};

struct AppConfig {
  /// Directory of the config file; relative paths resolve against it.
  std::filesystem::path base_dir;
  bool strict = true;

  std::optional<BackendConfig> grounding;
  std::optional<BackendConfig> scorer;
  std::optional<BackendConfig> similarity;
  std::optional<BackendConfig> generation;

  rinstruct::PipelineConfig pipeline;
  std::filesystem::path images;
  std::filesystem::path proposals;

  tuneloss::LossConfig loss;
  checker::CheckOptions checker;

  std::filesystem::path bench;
  std::filesystem::path state_dir;
  std::filesystem::path static_dir;

  std::string host = "127.0.0.1";
  int port = 8080;
  int quorum = 3;
};

/// Parses the JSON config document. Throws ConfigError with the offending
/// key; in strict mode every referenced stub table must exist.
AppConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

/// `explicit_path` if non-empty, else $VBACKCHECK_CONFIG. Throws
/// ConfigError when neither is set.
std::filesystem::path resolve_config_path(const std::string& explicit_path);

/// Builds every configured role; unconfigured roles stay null.
backends::BackendSet build_backends(const AppConfig& cfg);

}  // namespace vbackcheck::service
