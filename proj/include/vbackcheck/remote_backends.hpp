#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>

#include "json.hpp"
#include "vbackcheck/backends.hpp"

namespace vbackcheck::backends {

/// Exponential backoff: attempt k (0-based retry index) waits
/// min(initial * multiplier^k, max_backoff).
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};

  std::chrono::milliseconds delay(int retry_index) const;
};

struct RemoteOptions {
  /// e.g. "http://127.0.0.1:8090"
  std::string base_url;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 4;
  /// How the scorer's raw output maps to [0, 1]: "identity" or "cosine"
  /// ((c + 1) / 2).
  std::string score_mapping = "identity";
};

/// JSON-over-HTTP POST with retry and an in-flight cap. Shared by all
/// remote backends; safe for concurrent use.
class HttpJsonTransport {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpJsonTransport(RemoteOptions options, Sleeper sleeper = {});

  /// Non-idempotent calls are attempted exactly once. Connection failures
  /// and 5xx responses are retried; exhaustion raises TransportError. A body
  /// that is not JSON, or a 4xx, raises ProtocolError carrying the raw text.
  nlohmann::json post(const std::string& path, const nlohmann::json& body, bool idempotent) const;

  const RemoteOptions& options() const noexcept { return options_; }

  /// Number of HTTP attempts made so far (across all calls).
  int attempts() const noexcept { return attempts_.load(); }

 private:
  RemoteOptions options_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
  mutable std::atomic<int> attempts_{0};
};

class RemoteGrounding final : public GroundingBackend {
 public:
  explicit RemoteGrounding(std::shared_ptr<const HttpJsonTransport> transport)
      : transport_(std::move(transport)) {}
  GroundingResponse ground(const GroundingRequest& req) const override;

 private:
  std::shared_ptr<const HttpJsonTransport> transport_;
};

class RemoteScorer final : public ScorerBackend {
 public:
  explicit RemoteScorer(std::shared_ptr<const HttpJsonTransport> transport)
      : transport_(std::move(transport)) {}
  double score_image_text(const ScorerRequest& req) const override;

 private:
  std::shared_ptr<const HttpJsonTransport> transport_;
};

class RemoteSimilarity final : public SimilarityBackend {
 public:
  explicit RemoteSimilarity(std::shared_ptr<const HttpJsonTransport> transport)
      : transport_(std::move(transport)) {}
  double text_similarity(const SimilarityRequest& req) const override;

 private:
  std::shared_ptr<const HttpJsonTransport> transport_;
};

/// Never retried: generation is not idempotent.
class RemoteGeneration final : public GenerationBackend {
 public:
  explicit RemoteGeneration(std::shared_ptr<const HttpJsonTransport> transport)
      : transport_(std::move(transport)) {}
  std::string generate(const GenerationRequest& req) const override;

 private:
  std::shared_ptr<const HttpJsonTransport> transport_;
};

}  // namespace vbackcheck::backends
