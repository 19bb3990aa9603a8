#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qagkit/metrics.hpp"
#include "qagkit/pipeline.hpp"
#include "qagkit/types.hpp"

namespace qagkit {

/// A model pair the service can run. Endpoints are http:// URLs or "stub".
struct ModelRegistryEntry {
  std::string id;
  Language language = Language::en;
  std::string ae_endpoint;
  std::string qg_endpoint;
  DecodingParams decoding;
  std::optional<std::string> perplexity_endpoint;
};

/// Immutable model registry, loaded once at boot.
///
/// TOML layout (JSON uses the same keys under {"models": [...]}):
///
///   [[models]]
///   id = "stub-en"
///   language = "en"
///   ae_endpoint = "stub"
///   qg_endpoint = "stub"
///   beam_size = 4          # optional
///   top_p = 0.95           # optional
///   max_length = 64        # optional
///   perplexity_endpoint = "http://..."   # optional
class ModelRegistry {
 public:
  ModelRegistry() = default;
  /// Throws ConfigError on repeated ids.
  explicit ModelRegistry(std::vector<ModelRegistryEntry> entries);

  /// ".json" files are read as JSON, anything else as TOML. Throws
  /// FileNotFound or ConfigError.
  static ModelRegistry load(const std::filesystem::path& path);
  static ModelRegistry from_json(const nlohmann::json& j);
  static ModelRegistry from_toml(std::string_view text);

  const std::vector<ModelRegistryEntry>& entries() const noexcept { return entries_; }
  const ModelRegistryEntry* find(std::string_view id) const noexcept;

 private:
  std::vector<ModelRegistryEntry> entries_;
};

struct ServiceOptions {
  /// Requests handled at once; beyond this the service answers 429.
  std::size_t max_concurrent_requests = 64;
  std::size_t max_paragraph_chars = kDefaultMaxParagraphChars;
  PipelineOptions pipeline;
  HttpBackendOptions backend;
  /// Needed only for metric "embedding_f1" in /v1/evaluate.
  std::shared_ptr<const EmbeddingProvider> embedding_provider;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

/// Transport-independent request handling for the /v1 API.
///
///   POST /v1/generate_qa       {model_id, paragraph, beam_size?, top_p?}
///   POST /v1/generate_question {model_id, paragraph, answer, beam_size?, top_p?}
///   POST /v1/evaluate          {gold: [[[q, a], ...], ...], pred: ..., metric, language?}
///   GET  /v1/models
///   GET  /healthz
///
/// Error bodies are {"error": {"code": ..., "message": ...}}: 404 unknown
/// model or route, 405 wrong method, 422 malformed body or unusable
/// paragraph/answer, 400 unsupported metric, 429 over capacity, 502 backend
/// failure, 504 backend timeout. Scores and overlaps are rounded to four
/// decimals. Handlers are safe to call concurrently.
class Service {
 public:
  explicit Service(ModelRegistry registry, ServiceOptions options = {});

  ServiceResponse handle(std::string_view method, std::string_view path,
                         std::string_view body) const;

  ServiceResponse generate_qa(const nlohmann::json& request) const;
  ServiceResponse generate_question(const nlohmann::json& request) const;
  ServiceResponse evaluate(const nlohmann::json& request) const;
  ServiceResponse models() const;
  static ServiceResponse healthz();

  const ModelRegistry& registry() const noexcept { return registry_; }
  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct Model {
    ModelRegistryEntry entry;
    std::shared_ptr<GenerationBackend> ae;
    std::shared_ptr<GenerationBackend> qg;
    std::shared_ptr<const PerplexityScorer> perplexity;
  };

  const Model& model_for(const nlohmann::json& request) const;

  ModelRegistry registry_;
  ServiceOptions options_;
  std::map<std::string, Model, std::less<>> models_;
  mutable std::atomic<std::size_t> in_flight_{0};
};

/// "{\"error\": {\"code\": code, \"message\": message}}" with the given status.
ServiceResponse error_response(int status, std::string_view code, std::string_view message);

/// Value rounded half away from zero to four decimals.
double round4(double x) noexcept;

/// HTTP front end for a Service.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Service> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires a successful bind().
  void listen();
  /// Blocks until listen() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qagkit
