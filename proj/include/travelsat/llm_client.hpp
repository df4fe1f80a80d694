#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "travelsat/prompting.hpp"

namespace travelsat {

struct LlmParams {
  std::string model_name = "deepseek-reasoner";
  double temperature = 0.7;
  int max_output_tokens = 8192;
  std::string endpoint = "https://api.deepseek.com";
  std::chrono::milliseconds request_timeout{std::chrono::minutes(5)};
  /// Name of the environment variable holding the API key.
  std::string api_key_env = "DEEPSEEK_API_KEY";

  /// Throws ConfigError for temperature outside [0, 1], non-positive timeout or tokens.
  void validate() const;
};

/// What a backend receives. `trial_index` never goes over the wire; the
/// scripted mock uses it to vary its noise between repeats.
struct ChatRequest {
  std::string model;
  double temperature = 0.7;
  int max_tokens = 0;
  std::string system;
  std::string user;
  std::uint64_t trial_index = 0;
};

struct Completion {
  std::string content;
  /// Provider reasoning channel, when exposed (e.g. `reasoning_content`).
  std::string reasoning;

  friend bool operator==(const Completion&, const Completion&) = default;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws TransientError (retryable), CredentialError or TransportError.
  virtual Completion send(const ChatRequest& request) = 0;
  /// False for in-process backends; used only for reporting.
  virtual bool is_remote() const { return false; }
};

/// Chat-completions request body: model, temperature, max_tokens, messages.
nlohmann::json chat_request_body(const ChatRequest& request);
/// First choice's message content plus `reasoning_content` when present.
/// Throws TransportError on a malformed body.
Completion parse_chat_response(std::string_view body);

/// OpenAI-compatible chat-completions client over HTTP(S).
class HttpBackend final : public Backend {
 public:
  /// The API key is read from `params.api_key_env` on each request.
  explicit HttpBackend(LlmParams params);
  Completion send(const ChatRequest& request) override;
  bool is_remote() const override { return true; }

 private:
  LlmParams params_;
  std::string scheme_host_port_;
  std::string base_path_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{std::chrono::seconds(60)};
};

struct ClientStats {
  std::size_t transport_calls = 0;  ///< attempts that reached the backend
  std::size_t retries = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t corrupt_cache_entries = 0;
  std::size_t max_in_flight_observed = 0;
};

/// Hex SHA-256 over (model, temperature, system text, user text, trial index).
std::string cache_key(const Prompt& prompt, const LlmParams& params, std::uint64_t trial_index);

class LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry = {}, std::size_t max_in_flight = 4,
            Sleeper sleeper = {});

  /// Sends the prompt, retrying transient failures with exponential backoff.
  /// Throws TransportError once attempts are exhausted, CredentialError at once.
  Completion complete(const Prompt& prompt, const LlmParams& params, std::uint64_t trial_index = 0);

  /// As complete(), but served from `<cache_dir>/<key>.json` when present.
  /// Unreadable or mismatching entries count as misses and are overwritten.
  Completion cached_complete(const Prompt& prompt, const LlmParams& params,
                             std::uint64_t trial_index, const std::filesystem::path& cache_dir);

  ClientStats stats() const;
  const Backend& backend() const { return *backend_; }

 private:
  std::shared_ptr<std::mutex> key_mutex(const std::string& key);

  std::shared_ptr<Backend> backend_;
  RetryPolicy retry_;
  std::size_t max_in_flight_;
  Sleeper sleeper_;

  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
  ClientStats stats_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

}  // namespace travelsat
