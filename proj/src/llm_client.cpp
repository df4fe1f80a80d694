#include "travelsat/llm_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "travelsat/error.hpp"
#include "travelsat/text.hpp"

namespace travelsat {

using nlohmann::json;

void LlmParams::validate() const {
  if (!(temperature >= 0.0 && temperature <= 1.0)) {
    throw ConfigError(fmt::format("temperature {} outside [0, 1]", temperature));
  }
  if (request_timeout.count() <= 0) throw ConfigError("request timeout must be positive");
  if (max_output_tokens <= 0) throw ConfigError("max_output_tokens must be positive");
  if (model_name.empty()) throw ConfigError("model name is empty");
}

json chat_request_body(const ChatRequest& request) {
  return json{{"model", request.model},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"stream", false},
              {"messages",
               json::array({{{"role", "system"}, {"content", request.system}},
                            {{"role", "user"}, {"content", request.user}}})}};
}

Completion parse_chat_response(std::string_view body) {
  try {
    const auto j = json::parse(body);
    const auto& message = j.at("choices").at(0).at("message");
    Completion c;
    if (message.contains("content") && message["content"].is_string()) {
      c.content = message["content"].get<std::string>();
    }
    for (const char* field : {"reasoning_content", "reasoning"}) {
      if (message.contains(field) && message[field].is_string()) {
        c.reasoning = message[field].get<std::string>();
        break;
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completions response: ") + e.what());
  }
}

HttpBackend::HttpBackend(LlmParams params) : params_(std::move(params)) {
  const auto& url = params_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

Completion HttpBackend::send(const ChatRequest& request) {
  const char* key = std::getenv(params_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw CredentialError("environment variable " + params_.api_key_env + " is not set");
  }
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(params_.request_timeout);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);
  client.set_bearer_token_auth(key);
  const auto body = chat_request_body(request).dump();
  auto res = client.Post(base_path_ + "/chat/completions", body, "application/json");
  if (!res) {
    throw TransientError("request failed: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw CredentialError(fmt::format("endpoint rejected the credential (HTTP {})", status));
  }
  if (status == 408 || status == 429 || status >= 500) {
    throw TransientError(fmt::format("HTTP {}", status));
  }
  if (status != 200) throw TransportError(fmt::format("HTTP {}: {}", status, res->body));
  return parse_chat_response(res->body);
}

std::string cache_key(const Prompt& prompt, const LlmParams& params, std::uint64_t trial_index) {
  std::string material = "travelsat-cache-v1";
  auto field = [&](std::string_view s) {
    material += '\0';
    material += std::to_string(s.size());
    material += ':';
    material += s;
  };
  field(params.model_name);
  field(text::format_double(params.temperature));
  field(prompt.system_text);
  field(prompt.user_text);
  field(std::to_string(trial_index));
  return text::sha256_hex(material);
}

LlmClient::LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry, std::size_t max_in_flight,
                     Sleeper sleeper)
    : backend_(std::move(backend)),
      retry_(retry),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)),
      sleeper_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
  if (!backend_) throw ConfigError("LLM client needs a backend");
  if (retry_.max_attempts < 1) throw ConfigError("retry policy needs at least one attempt");
}

Completion LlmClient::complete(const Prompt& prompt, const LlmParams& params,
                               std::uint64_t trial_index) {
  params.validate();
  ChatRequest request{params.model_name, params.temperature, params.max_output_tokens,
                      prompt.system_text, prompt.user_text, trial_index};
  auto backoff = retry_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    {
      std::unique_lock lock(mutex_);
      slot_free_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
      ++in_flight_;
      ++stats_.transport_calls;
      stats_.max_in_flight_observed = std::max(stats_.max_in_flight_observed, in_flight_);
    }
    auto release = [&] {
      {
        std::lock_guard lock(mutex_);
        --in_flight_;
      }
      slot_free_.notify_one();
    };
    try {
      auto result = backend_->send(request);
      release();
      return result;
    } catch (const TransientError& e) {
      release();
      if (attempt >= retry_.max_attempts) {
        throw TransportError(fmt::format("giving up after {} attempts: {}", attempt, e.what()));
      }
      std::clog << fmt::format("warning: attempt {} failed ({}); retrying in {} ms\n", attempt,
                               e.what(), backoff.count());
      {
        std::lock_guard lock(mutex_);
        ++stats_.retries;
      }
      sleeper_(backoff);
      backoff = std::min(retry_.max_backoff,
                         std::chrono::milliseconds(static_cast<long long>(
                             static_cast<double>(backoff.count()) * retry_.multiplier)));
    } catch (...) {
      release();
      throw;
    }
  }
}

std::shared_ptr<std::mutex> LlmClient::key_mutex(const std::string& key) {
  std::lock_guard lock(mutex_);
  auto& m = key_locks_[key];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

Completion LlmClient::cached_complete(const Prompt& prompt, const LlmParams& params,
                                      std::uint64_t trial_index,
                                      const std::filesystem::path& cache_dir) {
  const auto key = cache_key(prompt, params, trial_index);
  const auto path = cache_dir / (key + ".json");

  auto try_read = [&]() -> std::optional<Completion> {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      const auto j = json::parse(text::read_file(path.string()));
      if (j.at("key").get<std::string>() != key) throw std::runtime_error("key mismatch");
      return Completion{j.at("content").get<std::string>(), j.value("reasoning", std::string())};
    } catch (const std::exception& e) {
      std::clog << "warning: ignoring corrupt cache entry " << path.string() << ": " << e.what() << "\n";
      std::lock_guard lock(mutex_);
      ++stats_.corrupt_cache_entries;
      return std::nullopt;
    }
  };

  // One writer per key in this process; rename keeps other processes safe.
  const auto guard = key_mutex(key);
  std::lock_guard key_lock(*guard);
  if (auto hit = try_read()) {
    std::lock_guard lock(mutex_);
    ++stats_.cache_hits;
    return *hit;
  }
  {
    std::lock_guard lock(mutex_);
    ++stats_.cache_misses;
  }
  auto result = complete(prompt, params, trial_index);
  const json entry{{"key", key},
                   {"model", params.model_name},
                   {"temperature", params.temperature},
                   {"trial_index", trial_index},
                   {"content", result.content},
                   {"reasoning", result.reasoning}};
  text::write_file_atomic(path.string(), entry.dump(2) + "\n");
  return result;
}

ClientStats LlmClient::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

}  // namespace travelsat
