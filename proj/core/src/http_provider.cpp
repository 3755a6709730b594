#include "lail/http_provider.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json_io.hpp"
#include "lail/error.hpp"

namespace lail {
namespace {

using detail::Json;

struct Endpoint {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // "" or "/v1"
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint \"" + url + "\" must start with http:// or https://");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) e.base_path = url.substr(path_start);
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  return e;
}

std::size_t count_code_points(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(
      text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string provider_message(const std::string& body) {
  try {
    Json parsed = Json::parse(body);
    if (parsed.is_object() && parsed.contains("error")) {
      const Json& error = parsed.at("error");
      if (error.is_object() && error.contains("message") && error.at("message").is_string()) {
        return error.at("message").get<std::string>();
      }
      if (error.is_string()) return error.get<std::string>();
    }
  } catch (const Json::exception&) {
  }
  return body;
}

const Json& expect(const Json& object, std::string_view key, std::string_view what) {
  if (!object.is_object() || !object.contains(key)) {
    throw ProtocolError("malformed response: missing " + std::string(what));
  }
  return object.at(key);
}

}  // namespace

struct HttpProvider::Impl {
  explicit Impl(ProviderConfig cfg)
      : config(std::move(cfg)),
        endpoint(split_endpoint(config.endpoint)),
        slots(config.max_concurrent_requests) {}

  ProviderConfig config;
  Endpoint endpoint;
  mutable std::counting_semaphore<4096> slots;
  mutable std::atomic<std::size_t> dimension{0};

  Json post(const std::string& path, const Json& body) const {
    httplib::Headers headers;
    if (!config.auth_token_env.empty()) {
      const char* token = std::getenv(config.auth_token_env.c_str());
      if (token == nullptr || *token == '\0') {
        throw ConfigError("auth token environment variable " + config.auth_token_env +
                          " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const std::string payload = body.dump();
    const std::string target = endpoint.base_path + path;
    std::string last_failure;
    for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(config.retry.backoff_base * (1 << (attempt - 2)));
      }
      httplib::Result result;
      {
        slots.acquire();
        struct Release {
          std::counting_semaphore<4096>& s;
          ~Release() { s.release(); }
        } release{slots};
        httplib::Client client(endpoint.origin);
        const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
        const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
            config.timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());
        result = client.Post(target, headers, payload, "application/json");
      }
      if (!result) {
        last_failure = "request to " + endpoint.origin + target +
                       " failed: " + httplib::to_string(result.error());
        continue;
      }
      const int status = result->status;
      if (status >= 200 && status < 300) {
        Json parsed;
        try {
          parsed = Json::parse(result->body);
        } catch (const Json::parse_error& e) {
          throw ProtocolError("malformed response body from " + target + ": " + e.what());
        }
        if (parsed.is_object() && parsed.contains("error") && !parsed.at("error").is_null()) {
          throw ProviderError("provider refused request: " + provider_message(result->body));
        }
        return parsed;
      }
      last_failure = "HTTP " + std::to_string(status) + " from " + target + ": " +
                     provider_message(result->body);
      if (status != 429 && status < 500) break;
    }
    throw TransportError(last_failure);
  }

  std::vector<std::vector<double>> embeddings(const Json& input, std::size_t expected) const {
    const Json response = post("/embeddings", {{"model", config.model_name}, {"input", input}});
    const Json& data = expect(response, "data", "\"data\"");
    if (!data.is_array() || data.size() != expected) {
      throw ProtocolError("malformed response: expected " + std::to_string(expected) +
                          " embeddings");
    }
    std::vector<std::vector<double>> out(expected);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Json& item = data[i];
      std::size_t slot = i;
      if (item.is_object() && item.contains("index")) {
        if (!item.at("index").is_number_unsigned() || item.at("index").get<std::size_t>() >= expected) {
          throw ProtocolError("malformed response: bad embedding index");
        }
        slot = item.at("index").get<std::size_t>();
      }
      const Json& vector = expect(item, "embedding", "\"data[].embedding\"");
      if (!vector.is_array() || vector.empty()) {
        throw ProtocolError("malformed response: embedding must be a non-empty array");
      }
      for (const Json& x : vector) {
        if (!x.is_number()) throw ProtocolError("malformed response: non-numeric embedding entry");
        out[slot].push_back(x.get<double>());
      }
    }
    for (const auto& v : out) {
      if (v.empty()) throw ProtocolError("malformed response: duplicate embedding index");
      std::size_t known = dimension.load();
      if (known == 0) {
        dimension.compare_exchange_strong(known, v.size());
        known = dimension.load();
      }
      if (v.size() != known) throw ProtocolError("malformed response: inconsistent embedding size");
    }
    return out;
  }
};

HttpProvider::HttpProvider(ProviderConfig config) {
  if (config.kind != ProviderKind::http) throw ConfigError("HttpProvider requires kind http");
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
}

HttpProvider::~HttpProvider() = default;

ScoreResult HttpProvider::score_continuation(std::string_view prompt,
                                             std::string_view continuation) const {
  if (continuation.empty()) throw InvalidArgument("score_continuation: empty continuation");
  const std::string full = std::string(prompt) + std::string(continuation);
  const Json response = impl_->post("/completions", {{"model", impl_->config.model_name},
                                                     {"prompt", full},
                                                     {"max_tokens", 0},
                                                     {"echo", true},
                                                     {"logprobs", 0}});
  const Json& choices = expect(response, "choices", "\"choices\"");
  if (!choices.is_array() || choices.empty()) {
    throw ProtocolError("malformed response: \"choices\" must be a non-empty array");
  }
  const Json& choice = choices[0];
  if (!choice.is_object() || !choice.contains("logprobs") || choice.at("logprobs").is_null()) {
    throw CapabilityError("provider returned no logprobs; echo scoring is unsupported");
  }
  const Json& logprobs = choice.at("logprobs");
  const Json& token_logprobs = expect(logprobs, "token_logprobs", "\"logprobs.token_logprobs\"");
  const Json& offsets = expect(logprobs, "text_offset", "\"logprobs.text_offset\"");
  if (!token_logprobs.is_array() || !offsets.is_array() ||
      token_logprobs.size() != offsets.size()) {
    throw ProtocolError("malformed response: token_logprobs and text_offset must be equal-length arrays");
  }
  if (choice.contains("text") && choice.at("text").is_string() &&
      count_code_points(choice.at("text").get_ref<const std::string&>()) < count_code_points(full)) {
    throw TruncationError("provider echoed a truncated prompt; continuation not fully scored");
  }
  const std::size_t prompt_length = count_code_points(prompt);
  ScoreResult result;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (!offsets[i].is_number_integer()) throw ProtocolError("malformed response: non-integer text_offset");
    if (offsets[i].get<std::int64_t>() < static_cast<std::int64_t>(prompt_length)) continue;
    const Json& lp = token_logprobs[i];
    if (lp.is_null()) throw CapabilityError("provider returned a null logprob inside the continuation");
    if (!lp.is_number()) throw ProtocolError("malformed response: non-numeric logprob");
    const double value = lp.get<double>();
    if (!(value <= 1e-6)) throw ProtocolError("malformed response: positive logprob");
    result.token_logprobs.push_back(std::min(value, 0.0));
  }
  if (result.token_logprobs.empty()) {
    throw TruncationError("provider response contains no continuation tokens");
  }
  return result;
}

std::vector<std::string> HttpProvider::generate(std::string_view prompt,
                                                const GenerationParams& params) const {
  params.validate();
  Json body = {{"model", impl_->config.model_name},
               {"prompt", std::string(prompt)},
               {"max_tokens", params.max_tokens},
               {"temperature", params.temperature},
               {"top_p", params.top_p},
               {"n", params.n_samples}};
  if (params.seed) body["seed"] = *params.seed;
  const Json response = impl_->post("/completions", body);
  const Json& choices = expect(response, "choices", "\"choices\"");
  const auto n = static_cast<std::size_t>(params.n_samples);
  if (!choices.is_array() || choices.size() != n) {
    throw ProtocolError("malformed response: expected " + std::to_string(n) + " choices");
  }
  std::vector<std::string> out(n);
  std::vector<bool> filled(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const Json& choice = choices[i];
    std::size_t slot = i;
    if (choice.is_object() && choice.contains("index")) {
      const Json& index = choice.at("index");
      if (!index.is_number_unsigned() || index.get<std::size_t>() >= n) {
        throw ProtocolError("malformed response: bad choice index");
      }
      slot = index.get<std::size_t>();
    }
    const Json& text = expect(choice, "text", "\"choices[].text\"");
    if (!text.is_string()) throw ProtocolError("malformed response: choice text must be a string");
    if (filled[slot]) throw ProtocolError("malformed response: duplicate choice index");
    filled[slot] = true;
    out[slot] = text.get<std::string>();
  }
  return out;
}

std::vector<double> HttpProvider::embed(std::string_view text) const {
  return impl_->embeddings(Json(std::string(text)), 1).front();
}

std::vector<std::vector<double>> HttpProvider::embed_batch(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  return impl_->embeddings(Json(std::vector<std::string>(texts.begin(), texts.end())), texts.size());
}

std::size_t HttpProvider::dimension() const {
  if (impl_->dimension.load() == 0) embed("dimension probe");
  return impl_->dimension.load();
}

std::string HttpProvider::fingerprint() const {
  return "http:" + impl_->config.model_name + ":" + std::to_string(dimension());
}

std::string HttpProvider::describe() const { return "http:" + impl_->config.model_name; }

std::size_t HttpProvider::concurrency() const {
  return static_cast<std::size_t>(impl_->config.max_concurrent_requests);
}

}  // namespace lail
