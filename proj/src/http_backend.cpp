#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "frameprobe/error.hpp"
#include "frameprobe/gateway.hpp"

namespace frameprobe {

using nlohmann::json;

namespace {

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

json movie_title_schema() {
  return {{"type", "json_schema"},
          {"json_schema",
           {{"name", "movie_answer"},
            {"strict", true},
            {"schema",
             {{"type", "object"},
              {"properties", {{"movie_title", {{"type", "string"}}}}},
              {"required", {"movie_title"}},
              {"additionalProperties", false}}}}}};
}

std::string content_text(const json& message) {
  const auto& content = message.at("content");
  if (content.is_string()) return content.get<std::string>();
  if (content.is_null()) return {};
  std::string out;
  for (const auto& part : content) {
    if (part.contains("text")) out += part["text"].get<std::string>();
  }
  return out;
}

}  // namespace

std::string serialize_chat_request(const BackendDescriptor& d, const QueryRequest& request) {
  json text_part = {{"type", "text"}, {"text", request.prompt_text}};
  json image_parts = json::array();
  for (const auto& img : request.images) {
    image_parts.push_back(
        {{"type", "image_url"},
         {"image_url",
          {{"url", "data:" + std::string(mime_type(img.format)) + ";base64," + base64(img.bytes)}}}});
  }
  json content = json::array();
  if (d.wire_format == WireFormat::openai_chat_images_first) {
    for (auto& p : image_parts) content.push_back(std::move(p));
    content.push_back(std::move(text_part));
  } else {
    content.push_back(std::move(text_part));
    for (auto& p : image_parts) content.push_back(std::move(p));
  }

  json body;
  body["model"] = d.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", std::move(content)}}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  const bool freeform =
      request.mode == QueryMode::freeform_image || request.mode == QueryMode::freeform_caption;
  if (d.structured_output && freeform) body["response_format"] = movie_title_schema();
  if (request.want_distributions) {
    body["logprobs"] = true;
    body["top_logprobs"] = d.top_logprobs;
  }
  return body.dump();
}

QueryResponse parse_chat_response(std::string_view body, const BackendDescriptor& d) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::BackendRefusal, d.name + ": unparseable response: " + e.what());
  }
  if (j.contains("error") && !j["error"].is_null()) {
    throw Error(Errc::BackendRefusal, d.name + ": " + j["error"].dump());
  }
  if (!j.contains("choices") || j["choices"].empty()) {
    throw Error(Errc::BackendRefusal, d.name + ": response has no choices");
  }
  const auto& choice = j["choices"][0];
  QueryResponse out;
  out.backend_name = d.name;
  out.raw_text = content_text(choice.at("message"));

  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
    std::vector<TokenDistribution> dists;
    for (const auto& pos : choice["logprobs"]["content"]) {
      TokenDistribution t;
      t.partial = true;
      t.segment = TokenSegment::text;
      if (pos.contains("top_logprobs") && !pos["top_logprobs"].empty()) {
        for (const auto& alt : pos["top_logprobs"]) t.probs.push_back(std::exp(alt.at("logprob").get<double>()));
      } else if (pos.contains("logprob")) {
        t.probs.push_back(std::exp(pos["logprob"].get<double>()));
      }
      std::sort(t.probs.begin(), t.probs.end(), std::greater<>());
      dists.push_back(std::move(t));
    }
    out.token_distributions = std::move(dists);
  }
  return out;
}

HttpBackend::HttpBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
  const std::string& url = *descriptor_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::ConfigError, descriptor_.name + ": endpoint_url needs a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);

  if (descriptor_.auth_env_var) {
    const char* key = std::getenv(descriptor_.auth_env_var->c_str());
    if (!key || !*key) {
      throw Error(Errc::AuthMissing, descriptor_.name + ": environment variable " +
                                         *descriptor_.auth_env_var + " is not set");
    }
    api_key_ = key;
  }
}

QueryResponse HttpBackend::send(const QueryRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(std::chrono::seconds(descriptor_.timeout_seconds));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto start = std::chrono::steady_clock::now();
  auto result = client.Post(path_, headers, serialize_chat_request(descriptor_, request),
                            "application/json");
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);

  if (!result) throw TransientError(httplib::to_string(result.error()));
  const int status = result->status;
  if (status == 429 || status >= 500) {
    throw TransientError("HTTP " + std::to_string(status));
  }
  if (status >= 400) {
    throw Error(Errc::BackendRefusal, descriptor_.name + ": HTTP " + std::to_string(status) + ": " +
                                          result->body.substr(0, 512));
  }
  auto response = parse_chat_response(result->body, descriptor_);
  response.latency_ms = elapsed.count();
  return response;
}

}  // namespace frameprobe
