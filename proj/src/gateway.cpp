#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "frameprobe/error.hpp"
#include "frameprobe/gateway.hpp"

namespace frameprobe {

using nlohmann::json;

std::string_view to_string(BackendKind k) { return k == BackendKind::mock ? "mock" : "remote_http"; }

std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::freeform: return "freeform";
    case Capability::logits: return "logits";
    case Capability::multi_image: return "multi_image";
  }
  return "freeform";
}

std::string_view to_string(WireFormat w) {
  return w == WireFormat::openai_chat ? "openai_chat" : "openai_chat_images_first";
}

std::string_view to_string(QueryMode m) {
  switch (m) {
    case QueryMode::freeform_image: return "freeform_image";
    case QueryMode::freeform_caption: return "freeform_caption";
    case QueryMode::mcqa_image: return "mcqa_image";
    case QueryMode::caption_generation: return "caption_generation";
  }
  return "freeform_image";
}

std::string_view to_string(TokenSegment s) { return s == TokenSegment::image ? "image" : "text"; }

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "mock") return BackendKind::mock;
  if (s == "remote_http") return BackendKind::remote_http;
  throw Error(Errc::ConfigError, "unknown backend kind '" + std::string(s) + "'");
}

Capability parse_capability(std::string_view s) {
  if (s == "freeform") return Capability::freeform;
  if (s == "logits") return Capability::logits;
  if (s == "multi_image") return Capability::multi_image;
  throw Error(Errc::ConfigError, "unknown capability '" + std::string(s) + "'");
}

WireFormat parse_wire_format(std::string_view s) {
  if (s == "openai_chat") return WireFormat::openai_chat;
  if (s == "openai_chat_images_first") return WireFormat::openai_chat_images_first;
  throw Error(Errc::ConfigError, "unknown wire format '" + std::string(s) + "'");
}

QueryMode parse_query_mode(std::string_view s) {
  if (s == "freeform_image") return QueryMode::freeform_image;
  if (s == "freeform_caption") return QueryMode::freeform_caption;
  if (s == "mcqa_image") return QueryMode::mcqa_image;
  if (s == "caption_generation") return QueryMode::caption_generation;
  throw Error(Errc::ParseError, "unknown query mode '" + std::string(s) + "'");
}

void BackendDescriptor::validate() const {
  auto fail = [&](const std::string& what) {
    throw Error(Errc::ConfigError, "backend '" + name + "': " + what);
  };
  if (name.empty()) throw Error(Errc::ConfigError, "backend without a name");
  if (kind == BackendKind::remote_http && (!endpoint_url || endpoint_url->empty())) {
    fail("remote_http requires endpoint_url");
  }
  if (kind == BackendKind::mock && endpoint_url) fail("mock backends take no endpoint_url");
  if (max_images_per_prompt < 1) fail("max_images_per_prompt must be >= 1");
  if (max_inflight < 1) fail("max_inflight must be >= 1");
  if (retry_limit < 0) fail("retry_limit must be >= 0");
  if (requests_per_minute < 0) fail("requests_per_minute must be >= 0");
  if (max_images_per_prompt > 1 && !has(Capability::multi_image)) {
    fail("max_images_per_prompt > 1 requires the multi_image capability");
  }
}

void QueryRequest::validate() const {
  auto fail = [&](const std::string& what) {
    throw Error(Errc::InvalidRequest, std::string(to_string(mode)) + ": " + what);
  };
  if (temperature < 0) fail("temperature must be >= 0");
  if (max_output_tokens <= 0) fail("max_output_tokens must be positive");
  switch (mode) {
    case QueryMode::mcqa_image:
      if (options.size() != 4) fail("needs exactly 4 options");
      if (images.empty()) fail("needs at least one image");
      break;
    case QueryMode::freeform_caption:
      if (!images.empty()) fail("caption queries carry no images");
      if (!options.empty()) fail("options are only valid for mcqa");
      break;
    case QueryMode::freeform_image:
    case QueryMode::caption_generation:
      if (images.empty()) fail("needs at least one image");
      if (!options.empty()) fail("options are only valid for mcqa");
      break;
  }
}

namespace {

std::string exact_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

json to_json(const QueryResponse& r) {
  json j;
  j["backend_name"] = r.backend_name;
  j["raw_text"] = r.raw_text;
  j["latency_ms"] = r.latency_ms;
  if (r.token_distributions) {
    json arr = json::array();
    for (const auto& d : *r.token_distributions) {
      arr.push_back({{"segment", to_string(d.segment)}, {"partial", d.partial}, {"probs", d.probs}});
    }
    j["token_distributions"] = std::move(arr);
  } else {
    j["token_distributions"] = nullptr;
  }
  return j;
}

QueryResponse response_from_json(const json& j) {
  QueryResponse r;
  r.backend_name = j.at("backend_name").get<std::string>();
  r.raw_text = j.at("raw_text").get<std::string>();
  r.latency_ms = j.at("latency_ms").get<std::int64_t>();
  if (j.contains("token_distributions") && !j["token_distributions"].is_null()) {
    std::vector<TokenDistribution> dists;
    for (const auto& d : j["token_distributions"]) {
      TokenDistribution t;
      t.segment = d.at("segment").get<std::string>() == "image" ? TokenSegment::image : TokenSegment::text;
      t.partial = d.at("partial").get<bool>();
      t.probs = d.at("probs").get<std::vector<double>>();
      dists.push_back(std::move(t));
    }
    r.token_distributions = std::move(dists);
  }
  return r;
}

}  // namespace

std::string cache_key(std::string_view backend_name, const QueryRequest& request) {
  json j;
  j["backend"] = backend_name;
  j["mode"] = to_string(request.mode);
  j["prompt"] = request.prompt_text;
  json images = json::array();
  for (const auto& img : request.images) images.push_back(img.digest);
  j["images"] = std::move(images);
  j["options"] = request.options;
  j["temperature"] = exact_double(request.temperature);
  j["max_output_tokens"] = request.max_output_tokens;
  j["distributions"] = request.want_distributions;
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<QueryResponse> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    return response_from_json(j.at("response"));
  } catch (const json::exception&) {
    return std::nullopt;  // a torn record is a miss
  }
}

void ResponseCache::put(const std::string& key, const QueryResponse& response) {
  std::unique_lock lock(mutex_);
  const auto path = path_for(key);
  if (std::filesystem::exists(path)) return;
  std::filesystem::create_directories(path.parent_path());
  QueryResponse stored = response;
  stored.from_cache = false;
  const json record = {{"key", key}, {"response", to_json(stored)}};
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << record.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

std::vector<std::chrono::milliseconds> backoff_schedule(const BackendDescriptor& d) {
  std::vector<std::chrono::milliseconds> out;
  double delay = static_cast<double>(d.base_backoff.count());
  for (int i = 0; i < d.retry_limit; ++i) {
    const auto capped = std::min(delay, static_cast<double>(d.max_backoff.count()));
    out.emplace_back(static_cast<std::int64_t>(capped));
    delay *= 2.0;
  }
  return out;
}

RateGate::RateGate(int max_inflight, double requests_per_minute)
    : max_inflight_(std::max(1, max_inflight)),
      per_ms_(requests_per_minute / 60000.0),
      tokens_(std::max(1, max_inflight)),
      capacity_(std::max(1, max_inflight)),
      last_refill_(std::chrono::steady_clock::now()) {}

RateGate::Ticket RateGate::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return inflight_ < max_inflight_; });
  if (per_ms_ > 0.0) {
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      const double elapsed =
          std::chrono::duration<double, std::milli>(now - last_refill_).count();
      tokens_ = std::min(capacity_, tokens_ + elapsed * per_ms_);
      last_refill_ = now;
      if (tokens_ >= 1.0) break;
      const auto wait = std::chrono::duration<double, std::milli>((1.0 - tokens_) / per_ms_);
      cv_.wait_for(lock, wait);
    }
    tokens_ -= 1.0;
  }
  ++inflight_;
  int peak = peak_.load();
  while (inflight_ > peak && !peak_.compare_exchange_weak(peak, inflight_)) {
  }
  return Ticket(this);
}

void RateGate::release() {
  {
    std::lock_guard lock(mutex_);
    --inflight_;
  }
  cv_.notify_one();
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      gate_(backend_->descriptor().max_inflight, backend_->descriptor().requests_per_minute),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  backend_->descriptor().validate();
}

void Gateway::check_capabilities(const QueryRequest& request) const {
  const auto& d = descriptor();
  const auto n = static_cast<int>(request.images.size());
  if (!d.has(Capability::freeform)) {
    throw Error(Errc::CapabilityUnsupported, d.name + " cannot generate text");
  }
  if (n > d.max_images_per_prompt) {
    throw Error(Errc::CapabilityUnsupported, d.name + " accepts at most " +
                                                 std::to_string(d.max_images_per_prompt) +
                                                 " image(s) per prompt, got " + std::to_string(n));
  }
  if (n > 1 && !d.has(Capability::multi_image)) {
    throw Error(Errc::CapabilityUnsupported, d.name + " lacks multi_image");
  }
  if (request.want_distributions && !d.has(Capability::logits)) {
    throw Error(Errc::CapabilityUnsupported, d.name + " does not expose token distributions");
  }
}

QueryResponse Gateway::complete(const QueryRequest& request) {
  request.validate();
  check_capabilities(request);
  const auto& d = descriptor();
  const std::string key = cache_key(d.name, request);

  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++cache_hits_;
      hit->from_cache = true;
      return *hit;
    }
  }

  const auto delays = backoff_schedule(d);
  std::string last_error;
  for (int attempt = 0; attempt <= d.retry_limit; ++attempt) {
    if (attempt > 0) sleeper_(delays[static_cast<std::size_t>(attempt - 1)]);
    try {
      auto ticket = gate_.acquire();
      ++backend_calls_;
      QueryResponse response = backend_->send(request);
      response.backend_name = d.name;
      response.from_cache = false;
      if (response.token_distributions) check_distributions(*response.token_distributions);
      if (cache_) cache_->put(key, response);
      return response;
    } catch (const TransientError& e) {
      last_error = e.what();
    }
  }
  throw Error(Errc::TransportFailure, d.name + " failed after " + std::to_string(d.retry_limit + 1) +
                                          " attempt(s): " + last_error);
}

std::vector<TokenDistribution> Gateway::logit_stream(QueryRequest request) {
  if (!descriptor().has(Capability::logits)) {
    throw Error(Errc::CapabilityUnsupported, descriptor().name + " does not expose token distributions");
  }
  request.want_distributions = true;
  auto response = complete(request);
  if (!response.token_distributions) {
    throw Error(Errc::BackendRefusal, descriptor().name + " returned no token distributions");
  }
  return std::move(*response.token_distributions);
}

void check_distributions(const std::vector<TokenDistribution>& dists) {
  for (std::size_t i = 0; i < dists.size(); ++i) {
    double sum = 0.0;
    for (double p : dists[i].probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw Error(Errc::InvalidDistribution, "position " + std::to_string(i) + " has a negative entry");
      }
      sum += p;
    }
    const bool ok = dists[i].partial ? sum <= 1.0 + 1e-6 : std::abs(sum - 1.0) <= 1e-6;
    if (!ok) {
      throw Error(Errc::InvalidDistribution,
                  "position " + std::to_string(i) + " sums to " + exact_double(sum));
    }
  }
}

// ---------------------------------------------------------------------------

std::string_view caption_prompt() {
  return "Your task is to generate a detailed caption of this image. You should not reveal if you "
         "know who are the characters / what movie this is from. You need to make an unbiased "
         "caption generation, writing at most a single paragraph. Start the answer with 'The image "
         "depicts'";
}

GeneratedCaption generate_caption(Gateway& gateway, const ImagePayload& image,
                                  std::vector<std::string> frame_ids) {
  QueryRequest req;
  req.mode = QueryMode::caption_generation;
  req.images = {image};
  req.prompt_text = std::string(caption_prompt());
  req.temperature = kCaptionTemperature;
  req.max_output_tokens = 256;
  req.frame_ids = std::move(frame_ids);
  auto response = gateway.complete(req);
  GeneratedCaption out;
  out.text = response.raw_text;
  auto start = out.text.find_first_not_of(" \t\r\n");
  out.conforming = start != std::string::npos &&
                   std::string_view(out.text).substr(start).starts_with(kCaptionPrefix);
  return out;
}

}  // namespace frameprobe
