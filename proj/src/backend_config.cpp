#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "frameprobe/error.hpp"
#include "frameprobe/gateway.hpp"

namespace frameprobe {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string(key) + ": " + e.what());
  }
}

template <typename T, typename Parse>
std::vector<T> expand(const std::string& value, const std::vector<T>& all, Parse parse) {
  if (value == "*") return all;
  return {parse(value)};
}

MockProfile profile_from_json(const json& j) {
  MockProfile p;
  p.seed = get_or<std::uint64_t>(j, "seed", 0);
  const std::vector<Group> groups = {Group::suspect, Group::clean, Group::excluded};
  const std::vector<FrameKind> kinds = {FrameKind::main, FrameKind::neutral};
  const std::vector<QueryMode> modes = {QueryMode::freeform_image, QueryMode::mcqa_image};
  if (j.contains("recall")) {
    for (const auto& r : j["recall"]) {
      const double prob = r.at("p").get<double>();
      for (auto g : expand(get_or<std::string>(r, "group", "*"), groups, parse_group)) {
        for (auto k : expand(get_or<std::string>(r, "kind", "*"), kinds, parse_frame_kind)) {
          for (auto m : expand(get_or<std::string>(r, "mode", "*"), modes, parse_query_mode)) {
            p.recall[{g, k, m}] = prob;
          }
        }
      }
    }
  }
  if (j.contains("caption_recall")) {
    for (const auto& [g, v] : j["caption_recall"].items()) p.caption_recall[parse_group(g)] = v.get<double>();
  }
  if (j.contains("confusion_pool")) {
    for (const auto& [genre, titles] : j["confusion_pool"].items()) {
      p.confusion_pool[genre] = titles.get<std::vector<std::string>>();
    }
  }
  if (j.contains("title_recall")) {
    for (const auto& [t, v] : j["title_recall"].items()) p.title_recall[t] = v.get<double>();
  }
  if (j.contains("mcqa_fixed_answer") && !j["mcqa_fixed_answer"].is_null()) {
    p.mcqa_fixed_answer = j["mcqa_fixed_answer"].get<std::size_t>();
  }
  if (j.contains("logit_sharpness")) {
    for (const auto& [g, v] : j["logit_sharpness"].items()) p.logit_sharpness[parse_group(g)] = v.get<double>();
  }
  p.vocab_size = get_or<int>(j, "vocab_size", p.vocab_size);
  p.image_positions_per_image = get_or<int>(j, "image_positions_per_image", p.image_positions_per_image);
  p.text_positions = get_or<int>(j, "text_positions", p.text_positions);
  p.top_k = get_or<int>(j, "top_k", p.top_k);
  p.conforming_captions = get_or<bool>(j, "conforming_captions", p.conforming_captions);
  p.latency_ms_per_image = get_or<std::int64_t>(j, "latency_ms_per_image", p.latency_ms_per_image);
  p.latency_ms_per_text = get_or<std::int64_t>(j, "latency_ms_per_text", p.latency_ms_per_text);
  p.validate();
  return p;
}

json profile_to_json(const MockProfile& p) {
  json j;
  j["seed"] = p.seed;
  j["recall"] = json::array();
  for (const auto& [key, prob] : p.recall) {
    const auto& [g, k, m] = key;
    j["recall"].push_back({{"group", to_string(g)}, {"kind", to_string(k)}, {"mode", to_string(m)}, {"p", prob}});
  }
  j["caption_recall"] = json::object();
  for (const auto& [g, v] : p.caption_recall) j["caption_recall"][std::string(to_string(g))] = v;
  j["confusion_pool"] = p.confusion_pool;
  j["title_recall"] = p.title_recall;
  j["mcqa_fixed_answer"] = p.mcqa_fixed_answer ? json(*p.mcqa_fixed_answer) : json(nullptr);
  j["logit_sharpness"] = json::object();
  for (const auto& [g, v] : p.logit_sharpness) j["logit_sharpness"][std::string(to_string(g))] = v;
  j["vocab_size"] = p.vocab_size;
  j["image_positions_per_image"] = p.image_positions_per_image;
  j["text_positions"] = p.text_positions;
  j["top_k"] = p.top_k;
  j["conforming_captions"] = p.conforming_captions;
  j["latency_ms_per_image"] = p.latency_ms_per_image;
  j["latency_ms_per_text"] = p.latency_ms_per_text;
  return j;
}

BackendDescriptor descriptor_from_json(const json& j) {
  BackendDescriptor d;
  d.name = get_or<std::string>(j, "name", "");
  d.kind = parse_backend_kind(get_or<std::string>(j, "kind", "mock"));
  if (j.contains("endpoint_url") && !j["endpoint_url"].is_null()) d.endpoint_url = j["endpoint_url"].get<std::string>();
  if (j.contains("auth_env_var") && !j["auth_env_var"].is_null()) d.auth_env_var = j["auth_env_var"].get<std::string>();
  if (j.contains("capabilities")) {
    d.capabilities.clear();
    for (const auto& c : j["capabilities"]) d.capabilities.insert(parse_capability(c.get<std::string>()));
  }
  d.max_images_per_prompt = get_or<int>(j, "max_images_per_prompt", d.max_images_per_prompt);
  d.max_inflight = get_or<int>(j, "max_inflight", d.max_inflight);
  d.retry_limit = get_or<int>(j, "retry_limit", d.retry_limit);
  d.requests_per_minute = get_or<double>(j, "requests_per_minute", d.requests_per_minute);
  d.base_backoff = std::chrono::milliseconds(get_or<std::int64_t>(j, "base_backoff_ms", d.base_backoff.count()));
  d.max_backoff = std::chrono::milliseconds(get_or<std::int64_t>(j, "max_backoff_ms", d.max_backoff.count()));
  d.timeout_seconds = get_or<int>(j, "timeout_seconds", d.timeout_seconds);
  d.model = get_or<std::string>(j, "model", "");
  d.wire_format = parse_wire_format(get_or<std::string>(j, "wire_format", "openai_chat"));
  d.structured_output = get_or<bool>(j, "structured_output", false);
  d.top_logprobs = get_or<int>(j, "top_logprobs", d.top_logprobs);
  d.validate();
  return d;
}

json descriptor_to_json(const BackendDescriptor& d) {
  json j;
  j["name"] = d.name;
  j["kind"] = to_string(d.kind);
  j["endpoint_url"] = d.endpoint_url ? json(*d.endpoint_url) : json(nullptr);
  j["auth_env_var"] = d.auth_env_var ? json(*d.auth_env_var) : json(nullptr);
  j["capabilities"] = json::array();
  for (auto c : d.capabilities) j["capabilities"].push_back(to_string(c));
  j["max_images_per_prompt"] = d.max_images_per_prompt;
  j["max_inflight"] = d.max_inflight;
  j["retry_limit"] = d.retry_limit;
  j["requests_per_minute"] = d.requests_per_minute;
  j["base_backoff_ms"] = d.base_backoff.count();
  j["max_backoff_ms"] = d.max_backoff.count();
  j["timeout_seconds"] = d.timeout_seconds;
  j["model"] = d.model;
  j["wire_format"] = to_string(d.wire_format);
  j["structured_output"] = d.structured_output;
  j["top_logprobs"] = d.top_logprobs;
  return j;
}

}  // namespace

const BackendDescriptor& BackendConfig::find(std::string_view name) const {
  for (const auto& b : backends) {
    if (b.name == name) return b;
  }
  throw Error(Errc::ConfigError, "backend '" + std::string(name) + "' is not configured");
}

MockProfile parse_mock_profile(std::string_view json_text) {
  try {
    return profile_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("mock profile: ") + e.what());
  }
}

std::string serialize_mock_profile(const MockProfile& profile) {
  return profile_to_json(profile).dump(2);
}

std::string serialize_backend_config(const BackendConfig& config) {
  json root;
  root["backends"] = json::array();
  for (const auto& d : config.backends) {
    json b = descriptor_to_json(d);
    if (auto it = config.mock_profiles.find(d.name); it != config.mock_profiles.end()) {
      b["mock_profile"] = profile_to_json(it->second);
    }
    root["backends"].push_back(std::move(b));
  }
  return root.dump(2) + "\n";
}

BackendConfig parse_backend_config(std::string_view text) {
  BackendConfig config;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigError, std::string("backend config: ") + e.what());
  }
  try {
    for (const auto& b : root.at("backends")) {
      auto d = descriptor_from_json(b);
      for (const auto& existing : config.backends) {
        if (existing.name == d.name) throw Error(Errc::ConfigError, "backend '" + d.name + "' repeats");
      }
      if (d.kind == BackendKind::mock) {
        config.mock_profiles[d.name] = profile_from_json(b.contains("mock_profile") ? b["mock_profile"] : json::object());
      }
      config.backends.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("backend config: ") + e.what());
  }
  return config;
}

BackendConfig load_backend_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read backend config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_backend_config(buf.str());
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config, std::string_view name,
                                      std::shared_ptr<const CorpusManifest> corpus) {
  const auto& d = config.find(name);
  if (d.kind == BackendKind::mock) {
    auto it = config.mock_profiles.find(d.name);
    if (it == config.mock_profiles.end()) {
      throw Error(Errc::ConfigError, "mock backend '" + d.name + "' has no mock_profile");
    }
    const auto& profile = it->second;
    if (corpus) profile.check_covers(*corpus);
    return std::make_shared<MockBackend>(d, profile, std::move(corpus));
  }
  return std::make_shared<HttpBackend>(d);
}

}  // namespace frameprobe
