#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "frameprobe/corpus.hpp"
#include "frameprobe/image.hpp"

namespace frameprobe {

enum class BackendKind { remote_http, mock };
enum class Capability { freeform, logits, multi_image };

/// How a remote request body is laid out. Provider quirks live here.
enum class WireFormat {
  openai_chat,              // text part first, then image parts
  openai_chat_images_first  // image parts before the text part
};

enum class QueryMode { freeform_image, freeform_caption, mcqa_image, caption_generation };

std::string_view to_string(BackendKind k);
std::string_view to_string(Capability c);
std::string_view to_string(WireFormat w);
std::string_view to_string(QueryMode m);
BackendKind parse_backend_kind(std::string_view s);
Capability parse_capability(std::string_view s);
WireFormat parse_wire_format(std::string_view s);
QueryMode parse_query_mode(std::string_view s);

struct BackendDescriptor {
  std::string name;
  BackendKind kind = BackendKind::mock;
  std::optional<std::string> endpoint_url;
  std::optional<std::string> auth_env_var;
  std::set<Capability> capabilities{Capability::freeform};
  int max_images_per_prompt = 1;
  int max_inflight = 1;
  int retry_limit = 3;
  /// 0 disables the requests-per-minute cap.
  double requests_per_minute = 0.0;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  int timeout_seconds = 120;

  // Remote-only settings.
  std::string model;
  WireFormat wire_format = WireFormat::openai_chat;
  /// Ask for a JSON object with a single `movie_title` field on free-form modes.
  bool structured_output = false;
  /// Logprob alternatives requested per position (providers commonly cap this at 5).
  int top_logprobs = 5;

  bool has(Capability c) const { return capabilities.contains(c); }
  /// Throws ConfigError on inconsistent fields.
  void validate() const;
};

struct QueryRequest {
  QueryMode mode = QueryMode::freeform_image;
  std::vector<ImagePayload> images;
  std::string prompt_text;
  std::vector<std::string> options;  // exactly 4 for mcqa_image
  double temperature = 0.0;
  int max_output_tokens = 64;
  /// Request per-position token distributions alongside the text.
  bool want_distributions = false;

  /// Provenance only: not serialized to the wire and not part of the cache key.
  std::vector<std::string> frame_ids;

  /// Throws InvalidRequest when mode, images and options disagree.
  void validate() const;
};

enum class TokenSegment { image, text };
std::string_view to_string(TokenSegment s);

struct TokenDistribution {
  std::vector<double> probs;
  /// True when only the top-k entries are known; `probs` then sums to <= 1.
  bool partial = false;
  TokenSegment segment = TokenSegment::text;
};

struct QueryResponse {
  std::string raw_text;
  std::optional<std::vector<TokenDistribution>> token_distributions;
  bool from_cache = false;
  std::int64_t latency_ms = 0;
  std::string backend_name;
};

/// Stable SHA-256 over the semantic content of a request. Images enter by
/// content digest, in order.
std::string cache_key(std::string_view backend_name, const QueryRequest& request);

/// A retryable failure (timeouts, HTTP 429/5xx). Other failures throw `Error`.
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  /// One attempt, no retries or caching. Fills `latency_ms`.
  virtual QueryResponse send(const QueryRequest& request) = 0;
};

/// Append-only, content-addressed response store: one JSON file per key.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<QueryResponse> get(const std::string& key) const;
  /// No-op when the key already exists.
  void put(const std::string& key, const QueryResponse& response);
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

/// Delays before retry 1..n. Non-decreasing and capped at `max_backoff`.
std::vector<std::chrono::milliseconds> backoff_schedule(const BackendDescriptor& d);

/// Client-side rate caps for one backend: at most `max_inflight` concurrent
/// requests and a token bucket refilled at requests_per_minute.
class RateGate {
 public:
  RateGate(int max_inflight, double requests_per_minute);

  class Ticket {
   public:
    explicit Ticket(RateGate* gate) : gate_(gate) {}
    Ticket(Ticket&& o) noexcept : gate_(std::exchange(o.gate_, nullptr)) {}
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    Ticket& operator=(Ticket&&) = delete;
    ~Ticket() {
      if (gate_) gate_->release();
    }

   private:
    RateGate* gate_;
  };

  Ticket acquire();
  int peak_inflight() const { return peak_.load(); }

 private:
  void release();

  std::mutex mutex_;
  std::condition_variable cv_;
  int max_inflight_;
  int inflight_ = 0;
  std::atomic<int> peak_{0};
  double per_ms_;
  double tokens_;
  double capacity_;
  std::chrono::steady_clock::time_point last_refill_;
};

/// Capability checks, caching, retries and rate limiting in front of a Backend.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache = nullptr);

  const BackendDescriptor& descriptor() const { return backend_->descriptor(); }

  QueryResponse complete(const QueryRequest& request);

  /// One probability vector per position, in order.
  std::vector<TokenDistribution> logit_stream(QueryRequest request);

  /// Throws CapabilityUnsupported if `request` cannot be served by this backend.
  void check_capabilities(const QueryRequest& request) const;

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

  /// Requests that reached the backend (cache hits excluded).
  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }
  const RateGate& rate_gate() const { return gate_; }

 private:
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  RateGate gate_;
  Sleeper sleeper_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

/// Verifies that full vectors sum to 1 +- 1e-6 and partial ones to <= 1.
void check_distributions(const std::vector<TokenDistribution>& dists);

// ---------------------------------------------------------------------------
// Caption generation

inline constexpr std::string_view kCaptionPrefix = "The image depicts";
inline constexpr double kCaptionTemperature = 0.1;
inline constexpr double kEvaluationTemperature = 0.0;

std::string_view caption_prompt();

struct GeneratedCaption {
  std::string text;
  bool conforming = false;
};

GeneratedCaption generate_caption(Gateway& gateway, const ImagePayload& image,
                                  std::vector<std::string> frame_ids = {});

// ---------------------------------------------------------------------------
// Offline mock backend

struct MockProfile {
  std::uint64_t seed = 0;
  /// Probability of naming the true title, per (group, frame kind, mode).
  std::map<std::tuple<Group, FrameKind, QueryMode>, double> recall;
  /// Wrong answers, by genre tag.
  std::map<std::string, std::vector<std::string>> confusion_pool;
  /// Recall for caption-only queries, per group.
  std::map<Group, double> caption_recall;
  /// Per-title recall overriding `recall` for image modes.
  std::map<std::string, double> title_recall;
  /// When set, MCQA answers always name this option index (selection bias).
  std::optional<std::size_t> mcqa_fixed_answer;

  /// Softmax sharpness of emitted token distributions per group; higher means
  /// lower entropy.
  std::map<Group, double> logit_sharpness;
  int vocab_size = 32;
  int image_positions_per_image = 4;
  int text_positions = 4;
  /// Keep only the top-k entries of each vector (0 keeps the full vector).
  int top_k = 0;

  /// Generated captions start with the canonical prefix.
  bool conforming_captions = true;

  /// Simulated latency accounting.
  std::int64_t latency_ms_per_image = 250;
  std::int64_t latency_ms_per_text = 100;

  /// Throws ProfileIncomplete when probabilities fall outside [0, 1].
  void validate() const;
  /// Throws ProfileIncomplete if some genre in the corpus has no confusion pool.
  void check_covers(const CorpusManifest& manifest) const;
};

/// Deterministic uniform draw in [0, 1) from the seed, mode and frame ids.
double mock_draw(std::uint64_t seed, QueryMode mode, const std::vector<std::string>& frame_ids,
                 std::string_view salt = {});

QueryResponse mock_complete(const MockProfile& profile, const QueryRequest& request,
                            const Movie& truth);

/// Answers from a MockProfile, resolving ground truth through frame ids.
class MockBackend : public Backend {
 public:
  MockBackend(BackendDescriptor descriptor, MockProfile profile,
              std::shared_ptr<const CorpusManifest> corpus);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  QueryResponse send(const QueryRequest& request) override;
  const MockProfile& profile() const { return profile_; }

 private:
  BackendDescriptor descriptor_;
  MockProfile profile_;
  std::shared_ptr<const CorpusManifest> corpus_;
  std::map<std::string, const Movie*> by_frame_;
};

// ---------------------------------------------------------------------------
// Remote chat-completion backend

/// Request body for a chat-completion endpoint.
std::string serialize_chat_request(const BackendDescriptor& d, const QueryRequest& request);

/// Extracts the answer text and any logprob alternatives from a response body.
QueryResponse parse_chat_response(std::string_view body, const BackendDescriptor& d);

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor descriptor);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  QueryResponse send(const QueryRequest& request) override;

 private:
  BackendDescriptor descriptor_;
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Config files

struct BackendConfig {
  std::vector<BackendDescriptor> backends;
  /// Mock profiles keyed by backend name.
  std::map<std::string, MockProfile> mock_profiles;

  const BackendDescriptor& find(std::string_view name) const;
};

BackendConfig parse_backend_config(std::string_view text);
BackendConfig load_backend_config(const std::filesystem::path& path);
MockProfile parse_mock_profile(std::string_view json_text);
std::string serialize_mock_profile(const MockProfile& profile);
std::string serialize_backend_config(const BackendConfig& config);

/// Builds the backend named in the config. Mock backends need the corpus.
std::shared_ptr<Backend> make_backend(const BackendConfig& config, std::string_view name,
                                      std::shared_ptr<const CorpusManifest> corpus);

}  // namespace frameprobe
