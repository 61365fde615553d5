#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "frameprobe/corpus.hpp"
#include "frameprobe/gateway.hpp"
#include "frameprobe/matcher.hpp"
#include "frameprobe/prompts.hpp"
#include "frameprobe/scores.hpp"

namespace frameprobe {

enum class PredictionMode { image, caption, mcqa };
std::string_view to_string(PredictionMode m);
PredictionMode parse_prediction_mode(std::string_view s);

struct McqaOutcome {
  std::vector<std::string> options;
  std::size_t truth_index = 0;
  std::optional<std::size_t> chosen;
};

/// Verdict for one frame. With several frames per prompt every member of the
/// group carries the group's verdict and the same `group_frame_ids`.
struct FramePrediction {
  std::string frame_id;
  FrameKind kind = FrameKind::main;
  PredictionMode mode = PredictionMode::image;
  bool correct = false;
  std::string raw_text;
  std::variant<MatchOutcome, McqaOutcome> match;
  std::vector<std::string> group_frame_ids;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
};

/// Everything a detector run needs besides the movie itself.
struct ProbeContext {
  Gateway& gateway;
  const CorpusManifest& corpus;
  const PromptTemplates& prompts;
  std::optional<ResizeTarget> resolution;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  int max_output_tokens = 64;
};

using KindSet = std::set<FrameKind>;
inline const KindSet kAllKinds{FrameKind::main, FrameKind::neutral};

/// Loads a frame's image from the corpus and applies the resolution target.
ImagePayload load_frame_image(const ProbeContext& ctx, const Frame& frame);

/// Frames of the requested kinds in manifest order, main before neutral,
/// split into prompt groups of at most `frames_per_prompt`.
std::vector<std::vector<const Frame*>> group_frames(const Movie& movie, const KindSet& kinds,
                                                    int frames_per_prompt);

/// Checks a frames-per-prompt value against a backend before any query is issued.
void check_frames_per_prompt(const BackendDescriptor& d, int frames_per_prompt);

std::vector<FramePrediction> run_freeform(ProbeContext& ctx, const Movie& movie,
                                          const KindSet& kinds, int frames_per_prompt = 1);

std::vector<FramePrediction> run_captions(ProbeContext& ctx, const Movie& movie,
                                          const KindSet& kinds);

/// Three same-genre titles for `movie`, drawn deterministically from `pool`.
std::array<std::string, 3> build_distractors(const Movie& movie, std::span<const Movie> pool,
                                             std::uint64_t seed);

struct Placement {
  enum class Kind { randomized, fixed } kind = Kind::randomized;
  std::size_t index = 0;

  static Placement randomized() { return {}; }
  static Placement fixed(std::size_t i) { return {Kind::fixed, i}; }
};

/// Accepts "random", "fixed:0".."fixed:3" or "fixed:A".."fixed:D".
Placement parse_placement(std::string_view s);
std::string to_string(const Placement& p);

/// Truth position for one frame under a placement policy.
std::size_t truth_position(const Placement& placement, std::uint64_t seed, std::string_view frame_id);

std::vector<FramePrediction> run_mcqa(ProbeContext& ctx, const Movie& movie, const KindSet& kinds,
                                      std::span<const Movie> pool, const Placement& placement,
                                      std::uint64_t seed);

/// Per-kind and weighted accuracy of a prediction list.
MovieScore accuracy_score(std::span<const FramePrediction> preds, Detector detector,
                          std::string title = {});

MovieScore disco_score(std::span<const FramePrediction> preds, std::string title = {});

enum class FloorDenominator {
  all_frames,  // numerator loses overlapping frames, denominator unchanged
  surviving    // overlapping frames leave both numerator and denominator
};

MovieScore floor_disco(std::span<const FramePrediction> image_preds,
                       std::span<const FramePrediction> caption_preds,
                       FloorDenominator denominator = FloorDenominator::all_frames,
                       std::string title = {});

// ---------------------------------------------------------------------------
// Rényi entropy baseline

/// H_alpha(p) = ln(sum p_i^alpha) / (1 - alpha), natural log. alpha == 1 gives
/// Shannon entropy.
double renyi_entropy(std::span<const double> p, double alpha);

enum class Aggregate { max_aggregate, min_aggregate };
enum class PositionSlice { all_positions, image_positions, text_positions };

std::string_view to_string(Aggregate a);
std::string_view to_string(PositionSlice s);
Aggregate parse_aggregate(std::string_view s);
PositionSlice parse_position_slice(std::string_view s);

/// Mean of the max(1, floor(k% * n)) largest (or smallest) entropies.
double max_renyi_k(std::span<const double> entropies, double k_percent, Aggregate direction);

struct RenyiConfig {
  double alpha = 0.5;
  std::vector<double> k_percent_grid{5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  PositionSlice slice = PositionSlice::all_positions;
  Aggregate direction = Aggregate::max_aggregate;
  bool accept_partial_vectors = false;

  void validate() const;
};

struct RenyiFrameResult {
  std::string frame_id;
  FrameKind kind = FrameKind::main;
  /// Membership score (negated aggregate) per grid k.
  std::vector<double> scores;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
  std::string raw_text;
};

/// Per-frame Rényi scores; the building block of `run_renyi`.
std::vector<RenyiFrameResult> renyi_frames(ProbeContext& ctx, const Movie& movie,
                                           const RenyiConfig& config, const KindSet& kinds = kAllKinds);

/// Per-movie score per k = mean over frames. `renyi_score` holds the value at
/// the last grid k until a k is selected downstream.
MovieScore renyi_movie_score(std::span<const RenyiFrameResult> frames, const RenyiConfig& config,
                             std::string title);

MovieScore run_renyi(ProbeContext& ctx, const Movie& movie, const RenyiConfig& config,
                     const KindSet& kinds = kAllKinds);

}  // namespace frameprobe
