#include "frameprobe/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "frameprobe/error.hpp"
#include "frameprobe/stats.hpp"

namespace frameprobe {

std::string_view to_string(PredictionMode m) {
  switch (m) {
    case PredictionMode::image: return "image";
    case PredictionMode::caption: return "caption";
    case PredictionMode::mcqa: return "mcqa";
  }
  return "image";
}

PredictionMode parse_prediction_mode(std::string_view s) {
  if (s == "image") return PredictionMode::image;
  if (s == "caption") return PredictionMode::caption;
  if (s == "mcqa") return PredictionMode::mcqa;
  throw Error(Errc::ParseError, "unknown prediction mode '" + std::string(s) + "'");
}

namespace {

std::uint64_t hash_u64(std::string_view text) {
  const std::string hex = sha256_hex(text);
  std::uint64_t v = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = hex[static_cast<std::size_t>(i)];
    v = (v << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  return v;
}

QueryRequest base_request(const ProbeContext& ctx, QueryMode mode) {
  QueryRequest req;
  req.mode = mode;
  req.temperature = kEvaluationTemperature;
  req.max_output_tokens = ctx.max_output_tokens;
  return req;
}

}  // namespace

ImagePayload load_frame_image(const ProbeContext& ctx, const Frame& frame) {
  auto payload = load_image(ctx.corpus.resolve(frame));
  if (ctx.resolution) payload = preprocess_frame(payload, *ctx.resolution);
  return payload;
}

std::vector<std::vector<const Frame*>> group_frames(const Movie& movie, const KindSet& kinds,
                                                    int frames_per_prompt) {
  if (frames_per_prompt < 1) throw Error(Errc::InvalidParam, "frames per prompt must be >= 1");
  std::vector<std::vector<const Frame*>> groups;
  for (FrameKind kind : {FrameKind::main, FrameKind::neutral}) {
    if (!kinds.contains(kind)) continue;
    std::vector<const Frame*> current;
    for (const auto& f : movie.frames) {
      if (f.kind != kind) continue;
      current.push_back(&f);
      if (static_cast<int>(current.size()) == frames_per_prompt) {
        groups.push_back(std::move(current));
        current.clear();
      }
    }
    if (!current.empty()) groups.push_back(std::move(current));
  }
  return groups;
}

void check_frames_per_prompt(const BackendDescriptor& d, int frames_per_prompt) {
  if (frames_per_prompt < 1) throw Error(Errc::InvalidParam, "frames per prompt must be >= 1");
  if (frames_per_prompt > 1 && !d.has(Capability::multi_image)) {
    throw Error(Errc::CapabilityUnsupported,
                d.name + " lacks multi_image; cannot send " + std::to_string(frames_per_prompt) + " frames");
  }
  if (frames_per_prompt > d.max_images_per_prompt) {
    throw Error(Errc::CapabilityUnsupported, d.name + " accepts at most " +
                                                 std::to_string(d.max_images_per_prompt) + " image(s)");
  }
}

std::vector<FramePrediction> run_freeform(ProbeContext& ctx, const Movie& movie,
                                          const KindSet& kinds, int frames_per_prompt) {
  check_frames_per_prompt(ctx.gateway.descriptor(), frames_per_prompt);
  std::vector<FramePrediction> out;
  for (const auto& group : group_frames(movie, kinds, frames_per_prompt)) {
    QueryRequest req = base_request(ctx, QueryMode::freeform_image);
    req.prompt_text = render_image_prompt(ctx.prompts, static_cast<int>(group.size()));
    for (const Frame* f : group) {
      req.images.push_back(load_frame_image(ctx, *f));
      req.frame_ids.push_back(f->frame_id);
    }
    const auto response = ctx.gateway.complete(req);
    const auto match = match_title(response.raw_text, movie, ctx.fuzzy_threshold);
    for (const Frame* f : group) {
      FramePrediction p;
      p.frame_id = f->frame_id;
      p.kind = f->kind;
      p.mode = PredictionMode::image;
      p.correct = match.correct();
      p.raw_text = response.raw_text;
      p.match = match;
      p.group_frame_ids = req.frame_ids;
      p.latency_ms = response.latency_ms;
      p.from_cache = response.from_cache;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<FramePrediction> run_captions(ProbeContext& ctx, const Movie& movie,
                                          const KindSet& kinds) {
  const auto groups = group_frames(movie, kinds, 1);
  for (const auto& g : groups) {
    if (g.front()->caption.empty()) {
      throw Error(Errc::MissingCaption, "frame '" + g.front()->frame_id + "' of '" + movie.title + "'");
    }
  }
  std::vector<FramePrediction> out;
  for (const auto& g : groups) {
    const Frame& f = *g.front();
    QueryRequest req = base_request(ctx, QueryMode::freeform_caption);
    req.prompt_text = render_caption_prompt(ctx.prompts, f.caption);
    req.frame_ids = {f.frame_id};
    const auto response = ctx.gateway.complete(req);
    const auto match = match_title(response.raw_text, movie, ctx.fuzzy_threshold);
    FramePrediction p;
    p.frame_id = f.frame_id;
    p.kind = f.kind;
    p.mode = PredictionMode::caption;
    p.correct = match.correct();
    p.raw_text = response.raw_text;
    p.match = match;
    p.group_frame_ids = req.frame_ids;
    p.latency_ms = response.latency_ms;
    p.from_cache = response.from_cache;
    out.push_back(std::move(p));
  }
  return out;
}

std::array<std::string, 3> build_distractors(const Movie& movie, std::span<const Movie> pool,
                                             std::uint64_t seed) {
  const std::string canon_truth = canonicalize(movie.title);
  std::set<std::string> seen{canon_truth};
  std::vector<const Movie*> eligible;
  for (const auto& candidate : pool) {
    const bool shares_genre = std::any_of(
        candidate.genre_tags.begin(), candidate.genre_tags.end(), [&](const std::string& g) {
          return std::find(movie.genre_tags.begin(), movie.genre_tags.end(), g) != movie.genre_tags.end();
        });
    if (!shares_genre) continue;
    if (!seen.insert(canonicalize(candidate.title)).second) continue;
    eligible.push_back(&candidate);
  }
  if (eligible.size() < 3) {
    throw Error(Errc::InsufficientPool, "'" + movie.title + "' has " + std::to_string(eligible.size()) +
                                            " same-genre distractor(s), need 3");
  }
  const std::uint64_t salt = hash_u64(canon_truth);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t j = i + uniform_index(rng, eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  return {eligible[0]->title, eligible[1]->title, eligible[2]->title};
}

Placement parse_placement(std::string_view s) {
  if (s == "random" || s == "randomized") return Placement::randomized();
  if (s.starts_with("fixed:") && s.size() == 7) {
    const char c = s[6];
    if (c >= '0' && c <= '3') return Placement::fixed(static_cast<std::size_t>(c - '0'));
    if (c >= 'A' && c <= 'D') return Placement::fixed(static_cast<std::size_t>(c - 'A'));
  }
  throw Error(Errc::InvalidParam, "placement must be 'random' or 'fixed:<0-3|A-D>', got '" +
                                      std::string(s) + "'");
}

std::string to_string(const Placement& p) {
  if (p.kind == Placement::Kind::randomized) return "random";
  return "fixed:" + std::to_string(p.index);
}

std::size_t truth_position(const Placement& placement, std::uint64_t seed, std::string_view frame_id) {
  if (placement.kind == Placement::Kind::fixed) {
    if (placement.index > 3) throw Error(Errc::InvalidParam, "fixed placement index must be 0..3");
    return placement.index;
  }
  std::string material = std::to_string(seed);
  material += "|placement|";
  material += frame_id;
  return static_cast<std::size_t>(hash_u64(material) % 4);
}

std::vector<FramePrediction> run_mcqa(ProbeContext& ctx, const Movie& movie, const KindSet& kinds,
                                      std::span<const Movie> pool, const Placement& placement,
                                      std::uint64_t seed) {
  const auto distractors = build_distractors(movie, pool, seed);
  std::vector<FramePrediction> out;
  for (const auto& g : group_frames(movie, kinds, 1)) {
    const Frame& f = *g.front();
    McqaOutcome outcome;
    outcome.truth_index = truth_position(placement, seed, f.frame_id);
    std::size_t next = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      outcome.options.push_back(i == outcome.truth_index ? movie.title : distractors[next++]);
    }

    QueryRequest req = base_request(ctx, QueryMode::mcqa_image);
    req.prompt_text = render_mcqa_prompt(ctx.prompts, outcome.options);
    req.options = outcome.options;
    req.images = {load_frame_image(ctx, f)};
    req.frame_ids = {f.frame_id};
    const auto response = ctx.gateway.complete(req);
    outcome.chosen = parse_mcqa(response.raw_text, outcome.options, ctx.fuzzy_threshold);

    FramePrediction p;
    p.frame_id = f.frame_id;
    p.kind = f.kind;
    p.mode = PredictionMode::mcqa;
    p.correct = outcome.chosen && *outcome.chosen == outcome.truth_index;
    p.raw_text = response.raw_text;
    p.match = std::move(outcome);
    p.group_frame_ids = req.frame_ids;
    p.latency_ms = response.latency_ms;
    p.from_cache = response.from_cache;
    out.push_back(std::move(p));
  }
  return out;
}

MovieScore accuracy_score(std::span<const FramePrediction> preds, Detector detector,
                          std::string title) {
  if (preds.empty()) throw Error(Errc::EmptyInput, "no predictions to score");
  std::size_t n_main = 0, n_neutral = 0, c_main = 0, c_neutral = 0;
  for (const auto& p : preds) {
    if (p.kind == FrameKind::main) {
      ++n_main;
      c_main += p.correct ? 1 : 0;
    } else {
      ++n_neutral;
      c_neutral += p.correct ? 1 : 0;
    }
  }
  return make_accuracy_score(std::move(title), detector, c_main, n_main, c_neutral, n_neutral);
}

MovieScore disco_score(std::span<const FramePrediction> preds, std::string title) {
  return accuracy_score(preds, Detector::disco, std::move(title));
}

MovieScore floor_disco(std::span<const FramePrediction> image_preds,
                       std::span<const FramePrediction> caption_preds,
                       FloorDenominator denominator, std::string title) {
  if (image_preds.empty()) throw Error(Errc::EmptyInput, "no image predictions");
  std::map<std::string, bool> caption_correct;
  for (const auto& p : caption_preds) caption_correct[p.frame_id] = p.correct;
  if (caption_correct.size() != image_preds.size()) {
    throw Error(Errc::KeyMismatch, "image and caption predictions cover different frames");
  }

  std::size_t n_main = 0, n_neutral = 0, c_main = 0, c_neutral = 0;
  for (const auto& p : image_preds) {
    auto it = caption_correct.find(p.frame_id);
    if (it == caption_correct.end()) {
      throw Error(Errc::KeyMismatch, "frame '" + p.frame_id + "' has no caption prediction");
    }
    const bool overlap = p.correct && it->second;
    if (overlap && denominator == FloorDenominator::surviving) continue;
    const bool counted = p.correct && !it->second;
    if (p.kind == FrameKind::main) {
      ++n_main;
      c_main += counted ? 1 : 0;
    } else {
      ++n_neutral;
      c_neutral += counted ? 1 : 0;
    }
  }
  return make_accuracy_score(std::move(title), Detector::floor_disco, c_main, n_main, c_neutral,
                             n_neutral);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Aggregate a) {
  return a == Aggregate::max_aggregate ? "max" : "min";
}

std::string_view to_string(PositionSlice s) {
  switch (s) {
    case PositionSlice::all_positions: return "all";
    case PositionSlice::image_positions: return "image";
    case PositionSlice::text_positions: return "text";
  }
  return "all";
}

Aggregate parse_aggregate(std::string_view s) {
  if (s == "max" || s == "max_aggregate") return Aggregate::max_aggregate;
  if (s == "min" || s == "min_aggregate") return Aggregate::min_aggregate;
  throw Error(Errc::InvalidParam, "unknown aggregate '" + std::string(s) + "'");
}

PositionSlice parse_position_slice(std::string_view s) {
  if (s == "all" || s == "all_positions") return PositionSlice::all_positions;
  if (s == "image" || s == "image_positions") return PositionSlice::image_positions;
  if (s == "text" || s == "text_positions") return PositionSlice::text_positions;
  throw Error(Errc::InvalidParam, "unknown position slice '" + std::string(s) + "'");
}

double renyi_entropy(std::span<const double> p, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(Errc::InvalidAlpha, "alpha must be positive and finite");
  }
  if (p.empty()) throw Error(Errc::InvalidDistribution, "empty distribution");
  long double sum = 0.0L;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(Errc::InvalidDistribution, "entries must be finite and non-negative");
    }
    sum += v;
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-6) {
    throw Error(Errc::InvalidDistribution, "entries sum to " + std::to_string(static_cast<double>(sum)));
  }

  if (alpha == 1.0) {
    long double h = 0.0L;
    for (double v : p) {
      if (v > 0.0) h -= static_cast<long double>(v) * std::log(static_cast<long double>(v));
    }
    return static_cast<double>(h);
  }
  long double power_sum = 0.0L;
  for (double v : p) {
    if (v > 0.0) power_sum += std::pow(static_cast<long double>(v), static_cast<long double>(alpha));
  }
  return static_cast<double>(std::log(power_sum) / (1.0L - static_cast<long double>(alpha)));
}

double max_renyi_k(std::span<const double> entropies, double k_percent, Aggregate direction) {
  if (entropies.empty()) throw Error(Errc::EmptyInput, "no entropies to aggregate");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw Error(Errc::InvalidParam, "k percent must lie in (0, 100]");
  }
  const auto n = entropies.size();
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(k_percent / 100.0 * static_cast<double>(n) + 1e-9)));
  std::vector<double> sorted(entropies.begin(), entropies.end());
  if (direction == Aggregate::max_aggregate) {
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), sorted.end(),
                      std::greater<>());
  } else {
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), sorted.end());
  }
  return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), 0.0) /
         static_cast<double>(m);
}

void RenyiConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(Errc::InvalidAlpha, "alpha must be positive");
  if (k_percent_grid.empty()) throw Error(Errc::InvalidParam, "k grid is empty");
  for (double k : k_percent_grid) {
    if (!(k > 0.0 && k <= 100.0)) throw Error(Errc::InvalidParam, "k grid values must lie in (0, 100]");
  }
}

std::vector<RenyiFrameResult> renyi_frames(ProbeContext& ctx, const Movie& movie,
                                           const RenyiConfig& config, const KindSet& kinds) {
  config.validate();
  if (!ctx.gateway.descriptor().has(Capability::logits)) {
    throw Error(Errc::CapabilityUnsupported,
                ctx.gateway.descriptor().name + " does not expose token distributions");
  }
  std::vector<RenyiFrameResult> out;
  for (const auto& g : group_frames(movie, kinds, 1)) {
    const Frame& f = *g.front();
    QueryRequest req = base_request(ctx, QueryMode::freeform_image);
    req.prompt_text = render_image_prompt(ctx.prompts, 1);
    req.images = {load_frame_image(ctx, f)};
    req.frame_ids = {f.frame_id};
    req.want_distributions = true;
    const auto response = ctx.gateway.complete(req);
    if (!response.token_distributions) {
      throw Error(Errc::BackendRefusal, "no token distributions for frame '" + f.frame_id + "'");
    }

    std::vector<double> entropies;
    for (const auto& d : *response.token_distributions) {
      if (config.slice == PositionSlice::image_positions && d.segment != TokenSegment::image) continue;
      if (config.slice == PositionSlice::text_positions && d.segment != TokenSegment::text) continue;
      if (d.partial) {
        if (!config.accept_partial_vectors) {
          throw Error(Errc::PartialVectorsRejected,
                      "frame '" + f.frame_id + "' returned top-k vectors only");
        }
        // Renormalize the known mass; this understates the true entropy.
        const double mass = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
        if (!(mass > 0.0)) continue;
        std::vector<double> q(d.probs);
        for (auto& v : q) v /= mass;
        entropies.push_back(renyi_entropy(q, config.alpha));
      } else {
        entropies.push_back(renyi_entropy(d.probs, config.alpha));
      }
    }
    if (entropies.empty()) {
      throw Error(Errc::EmptyInput, "frame '" + f.frame_id + "' has no positions in the " +
                                        std::string(to_string(config.slice)) + " slice");
    }

    RenyiFrameResult r;
    r.frame_id = f.frame_id;
    r.kind = f.kind;
    r.latency_ms = response.latency_ms;
    r.from_cache = response.from_cache;
    r.raw_text = response.raw_text;
    for (double k : config.k_percent_grid) {
      r.scores.push_back(-max_renyi_k(entropies, k, config.direction));
    }
    out.push_back(std::move(r));
  }
  return out;
}

MovieScore renyi_movie_score(std::span<const RenyiFrameResult> frames, const RenyiConfig& config,
                             std::string title) {
  if (frames.empty()) throw Error(Errc::EmptyInput, "no Rényi frame results");
  const std::size_t nk = config.k_percent_grid.size();
  RenyiScores rs;
  rs.k_grid = config.k_percent_grid;
  std::vector<double> sum_all(nk, 0.0), sum_main(nk, 0.0), sum_neutral(nk, 0.0);
  std::size_t n_main = 0, n_neutral = 0;
  for (const auto& f : frames) {
    if (f.scores.size() != nk) throw Error(Errc::KeyMismatch, "frame scores do not match the k grid");
    auto& bucket = f.kind == FrameKind::main ? sum_main : sum_neutral;
    (f.kind == FrameKind::main ? n_main : n_neutral) += 1;
    for (std::size_t i = 0; i < nk; ++i) {
      sum_all[i] += f.scores[i];
      bucket[i] += f.scores[i];
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < nk; ++i) {
    rs.all.push_back(sum_all[i] / static_cast<double>(frames.size()));
    rs.main.push_back(n_main ? sum_main[i] / static_cast<double>(n_main) : nan);
    rs.neutral.push_back(n_neutral ? sum_neutral[i] / static_cast<double>(n_neutral) : nan);
  }
  MovieScore s = make_accuracy_score(std::move(title), Detector::renyi, 0, n_main, 0, n_neutral);
  s.renyi_score = rs.all.back();
  s.renyi = std::move(rs);
  return s;
}

MovieScore run_renyi(ProbeContext& ctx, const Movie& movie, const RenyiConfig& config,
                     const KindSet& kinds) {
  const auto frames = renyi_frames(ctx, movie, config, kinds);
  return renyi_movie_score(frames, config, movie.title);
}

}  // namespace frameprobe
